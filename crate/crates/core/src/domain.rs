//! Problem parameters, the truncated exterior grid and field storage.
//!
//! The exterior domain `{1 < |x| < r_max}` is discretized by a uniform radial
//! grid of interior nodes; the field is implicitly zero on both walls. Radial
//! runs carry a single angular sample. In dimension two a field may instead
//! carry `num_angular` equispaced angular points (or the matching Fourier
//! modes).

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest radial node count accepted by [`build_domain`]. Three nodes are
/// the minimum for the quadratic boundary-trace extrapolation.
pub const MIN_RADIAL_NODES: usize = 3;

/// Physical problem description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Spatial dimension.
    pub n: usize,
    /// Power of the nonlinearity `|u|^{p-1} u`.
    pub p: f64,
    /// Radius of the excluded ball. Always 1.
    pub r_inner: f64,
    /// Radius of the artificial outer wall.
    pub r_max: f64,
    /// Regularity index `floor(n/2) + 1`.
    pub m_smooth: usize,
}

impl ModelParams {
    pub fn new(n: usize, p: f64, r_max: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams(format!("dimension n = {n} must be >= 2")));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidParams(format!("power p = {p} must be > 1")));
        }
        if !(r_max > 1.0) || !r_max.is_finite() {
            return Err(Error::InvalidParams(format!("r_max = {r_max} must be > 1")));
        }
        Ok(Self {
            n,
            p,
            r_inner: 1.0,
            r_max,
            m_smooth: n / 2 + 1,
        })
    }

    /// Re-checks the invariants of a value that was deserialized or built by hand.
    pub fn validate(&self) -> Result<()> {
        let fresh = Self::new(self.n, self.p, self.r_max)?;
        if self.r_inner != 1.0 {
            return Err(Error::InvalidParams("r_inner must be 1".into()));
        }
        if self.m_smooth != fresh.m_smooth {
            return Err(Error::InvalidParams(format!(
                "m_smooth = {} but floor(n/2)+1 = {}",
                self.m_smooth, fresh.m_smooth
            )));
        }
        Ok(())
    }

    /// `(n-1)(n-3)/4`, the inverse-square coefficient produced by the
    /// substitution `v = r^{(n-1)/2} u`.
    pub fn symmetrization_constant(&self) -> f64 {
        let n = self.n as f64;
        (n - 1.0) * (n - 3.0) / 4.0
    }

    /// Surface area of the unit sphere `S^{n-1}`.
    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.n)
    }
}

/// Surface area of `S^{n-1}` via `|S^{k+1}| = 2π/k · |S^{k-1}|`.
pub fn sphere_area(n: usize) -> f64 {
    let (mut area, mut dim) = if n.is_multiple_of(2) { (2.0 * PI, 2) } else { (2.0, 1) };
    while dim < n {
        area *= 2.0 * PI / dim as f64;
        dim += 2;
    }
    area
}

/// Uniform grid on `(1, r_max)` with quadrature against `r^{n-1} dr`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscDomain {
    pub params: ModelParams,
    pub num_radial: usize,
    pub dr: f64,
    /// Interior radii `1 + (j+1) dr`, `j = 0..num_radial`.
    pub nodes: Vec<f64>,
    /// Trapezoid weights `|S^{n-1}| r_j^{n-1} dr` (angular measure included).
    pub quad_weights: Vec<f64>,
    /// Trapezoid weights of the two wall nodes, used only when integrating
    /// functions that do not vanish on the walls.
    pub wall_weights: [f64; 2],
    pub num_angular: usize,
    /// `r_j^{(n-1)/2}`, the factor between physical and symmetrized variables.
    pub sym_factor: Vec<f64>,
}

/// Builds the grid. `num_angular` must be 1 unless `n = 2`, where it must be
/// a power of two.
pub fn build_domain(params: ModelParams, num_radial: usize, num_angular: usize) -> Result<Arc<DiscDomain>> {
    params.validate()?;
    if num_radial < MIN_RADIAL_NODES {
        return Err(Error::InvalidGrid(format!(
            "num_radial = {num_radial} is below the minimum {MIN_RADIAL_NODES}"
        )));
    }
    if num_angular == 0 {
        return Err(Error::InvalidGrid("num_angular must be >= 1".into()));
    }
    if num_angular > 1 {
        if params.n != 2 {
            return Err(Error::InvalidGrid(format!(
                "angular resolution is only supported for n = 2 (got n = {})",
                params.n
            )));
        }
        if !num_angular.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "num_angular = {num_angular} is not a power of two"
            )));
        }
    }
    let dr = (params.r_max - params.r_inner) / (num_radial + 1) as f64;
    let area = params.sphere_area();
    let power = params.n as i32 - 1;
    let nodes: Vec<f64> = (0..num_radial).map(|j| params.r_inner + (j + 1) as f64 * dr).collect();
    let quad_weights = nodes.iter().map(|r| area * r.powi(power) * dr).collect();
    let sym_factor = nodes.iter().map(|r| r.powf(0.5 * (params.n as f64 - 1.0))).collect();
    let wall_weights = [
        0.5 * area * params.r_inner.powi(power) * dr,
        0.5 * area * params.r_max.powi(power) * dr,
    ];
    Ok(Arc::new(DiscDomain {
        params,
        num_radial,
        dr,
        nodes,
        quad_weights,
        wall_weights,
        num_angular,
        sym_factor,
    }))
}

impl DiscDomain {
    /// Total number of stored samples.
    pub fn len(&self) -> usize {
        self.num_radial * self.num_angular
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_radial(&self) -> bool {
        self.num_angular == 1
    }

    /// Composite trapezoid rule for `∫_{1<|x|<r_max} f(|x|) dx`, including
    /// the wall nodes.
    pub fn integrate_radial(&self, f: impl Fn(f64) -> f64) -> f64 {
        let interior: f64 = self.nodes.iter().zip(&self.quad_weights).map(|(&r, &w)| w * f(r)).sum();
        interior + self.wall_weights[0] * f(self.params.r_inner) + self.wall_weights[1] * f(self.params.r_max)
    }

    /// Volume of the truncated shell, by quadrature.
    pub fn volume(&self) -> f64 {
        self.integrate_radial(|_| 1.0)
    }

    /// Angular position of collocation point `a`.
    pub fn angle(&self, a: usize) -> f64 {
        2.0 * PI * a as f64 / self.num_angular as f64
    }

    /// Signed Fourier mode number stored in slot `a` (FFT ordering).
    pub fn mode_number(&self, a: usize) -> i64 {
        let m = self.num_angular as i64;
        let a = a as i64;
        if a < (m + 1) / 2 {
            a
        } else {
            a - m
        }
    }

    /// Eigenvalue of `-∂_θ²` for the mode in slot `a`.
    pub fn angular_eigenvalue(&self, a: usize) -> f64 {
        let l = self.mode_number(a) as f64;
        l * l
    }

    /// Index of the first node with `r >= fraction * r_max`.
    pub fn shell_start(&self, fraction: f64) -> usize {
        let cut = fraction * self.params.r_max;
        self.nodes.partition_point(|&r| r < cut)
    }
}

/// Layout of the angular index of a [`FieldState`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    /// Fourier coefficients in `θ` (FFT ordering, normalized by `1/M`).
    AngularModes,
    /// Values at the equispaced angles `2π a / M`.
    AngularPoints,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::AngularModes => "angular-modes",
            Representation::AngularPoints => "angular-points",
        }
    }
}

/// Complex field sampled on a [`DiscDomain`] at one instant.
#[derive(Clone, Debug)]
pub struct FieldState {
    pub domain: Arc<DiscDomain>,
    pub time: f64,
    /// Row-major `(num_angular, num_radial)`.
    pub values: Vec<Complex64>,
    pub representation: Representation,
}

impl FieldState {
    pub fn zeros(domain: &Arc<DiscDomain>, time: f64) -> Self {
        Self {
            domain: Arc::clone(domain),
            time,
            values: vec![Complex64::new(0.0, 0.0); domain.len()],
            representation: Representation::AngularPoints,
        }
    }

    pub fn from_values(
        domain: &Arc<DiscDomain>,
        time: f64,
        values: Vec<Complex64>,
        representation: Representation,
    ) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                domain.len(),
                values.len()
            )));
        }
        Ok(Self {
            domain: Arc::clone(domain),
            time,
            values,
            representation,
        })
    }

    pub fn num_radial(&self) -> usize {
        self.domain.num_radial
    }

    pub fn num_angular(&self) -> usize {
        self.domain.num_angular
    }

    pub fn is_radial(&self) -> bool {
        self.domain.is_radial()
    }

    /// Radial profile stored in angular slot `a`.
    pub fn row(&self, a: usize) -> &[Complex64] {
        let n = self.domain.num_radial;
        &self.values[a * n..(a + 1) * n]
    }

    pub fn row_mut(&mut self, a: usize) -> &mut [Complex64] {
        let n = self.domain.num_radial;
        &mut self.values[a * n..(a + 1) * n]
    }

    pub fn same_domain(&self, other: &FieldState) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain) || *self.domain == *other.domain
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Returns the state in mode representation. Radial states are returned
    /// unchanged apart from the tag.
    pub fn to_modes(&self) -> FieldState {
        let mut out = self.clone();
        if self.representation == Representation::AngularModes {
            return out;
        }
        out.representation = Representation::AngularModes;
        if self.num_angular() > 1 {
            angular_transform(&mut out, true);
        }
        out
    }

    pub fn to_points(&self) -> FieldState {
        let mut out = self.clone();
        if self.representation == Representation::AngularPoints {
            return out;
        }
        out.representation = Representation::AngularPoints;
        if self.num_angular() > 1 {
            angular_transform(&mut out, false);
        }
        out
    }

    /// Converts in place to the requested representation.
    pub fn convert(&mut self, target: Representation) {
        if self.representation == target {
            return;
        }
        self.representation = target;
        if self.num_angular() > 1 {
            angular_transform(self, target == Representation::AngularModes);
        }
    }

    /// `self - other` on the same domain.
    pub fn difference(&self, other: &FieldState) -> Result<FieldState> {
        if !self.same_domain(other) {
            return Err(Error::DomainMismatch);
        }
        let other = if other.representation == self.representation {
            other.clone()
        } else {
            let mut o = other.clone();
            o.convert(self.representation);
            o
        };
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(FieldState {
            domain: Arc::clone(&self.domain),
            time: self.time,
            values,
            representation: self.representation,
        })
    }

    /// `self + scale * other`.
    pub fn axpy(&self, scale: Complex64, other: &FieldState) -> Result<FieldState> {
        if !self.same_domain(other) {
            return Err(Error::DomainMismatch);
        }
        let mut other = other.clone();
        other.convert(self.representation);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(FieldState {
            domain: Arc::clone(&self.domain),
            time: self.time,
            values,
            representation: self.representation,
        })
    }

    pub fn scaled(&self, scale: Complex64) -> FieldState {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|z| *z *= scale);
        out
    }
}

fn angular_transform(state: &mut FieldState, forward: bool) {
    let m = state.num_angular();
    let nr = state.num_radial();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if forward {
        planner.plan_fft_forward(m)
    } else {
        planner.plan_fft_inverse(m)
    };
    let scale = if forward { 1.0 / m as f64 } else { 1.0 };
    let mut column = vec![Complex64::new(0.0, 0.0); m];
    for j in 0..nr {
        for (a, c) in column.iter_mut().enumerate() {
            *c = state.values[a * nr + j];
        }
        fft.process(&mut column);
        for (a, c) in column.iter().enumerate() {
            state.values[a * nr + j] = c * scale;
        }
    }
}

/// Samples a radial profile at the grid nodes (broadcast over angular points).
pub fn sample_radial(domain: &Arc<DiscDomain>, f: impl Fn(f64) -> f64) -> Result<FieldState> {
    sample_radial_complex(domain, |r| Complex64::new(f(r), 0.0))
}

pub fn sample_radial_complex(domain: &Arc<DiscDomain>, f: impl Fn(f64) -> Complex64) -> Result<FieldState> {
    let row = domain
        .nodes
        .iter()
        .map(|&r| {
            let z = f(r);
            if !(z.re.is_finite() && z.im.is_finite()) {
                let value = if z.re.is_finite() { z.im } else { z.re };
                return Err(Error::NonFiniteSample { radius: r, value });
            }
            Ok(z)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(domain.len());
    for _ in 0..domain.num_angular {
        values.extend_from_slice(&row);
    }
    FieldState::from_values(domain, 0.0, values, Representation::AngularPoints)
}

/// Samples `f(r, θ)` on the polar collocation grid.
pub fn sample_polar(domain: &Arc<DiscDomain>, f: impl Fn(f64, f64) -> Complex64) -> Result<FieldState> {
    let mut values = Vec::with_capacity(domain.len());
    for a in 0..domain.num_angular {
        let theta = domain.angle(a);
        for &r in &domain.nodes {
            let z = f(r, theta);
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFiniteSample { radius: r, value: z.re });
            }
            values.push(z);
        }
    }
    FieldState::from_values(domain, 0.0, values, Representation::AngularPoints)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, r_max: f64) -> ModelParams {
        ModelParams::new(n, 3.0, r_max).unwrap()
    }

    #[test]
    fn uniform_partition() {
        let d = build_domain(params(3, 2.0), 3, 1).unwrap();
        assert_eq!(d.dr, 0.25);
        assert_eq!(d.nodes, vec![1.25, 1.5, 1.75]);
    }

    #[test]
    fn shell_volume_by_quadrature() {
        let d = build_domain(params(3, 5.0), 4096, 1).unwrap();
        let exact = 4.0 * PI / 3.0 * (125.0 - 1.0);
        assert!((d.volume() - exact).abs() / exact < 1e-6);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(build_domain(params(2, 4.0), 32, 3).is_err());
        assert!(build_domain(params(3, 4.0), 32, 4).is_err());
        assert!(build_domain(params(2, 4.0), 2, 1).is_err());
        assert!(ModelParams::new(3, 3.0, 1.0).is_err());
        assert!(ModelParams::new(3, 1.0, 4.0).is_err());
        assert!(ModelParams::new(1, 3.0, 4.0).is_err());
        assert!(build_domain(params(2, 4.0), 32, 8).is_ok());
    }

    #[test]
    fn smoothness_index() {
        assert_eq!(params(2, 2.0).m_smooth, 2);
        assert_eq!(params(3, 2.0).m_smooth, 2);
        assert_eq!(params(4, 2.0).m_smooth, 3);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn sampling() {
        let d = build_domain(params(3, 6.0), 64, 1).unwrap();
        let z = sample_radial(&d, |_| 0.0).unwrap();
        assert!(z.values.iter().all(|v| v.norm() == 0.0));
        let g = |r: f64| (r - 1.0) * (-(r - 1.0).powi(2)).exp();
        let s = sample_radial(&d, g).unwrap();
        for (v, &r) in s.values.iter().zip(&d.nodes) {
            assert_eq!(v.re, g(r));
            assert_eq!(v.im, 0.0);
        }
        let l = 5.0;
        let s = sample_radial(&d, |r| (PI * (r - 1.0) / l).sin()).unwrap();
        for (v, &r) in s.values.iter().zip(&d.nodes) {
            assert_eq!(v.re, (PI * (r - 1.0) / l).sin());
        }
        assert_eq!(s.time, 0.0);
        assert!(sample_radial(&d, |r| 1.0 / (r - r)).is_err());
    }

    #[test]
    fn quadrature_second_order() {
        // Smooth bump compactly supported inside (1, 4).
        let bump = |r: f64| {
            let s = (r - 2.5) / 1.2;
            if s.abs() < 1.0 {
                (-1.0 / (1.0 - s * s)).exp()
            } else {
                0.0
            }
        };
        let q: Vec<f64> = [50usize, 101, 203, 407]
            .iter()
            .map(|&nr| build_domain(params(3, 4.0), nr, 1).unwrap().integrate_radial(bump))
            .collect();
        let e1 = (q[1] - q[0]).abs();
        let e2 = (q[2] - q[1]).abs();
        let e3 = (q[3] - q[2]).abs();
        let order = ((e1 / e2).log2() + (e2 / e3).log2()) / 2.0;
        assert!(order >= 1.9, "order {order}");
    }

    #[test]
    fn angular_round_trip() {
        let d = build_domain(params(2, 3.0), 16, 8).unwrap();
        let s = sample_polar(&d, |r, th| Complex64::new(r * th.cos(), (2.0 * th).sin())).unwrap();
        let back = s.to_modes().to_points();
        for (a, b) in s.values.iter().zip(&back.values) {
            assert!((a - b).norm() < 1e-14);
        }
        // cos θ lives in modes ±1 with weight 1/2 each.
        let m = sample_polar(&d, |_, th| Complex64::new(th.cos(), 0.0))
            .unwrap()
            .to_modes();
        assert!((m.row(1)[0].re - 0.5).abs() < 1e-14);
        assert!((m.row(7)[0].re - 0.5).abs() < 1e-14);
        assert!(m.row(0)[0].norm() < 1e-14);
        assert_eq!(d.mode_number(7), -1);
        assert_eq!(d.angular_eigenvalue(4), 16.0);
    }
}
