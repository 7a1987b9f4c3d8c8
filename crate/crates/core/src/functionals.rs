//! Scalar diagnostics of a field: conserved quantities, weighted amplitudes,
//! discrete Sobolev norms, space-time mixed norms and the difference energy.
//!
//! Gradient terms use the quadratic form of the discrete Laplacian,
//! `‖∇u‖² = -⟨Δu, u⟩`, written in symmetrized variables `v = r^{(n-1)/2} u`:
//!
//! ```text
//! ‖∇u‖² = |S^{n-1}| dr [ Σ_edges |v_{j+1} - v_j|²/dr² + Σ_j (c_n + ℓ²) |v_j|²/r_j² ]
//! ```
//!
//! with zero wall values. This is the energy conserved exactly by the linear
//! Crank–Nicolson step.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{FieldState, ModelParams, Representation};
use crate::error::{Error, Result};
use crate::operators::{inner_product, modulus_power, power_nonlinearity, LaplacianOp};

/// Fraction of `r_max` where the outer validity shell begins.
pub const OUTER_SHELL_START: f64 = 0.9;

/// Outer-shell mass fraction above which a sample is past the validity horizon.
pub const HORIZON_MASS_FRACTION: f64 = 1e-6;

/// `∫ |u|² dx`.
pub fn mass(state: &FieldState) -> f64 {
    inner_product(state, state).re
}

/// `‖∇u‖²_{L²}` through the quadratic form of the discrete Laplacian.
pub fn gradient_norm_sq(state: &FieldState) -> f64 {
    let modes = state.to_modes();
    let d = &state.domain;
    let nr = d.num_radial;
    let c = d.params.symmetrization_constant();
    let area = d.params.sphere_area();
    let mut total = 0.0;
    for (a, row) in modes.values.chunks(nr).enumerate() {
        let shift = c + d.angular_eigenvalue(a);
        let mut edges = 0.0;
        let mut prev = Complex64::new(0.0, 0.0);
        let mut potential = 0.0;
        for ((u, s), r) in row.iter().zip(&d.sym_factor).zip(&d.nodes) {
            let v = u * s;
            edges += (v - prev).norm_sqr();
            potential += shift * v.norm_sqr() / (r * r);
            prev = v;
        }
        edges += prev.norm_sqr();
        total += edges / d.dr + potential * d.dr;
    }
    area * total
}

/// `∫ |u|^{p+1} dx`.
pub fn power_integral(state: &FieldState, exponent: f64) -> f64 {
    let pts = state.to_points();
    let d = &state.domain;
    let nr = d.num_radial;
    let m = d.num_angular as f64;
    pts.values
        .chunks(nr)
        .map(|row| {
            row.iter()
                .zip(&d.quad_weights)
                .map(|(u, w)| w * modulus_power(*u, exponent))
                .sum::<f64>()
        })
        .sum::<f64>()
        / m
}

/// `E(u) = ½ ∫ |∇u|² + 1/(p+1) ∫ |u|^{p+1}`.
pub fn energy(params: &ModelParams, state: &FieldState) -> f64 {
    0.5 * gradient_norm_sq(state) + power_integral(state, params.p + 1.0) / (params.p + 1.0)
}

/// Kinetic part only; the energy of the linear flow.
pub fn linear_energy(state: &FieldState) -> f64 {
    0.5 * gradient_norm_sq(state)
}

/// `sup |u|`.
pub fn linf(state: &FieldState) -> f64 {
    state.to_points().values.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `sup r^{n/2-1} |u|`.
pub fn sup_weighted_amp(state: &FieldState) -> f64 {
    let pts = state.to_points();
    let d = &state.domain;
    let e = 0.5 * d.params.n as f64 - 1.0;
    let weights: Vec<f64> = d.nodes.iter().map(|r| r.powf(e)).collect();
    pts.values
        .chunks(d.num_radial)
        .flat_map(|row| row.iter().zip(&weights).map(|(u, w)| w * u.norm()))
        .fold(0.0, f64::max)
}

/// `sup_j r_j^{n/2-1} |u_j| / ‖∇u‖`, the quotient bounded by the Strauss
/// inequality for radial fields. The zero field is reported as
/// [`Error::Degenerate`].
pub fn strauss_ratio(state: &FieldState) -> Result<f64> {
    if !state.is_radial() {
        return Err(Error::NotRadial);
    }
    let grad = gradient_norm_sq(state).sqrt();
    let amp = sup_weighted_amp(state);
    if grad == 0.0 {
        return Err(Error::Degenerate("strauss_ratio"));
    }
    Ok(amp / grad)
}

/// Sharp constant of the radial Strauss inequality on `|x| > 1` in three
/// dimensions: `|u(r)|² ≤ (∫_r^∞ s^{-2} ds)(∫ |u'|² s² ds)`, i.e.
/// `r^{1/2} |u(r)| ≤ ‖∇u‖ / √(4π)`.
pub fn strauss_constant_3d() -> f64 {
    1.0 / (4.0 * std::f64::consts::PI).sqrt()
}

/// `∫ |x|² |u|² dx`.
pub fn weighted_mass(state: &FieldState) -> f64 {
    let pts = state.to_points();
    let d = &state.domain;
    let m = d.num_angular as f64;
    pts.values
        .chunks(d.num_radial)
        .map(|row| {
            row.iter()
                .zip(&d.quad_weights)
                .zip(&d.nodes)
                .map(|((u, w), r)| w * r * r * u.norm_sqr())
                .sum::<f64>()
        })
        .sum::<f64>()
        / m
}

/// Pseudoconformal energy
/// `E₁(t) = ∫ ⅛ |(x + 2it∇)u|² + t²/(p+1) |u|^{p+1} dx`.
///
/// This equals `|S^{n-1}| ℰ(-1/t)` for the cone energy whose potential term
/// carries the `(-T)^ν` weight of the transformed equation, which is the
/// weighting under which `ℰ` is nonincreasing.
///
/// Uses `⅛|(x + 2it∇)u|² = ½ |t u_r - i (r/2) u|²` on grid edges in
/// symmetrized variables (edge midpoint radius, edge-averaged field), plus
/// the `t² c_n |v|²/r²` term of the Dirichlet form. At `t = 0` it reduces to
/// an edge quadrature of `⅛ ‖x u‖²`.
pub fn pseudoconformal_energy(params: &ModelParams, state: &FieldState) -> Result<f64> {
    if !state.is_radial() {
        return Err(Error::NotRadial);
    }
    let t = state.time;
    if t < 0.0 {
        return Err(Error::OutOfRange(format!(
            "pseudoconformal energy needs t >= 0, got {t}"
        )));
    }
    let d = &state.domain;
    let c = params.symmetrization_constant();
    let dr = d.dr;
    let n = d.num_radial;
    let v: Vec<Complex64> = state.values.iter().zip(&d.sym_factor).map(|(u, s)| u * s).collect();
    let i = Complex64::new(0.0, 1.0);
    let mut edges = 0.0;
    for j in 0..=n {
        let left = if j > 0 { v[j - 1] } else { Complex64::new(0.0, 0.0) };
        let right = if j < n { v[j] } else { Complex64::new(0.0, 0.0) };
        let r_mid = params.r_inner + (j as f64 + 0.5) * dr;
        let z = t * (right - left) / dr - i * (0.5 * r_mid) * 0.5 * (left + right);
        edges += z.norm_sqr();
    }
    let centrifugal: f64 = v.iter().zip(&d.nodes).map(|(z, r)| c * z.norm_sqr() / (r * r)).sum();
    let kinetic = 0.5 * params.sphere_area() * dr * (edges + t * t * centrifugal);
    let potential = if t > 0.0 {
        t * t / (params.p + 1.0) * power_integral(state, params.p + 1.0)
    } else {
        0.0
    };
    Ok(kinetic + potential)
}

/// Discrete `H^k` norm, `‖u‖²_{H^k} = Σ_{i≤k} ⟨(-Δ)^i u, u⟩`, for `k ≤ 4`.
/// Odd orders use the quadratic form of the intermediate power.
pub fn sobolev_norm(state: &FieldState, k: usize) -> Result<f64> {
    Ok(sobolev_components(state, k)?.iter().sum::<f64>().max(0.0).sqrt())
}

/// The terms `⟨(-Δ)^i u, u⟩`, `i = 0..=k`.
pub fn sobolev_components(state: &FieldState, k: usize) -> Result<Vec<f64>> {
    if k > 4 {
        return Err(Error::OutOfRange(format!("Sobolev order {k} not in 0..=4")));
    }
    let op = LaplacianOp::new(&state.domain);
    let mut out = Vec::with_capacity(k + 1);
    // `power` holds Δ^{⌊i/2⌋} u.
    let mut power = state.clone();
    for i in 0..=k {
        if i % 2 == 0 {
            if i > 0 {
                power = op.apply(&power)?;
            }
            out.push(mass(&power));
        } else {
            out.push(gradient_norm_sq(&power));
        }
    }
    Ok(out)
}

/// Mass fraction in `[0.9 r_max, r_max]`; zero for the zero field.
pub fn outer_mass_fraction(state: &FieldState) -> f64 {
    let pts = state.to_points();
    let d = &state.domain;
    let start = d.shell_start(OUTER_SHELL_START);
    let mut shell = 0.0;
    let mut total = 0.0;
    for row in pts.values.chunks(d.num_radial) {
        for (j, (u, w)) in row.iter().zip(&d.quad_weights).enumerate() {
            let m = w * u.norm_sqr();
            total += m;
            if j >= start {
                shell += m;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        shell / total
    }
}

/// One sampled time's diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
    /// Pseudoconformal energy; NaN for non-radial fields.
    pub pc_energy: f64,
    /// NaN when the quotient is 0/0 or the field is not radial.
    pub strauss_ratio: f64,
    pub sup_weighted_amp: f64,
    pub h0: f64,
    pub h1: f64,
    pub h2: f64,
    pub h4: f64,
    pub linf: f64,
    pub outer_mass_fraction: f64,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl DiagnosticsRecord {
    pub fn compute(params: &ModelParams, state: &FieldState) -> Result<Self> {
        let mut flags = Vec::new();
        let strauss = match strauss_ratio(state) {
            Ok(v) => v,
            Err(Error::Degenerate(_)) => {
                flags.push("strauss_ratio: 0/0".to_string());
                f64::NAN
            }
            Err(Error::NotRadial) => f64::NAN,
            Err(e) => return Err(e),
        };
        let pc = if state.is_radial() && state.time >= 0.0 {
            pseudoconformal_energy(params, state)?
        } else {
            f64::NAN
        };
        let h = sobolev_components(state, 4)?;
        let partial = |k: usize| h[..=k].iter().sum::<f64>().max(0.0).sqrt();
        let outer = outer_mass_fraction(state);
        let valid = outer < HORIZON_MASS_FRACTION && state.is_finite();
        Ok(Self {
            time: state.time,
            mass: h[0],
            energy: energy(params, state),
            pc_energy: pc,
            strauss_ratio: strauss,
            sup_weighted_amp: sup_weighted_amp(state),
            h0: partial(0),
            h1: partial(1),
            h2: partial(2),
            h4: partial(4),
            linf: linf(state),
            outer_mass_fraction: outer,
            valid,
            flags,
        })
    }

    /// Sobolev norm of order `k ∈ {0, 1, 2, 4}`.
    pub fn sobolev(&self, k: usize) -> Option<f64> {
        match k {
            0 => Some(self.h0),
            1 => Some(self.h1),
            2 => Some(self.h2),
            4 => Some(self.h4),
            _ => None,
        }
    }
}

/// Selects a member of the `X^{q,r;N}` family over a time interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedNormSpec {
    /// Time exponent; `f64::INFINITY` for the sup norm.
    pub q: f64,
    /// Space exponent; `f64::INFINITY` allowed.
    pub r: f64,
    /// Number of time derivatives (0 or 1).
    pub order: usize,
    pub interval: (f64, f64),
    /// Whether `∂_t u` is evaluated with the power nonlinearity (`true`) or for
    /// the linear flow.
    pub nonlinear: bool,
}

impl MixedNormSpec {
    pub fn new(q: f64, r: f64, order: usize, interval: (f64, f64)) -> Self {
        Self {
            q,
            r,
            order,
            interval,
            nonlinear: false,
        }
    }

    pub fn nonlinear(mut self, yes: bool) -> Self {
        self.nonlinear = yes;
        self
    }
}

/// `(∫ |u|^r dx)^{1/r}`, or `sup |u|` for `r = ∞`.
pub fn lebesgue_norm(state: &FieldState, r: f64) -> f64 {
    if r.is_infinite() {
        return linf(state);
    }
    power_integral(state, r).powf(1.0 / r)
}

/// `∂_t u = i (Δu - f(u))`, from `i u_t + Δu = f(u)`.
pub fn time_derivative(params: &ModelParams, state: &FieldState, nonlinear: bool) -> Result<FieldState> {
    let op = LaplacianOp::new(&state.domain);
    let mut lap = op.apply(state)?;
    lap.convert(Representation::AngularPoints);
    let pts = state.to_points();
    let i = Complex64::new(0.0, 1.0);
    for (l, u) in lap.values.iter_mut().zip(&pts.values) {
        let f = if nonlinear {
            power_nonlinearity(params.p, *u)
        } else {
            Complex64::new(0.0, 0.0)
        };
        *l = i * (*l - f);
    }
    Ok(lap)
}

/// `‖u‖_{X^{q,r;N}}` over the spec's interval from a uniformly sampled
/// trajectory. For `N = 1` this is `‖∂_t u‖_{L^q L^r} + ‖u‖_{L^q W^{2,r}}`
/// with `‖u‖_{W^{2,r}} = ‖u‖_{L^r} + ‖Δu‖_{L^r}`.
pub fn mixed_norm(trajectory: &[FieldState], spec: &MixedNormSpec, params: &ModelParams) -> Result<f64> {
    let (t0, t1) = spec.interval;
    if !(spec.q >= 2.0) || !(spec.r >= 2.0) {
        return Err(Error::OutOfRange(format!(
            "exponents (q, r) = ({}, {}) must lie in [2, ∞]",
            spec.q, spec.r
        )));
    }
    if spec.order > 1 {
        return Err(Error::OutOfRange(format!(
            "time-derivative order {} not supported (max 1)",
            spec.order
        )));
    }
    if !(t1 >= t0) {
        return Err(Error::OutOfRange(format!("empty interval [{t0}, {t1}]")));
    }
    let slack = 1e-9 * (1.0 + t1.abs());
    let samples: Vec<&FieldState> = trajectory
        .iter()
        .filter(|s| s.time >= t0 - slack && s.time <= t1 + slack)
        .collect();
    if samples.is_empty() {
        return Err(Error::InsufficientData(
            "no trajectory samples inside the interval".into(),
        ));
    }
    let times: Vec<f64> = samples.iter().map(|s| s.time).collect();
    if times.len() > 2 {
        let h = times[1] - times[0];
        for w in times.windows(2) {
            if ((w[1] - w[0]) - h).abs() > 1e-6 * h.abs().max(1e-300) {
                return Err(Error::InsufficientData("trajectory is not uniformly sampled".into()));
            }
        }
    }
    let op = LaplacianOp::new(&samples[0].domain);
    let mut series: Vec<Vec<f64>> = Vec::new();
    if spec.order == 0 {
        series.push(samples.iter().map(|s| lebesgue_norm(s, spec.r)).collect());
    } else {
        let mut dt_norms = Vec::with_capacity(samples.len());
        let mut w2_norms = Vec::with_capacity(samples.len());
        for s in &samples {
            let ut = time_derivative(params, s, spec.nonlinear)?;
            dt_norms.push(lebesgue_norm(&ut, spec.r));
            let lap = op.apply(s)?;
            w2_norms.push(lebesgue_norm(s, spec.r) + lebesgue_norm(&lap, spec.r));
        }
        series.push(dt_norms);
        series.push(w2_norms);
    }
    Ok(series.iter().map(|s| time_norm(&times, s, spec.q)).sum())
}

/// `L^q` norm in time of a sampled series by the trapezoid rule (`sup` for `q = ∞`).
pub fn time_norm(times: &[f64], values: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        return values.iter().copied().fold(0.0, f64::max);
    }
    let integral: f64 = times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0].powf(q) + v[1].powf(q)))
        .sum();
    integral.powf(1.0 / q)
}

/// Result of [`check_admissible`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admissibility {
    pub admissible: bool,
    pub endpoint: bool,
}

/// `2/q + n/r = n/2` within `1e-12`; the endpoint is `(2, 2n/(n-2))`.
pub fn check_admissible(n: usize, q: f64, r: f64) -> Admissibility {
    let nf = n as f64;
    let inv = |x: f64| if x.is_infinite() { 0.0 } else { 1.0 / x };
    let in_range = q >= 2.0 && r >= 2.0;
    let admissible = in_range && (2.0 * inv(q) + nf * inv(r) - 0.5 * nf).abs() < 1e-12;
    let endpoint = admissible && n > 2 && q == 2.0 && (r - 2.0 * nf / (nf - 2.0)).abs() < 1e-12;
    Admissibility { admissible, endpoint }
}

/// Difference energy of two states sampled at the same time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityEnergy {
    /// `E(w)` with `w = v - u`.
    pub energy: f64,
    /// `‖w‖²_{L²}`.
    pub mass: f64,
}

pub fn stability_energy(params: &ModelParams, u: &FieldState, v: &FieldState) -> Result<StabilityEnergy> {
    if !u.same_domain(v) {
        return Err(Error::DomainMismatch);
    }
    if (u.time - v.time).abs() > 1e-9 * (1.0 + u.time.abs()) {
        return Err(Error::TimeMismatch(u.time, v.time));
    }
    let w = v.difference(u)?;
    Ok(StabilityEnergy {
        energy: energy(params, &w),
        mass: mass(&w),
    })
}
