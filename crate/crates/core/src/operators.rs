//! Dirichlet Laplacian on the exterior grid and the time steppers built on it.
//!
//! Everything here works in the symmetrized variable `v = r^{(n-1)/2} u`, in
//! which the radial Laplacian of angular mode `ℓ` becomes
//! `v'' - (c_n + ℓ²)/r² v` with `c_n = (n-1)(n-3)/4`. The standard second
//! difference of that operator is a real symmetric tridiagonal matrix, so the
//! Crank–Nicolson (Cayley) step is unitary for the weighted `L²` product and
//! the discrete mass is conserved exactly.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DiscDomain, FieldState, ModelParams, Representation};
use crate::error::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Discrete Dirichlet Laplacian, one tridiagonal block per angular mode.
#[derive(Clone, Debug)]
pub struct LaplacianOp {
    pub domain: Arc<DiscDomain>,
    /// `ℓ²` for each angular slot (all zero for radial domains).
    pub angular_eigenvalues: Vec<f64>,
    pub symmetrization_constant: f64,
}

impl LaplacianOp {
    pub fn new(domain: &Arc<DiscDomain>) -> Self {
        let angular_eigenvalues = (0..domain.num_angular).map(|a| domain.angular_eigenvalue(a)).collect();
        Self {
            domain: Arc::clone(domain),
            angular_eigenvalues,
            symmetrization_constant: domain.params.symmetrization_constant(),
        }
    }

    pub fn off_diagonal(&self) -> f64 {
        1.0 / (self.domain.dr * self.domain.dr)
    }

    /// Main diagonal of the symmetrized block for angular slot `mode`.
    pub fn diagonal(&self, mode: usize) -> Vec<f64> {
        let h2 = self.domain.dr * self.domain.dr;
        let shift = self.symmetrization_constant + self.angular_eigenvalues[mode];
        self.domain.nodes.iter().map(|r| -2.0 / h2 - shift / (r * r)).collect()
    }

    /// `out = L v` for one block, walls treated as zero.
    pub fn apply_symmetrized(&self, mode: usize, v: &[Complex64], out: &mut [Complex64]) {
        let diag = self.diagonal(mode);
        tridiag_mul(&diag, self.off_diagonal(), v, out);
    }

    fn check(&self, state: &FieldState) -> Result<()> {
        if Arc::ptr_eq(&self.domain, &state.domain) || *self.domain == *state.domain {
            Ok(())
        } else {
            Err(Error::DomainMismatch)
        }
    }

    /// `Δu` on the grid, returned in the representation of the input.
    pub fn apply(&self, state: &FieldState) -> Result<FieldState> {
        self.check(state)?;
        let original = state.representation;
        let modes = state.to_modes();
        let nr = self.domain.num_radial;
        let sym = &self.domain.sym_factor;
        let mut out = modes.clone();
        out.values
            .par_chunks_mut(nr)
            .zip(modes.values.par_chunks(nr))
            .enumerate()
            .for_each(|(a, (dst, src))| {
                let v: Vec<Complex64> = src.iter().zip(sym).map(|(u, s)| u * s).collect();
                self.apply_symmetrized(a, &v, dst);
                dst.iter_mut().zip(sym).for_each(|(z, s)| *z /= s);
            });
        out.convert(original);
        Ok(out)
    }

    /// Weighted inner product `⟨a, b⟩ = Σ w_j a_j conj(b_j)` (angular average
    /// included). Both states must be in the same representation.
    pub fn inner(&self, a: &FieldState, b: &FieldState) -> Complex64 {
        inner_product(a, b)
    }
}

/// `⟨a, b⟩ = ∫ a conj(b) dx` by the grid quadrature.
pub fn inner_product(a: &FieldState, b: &FieldState) -> Complex64 {
    let d = &a.domain;
    let nr = d.num_radial;
    let m = d.num_angular as f64;
    let mut b = b.clone();
    b.convert(a.representation);
    let mut acc = ZERO;
    for (row_a, row_b) in a.values.chunks(nr).zip(b.values.chunks(nr)) {
        for ((x, y), w) in row_a.iter().zip(row_b).zip(&d.quad_weights) {
            acc += x * y.conj() * *w;
        }
    }
    // In point representation each sample carries 1/M of the angular measure;
    // in mode representation the 1/M normalization of the FFT already
    // accounts for it through Parseval.
    match a.representation {
        Representation::AngularPoints => acc / m,
        Representation::AngularModes => acc,
    }
}

fn tridiag_mul(diag: &[f64], off: f64, v: &[Complex64], out: &mut [Complex64]) {
    let n = v.len();
    for j in 0..n {
        let left = if j > 0 { v[j - 1] } else { ZERO };
        let right = if j + 1 < n { v[j + 1] } else { ZERO };
        out[j] = diag[j] * v[j] + off * (left + right);
    }
}

/// Time-stepping scheme. Only one is provided.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    CrankNicolsonStrang,
}

/// How [`perturbed_step`] treats the potential coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PotentialMode {
    /// Coefficients are ignored; only the forcing is applied.
    #[default]
    None,
    /// Coefficients are frozen at the step midpoint.
    FrozenCoefficient,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagatorConfig {
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub potential_mode: PotentialMode,
}

impl PropagatorConfig {
    pub fn new(dt: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            scheme: Scheme::CrankNicolsonStrang,
            potential_mode: PotentialMode::None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_potential(mut self, mode: PotentialMode) -> Self {
        self.potential_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::OutOfRange(format!("time step dt = {} must be > 0", self.dt)));
        }
        Ok(())
    }
}

/// Thomas factorization of `I - i (dt/2) L` for one angular block.
#[derive(Clone, Debug)]
struct CayleyFactor {
    diag: Vec<f64>,
    cprime: Vec<Complex64>,
    inv_denom: Vec<Complex64>,
}

impl CayleyFactor {
    fn new(diag: Vec<f64>, off: f64, half_dt: f64) -> Result<Self> {
        let n = diag.len();
        let beta = -I * half_dt * off;
        let mut cprime = vec![ZERO; n];
        let mut inv_denom = vec![ZERO; n];
        let mut prev = ZERO;
        for j in 0..n {
            let alpha = Complex64::new(1.0, -half_dt * diag[j]);
            let denom = alpha - beta * prev;
            if !(denom.norm() > 1e-300) {
                return Err(Error::SolveBreakdown(j));
            }
            inv_denom[j] = denom.inv();
            prev = beta * inv_denom[j];
            cprime[j] = prev;
        }
        Ok(Self {
            diag,
            cprime,
            inv_denom,
        })
    }

    /// In-place `v ← (I - iθL)^{-1} (I + iθL) v` with `θ = dt/2`.
    fn apply(&self, v: &mut [Complex64], off: f64, half_dt: f64, scratch: &mut Vec<Complex64>) {
        let n = v.len();
        scratch.clear();
        scratch.resize(n, ZERO);
        let theta_off = I * half_dt * off;
        let beta = -theta_off;
        // Right-hand side and forward sweep fused.
        let mut prev_y = ZERO;
        for j in 0..n {
            let left = if j > 0 { v[j - 1] } else { ZERO };
            let right = if j + 1 < n { v[j + 1] } else { ZERO };
            let rhs = v[j] + I * half_dt * self.diag[j] * v[j] + theta_off * (left + right);
            let y = flush_tiny((rhs - beta * prev_y) * self.inv_denom[j]);
            scratch[j] = y;
            prev_y = y;
        }
        let mut next = ZERO;
        for j in (0..n).rev() {
            let x = flush_tiny(scratch[j] - self.cprime[j] * next);
            v[j] = x;
            next = x;
        }
    }
}

/// Magnitude below which sweep values are set to zero. Geometric tails of
/// the tridiagonal solve otherwise run through subnormal numbers, which are an
/// order of magnitude slower on common hardware.
const FLUSH_THRESHOLD: f64 = 1e-200;

#[inline]
fn flush_tiny(z: Complex64) -> Complex64 {
    Complex64::new(
        if z.re.abs() < FLUSH_THRESHOLD { 0.0 } else { z.re },
        if z.im.abs() < FLUSH_THRESHOLD { 0.0 } else { z.im },
    )
}

/// Precomputed Crank–Nicolson propagator for a fixed `(domain, dt)`.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub op: LaplacianOp,
    pub cfg: PropagatorConfig,
    factors: Vec<CayleyFactor>,
}

impl Propagator {
    pub fn new(op: &LaplacianOp, cfg: PropagatorConfig) -> Result<Self> {
        cfg.validate()?;
        let half = 0.5 * cfg.dt;
        let off = op.off_diagonal();
        let factors = (0..op.domain.num_angular)
            .map(|a| CayleyFactor::new(op.diagonal(a), off, half))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            op: op.clone(),
            cfg,
            factors,
        })
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt
    }

    fn check(&self, state: &FieldState) -> Result<()> {
        self.op.check(state)
    }

    /// One Crank–Nicolson step of `i u_t + Δu = 0`, in place.
    pub fn linear_step_in_place(&self, state: &mut FieldState) -> Result<()> {
        self.check(state)?;
        let original = state.representation;
        state.convert(Representation::AngularModes);
        let nr = self.op.domain.num_radial;
        let sym = &self.op.domain.sym_factor;
        let off = self.op.off_diagonal();
        let half = 0.5 * self.cfg.dt;
        let step_row = |factor: &CayleyFactor, row: &mut [Complex64]| {
            let mut scratch = Vec::with_capacity(nr);
            row.iter_mut().zip(sym).for_each(|(z, s)| *z *= s);
            factor.apply(row, off, half, &mut scratch);
            row.iter_mut().zip(sym).for_each(|(z, s)| *z /= s);
        };
        if self.factors.len() == 1 {
            step_row(&self.factors[0], &mut state.values);
        } else {
            state
                .values
                .par_chunks_mut(nr)
                .zip(self.factors.par_iter())
                .for_each(|(row, factor)| step_row(factor, row));
        }
        state.convert(original);
        state.time += self.cfg.dt;
        Ok(())
    }

    /// Half phase, linear step, half phase.
    pub fn strang_step_in_place(&self, params: &ModelParams, state: &mut FieldState) -> Result<()> {
        let half = 0.5 * self.cfg.dt;
        phase_rotation_in_place(params.p, half, state)?;
        self.linear_step_in_place(state)?;
        phase_rotation_in_place(params.p, half, state)?;
        Ok(())
    }

    /// `steps` Strang steps with the adjacent half phases merged.
    ///
    /// The merged composition equals repeated [`Propagator::strang_step_in_place`]
    /// up to rounding, since the phase flow preserves `|u|`.
    pub fn evolve(&self, params: &ModelParams, state: &mut FieldState, steps: usize) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        let dt = self.cfg.dt;
        phase_rotation_in_place(params.p, 0.5 * dt, state)?;
        for k in 0..steps {
            self.linear_step_in_place(state)?;
            let tau = if k + 1 == steps { 0.5 * dt } else { dt };
            phase_rotation_in_place(params.p, tau, state)?;
        }
        Ok(())
    }

    /// `steps` linear Crank–Nicolson steps.
    pub fn evolve_linear(&self, state: &mut FieldState, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.linear_step_in_place(state)?;
        }
        Ok(())
    }

    /// One step of `i w_t + Δw = V₁ w + V₂ conj(w) + F` with the coefficient
    /// fields frozen at the midpoint of the step.
    ///
    /// Splitting: half pointwise `(V₁, V₂)` flow (exact 2×2 real propagator),
    /// half forcing, Crank–Nicolson, half forcing, half `(V₁, V₂)` flow.
    pub fn perturbed_step_in_place(
        &self,
        state: &mut FieldState,
        v1: &FieldState,
        v2: &FieldState,
        forcing: &FieldState,
    ) -> Result<()> {
        self.check(state)?;
        let dt = self.cfg.dt;
        let slab = (state.time - 1e-12 * dt.max(1.0), state.time + dt * (1.0 + 1e-9));
        for field in [v1, v2, forcing] {
            if !state.same_domain(field) {
                return Err(Error::DomainMismatch);
            }
            if field.time < slab.0 || field.time > slab.1 {
                return Err(Error::TimeMismatch(state.time, field.time));
            }
        }
        if !state.is_radial() {
            for field in [&*state, v1, v2, forcing] {
                if field.representation != Representation::AngularPoints {
                    return Err(Error::RepresentationMismatch {
                        expected: Representation::AngularPoints.name(),
                    });
                }
            }
        }
        let use_potential = self.cfg.potential_mode == PotentialMode::FrozenCoefficient;
        let half = 0.5 * dt;
        if use_potential {
            potential_flow_in_place(&mut state.values, &v1.values, &v2.values, half);
        }
        forcing_flow_in_place(&mut state.values, &forcing.values, half);
        self.linear_step_in_place(state)?;
        forcing_flow_in_place(&mut state.values, &forcing.values, half);
        if use_potential {
            potential_flow_in_place(&mut state.values, &v1.values, &v2.values, half);
        }
        Ok(())
    }
}

/// `|z|^e` with the continuous extension `0` at `z = 0` (for `e > 0`).
#[inline]
pub fn modulus_power(z: Complex64, e: f64) -> f64 {
    let m2 = z.norm_sqr();
    if m2 == 0.0 {
        return 0.0;
    }
    if e.fract() == 0.0 && e.abs() < 128.0 {
        let k = e as i32;
        if k % 2 == 0 {
            m2.powi(k / 2)
        } else {
            m2.powi((k - 1) / 2) * m2.sqrt()
        }
    } else {
        m2.powf(0.5 * e)
    }
}

/// Pointwise exact flow of `i u_t = |u|^{p-1} u` over `tau`.
pub fn phase_rotation_in_place(p: f64, tau: f64, state: &mut FieldState) -> Result<()> {
    if !state.is_radial() && state.representation != Representation::AngularPoints {
        return Err(Error::RepresentationMismatch {
            expected: Representation::AngularPoints.name(),
        });
    }
    let e = p - 1.0;
    for z in state.values.iter_mut() {
        let angle = -tau * modulus_power(*z, e);
        if angle != 0.0 {
            let (s, c) = angle.sin_cos();
            *z *= Complex64::new(c, s);
        }
    }
    Ok(())
}

fn forcing_flow_in_place(values: &mut [Complex64], forcing: &[Complex64], tau: f64) {
    for (w, f) in values.iter_mut().zip(forcing) {
        *w -= I * tau * f;
    }
}

/// Exact flow of `i w_t = V₁ w + V₂ conj(w)` over `tau` at every node, with
/// `w = a + i b` written as a real 2×2 linear system.
fn potential_flow_in_place(values: &mut [Complex64], v1: &[Complex64], v2: &[Complex64], tau: f64) {
    for ((w, a1), a2) in values.iter_mut().zip(v1).zip(v2) {
        *w = potential_propagate(*w, *a1, *a2, tau);
    }
}

/// `exp(tau A) (a, b)` where `A = β I + B`, `B = [[d, α-c], [-(α+c), -d]]`,
/// `V₁ = α + iβ`, `V₂ = c + id`. `B² = s I` with `s = |V₂|² - α²`.
pub(crate) fn potential_propagate(w: Complex64, v1: Complex64, v2: Complex64, tau: f64) -> Complex64 {
    let (alpha, beta) = (v1.re, v1.im);
    let (c, d) = (v2.re, v2.im);
    let s = c * c + d * d - alpha * alpha;
    let x = s * tau * tau;
    // even = cosh(√s τ), odd = sinh(√s τ)/√s, continued analytically for s < 0.
    let (even, odd) = if x.abs() < 1e-8 {
        (1.0 + 0.5 * x, tau * (1.0 + x / 6.0))
    } else if s > 0.0 {
        let k = s.sqrt();
        ((k * tau).cosh(), (k * tau).sinh() / k)
    } else {
        let k = (-s).sqrt();
        ((k * tau).cos(), (k * tau).sin() / k)
    };
    let (a, b) = (w.re, w.im);
    let ba = d * a + (alpha - c) * b;
    let bb = -(alpha + c) * a - d * b;
    let growth = (beta * tau).exp();
    Complex64::new(growth * (even * a + odd * ba), growth * (even * b + odd * bb))
}

/// Coefficients of the exact linearization of `f(z) = |z|^{p-1} z` at `u`:
/// `f(u + w) - f(u) = V₁ w + V₂ conj(w) + O(|w|²)` with
/// `V₁ = (p+1)/2 |u|^{p-1}` and `V₂ = (p-1)/2 |u|^{p-3} u²`.
pub fn linearized_coefficients(p: f64, u: Complex64) -> (Complex64, Complex64) {
    let m = u.norm();
    if m == 0.0 {
        return (ZERO, ZERO);
    }
    let mp = modulus_power(u, p - 1.0);
    let phase = u / m;
    (
        Complex64::new(0.5 * (p + 1.0) * mp, 0.0),
        0.5 * (p - 1.0) * mp * phase * phase,
    )
}

/// `f(z) = |z|^{p-1} z`.
#[inline]
pub fn power_nonlinearity(p: f64, z: Complex64) -> Complex64 {
    z * modulus_power(z, p - 1.0)
}

/// Remainder `F[u, w] = f(u+w) - f(u) - V₁ w - V₂ conj(w)` of the difference
/// equation.
pub fn nonlinear_remainder(p: f64, u: Complex64, w: Complex64) -> Complex64 {
    let (v1, v2) = linearized_coefficients(p, u);
    power_nonlinearity(p, u + w) - power_nonlinearity(p, u) - v1 * w - v2 * w.conj()
}

/// `Δu` on the grid.
pub fn apply_laplacian(op: &LaplacianOp, state: &FieldState) -> Result<FieldState> {
    op.apply(state)
}

/// One Crank–Nicolson step `(I - i dt/2 Δ) u⁺ = (I + i dt/2 Δ) u`.
pub fn linear_step(op: &LaplacianOp, cfg: &PropagatorConfig, state: &FieldState) -> Result<FieldState> {
    let prop = Propagator::new(op, *cfg)?;
    let mut out = state.clone();
    prop.linear_step_in_place(&mut out)?;
    Ok(out)
}

/// `u ↦ exp(-i dt |u|^{p-1}) u` at every node. Time is not advanced; the
/// sub-flow is a building block of [`strang_step`].
pub fn nonlinear_phase_step(params: &ModelParams, dt: f64, state: &FieldState) -> Result<FieldState> {
    let mut out = state.clone();
    phase_rotation_in_place(params.p, dt, &mut out)?;
    Ok(out)
}

/// Half nonlinear phase, full linear step, half nonlinear phase.
pub fn strang_step(
    op: &LaplacianOp,
    params: &ModelParams,
    cfg: &PropagatorConfig,
    state: &FieldState,
) -> Result<FieldState> {
    let prop = Propagator::new(op, *cfg)?;
    let mut out = state.clone();
    prop.strang_step_in_place(params, &mut out)?;
    Ok(out)
}

/// One frozen-coefficient step of `i w_t + Δw = V₁ w + V₂ conj(w) + F`.
pub fn perturbed_step(
    op: &LaplacianOp,
    cfg: &PropagatorConfig,
    state: &FieldState,
    v1: &FieldState,
    v2: &FieldState,
    forcing: &FieldState,
) -> Result<FieldState> {
    let prop = Propagator::new(op, *cfg)?;
    let mut out = state.clone();
    prop.perturbed_step_in_place(&mut out, v1, v2, forcing)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, sample_polar, sample_radial};
    use crate::functionals::mass;
    use std::f64::consts::PI;

    fn radial3(r_max: f64, nr: usize) -> Arc<DiscDomain> {
        build_domain(ModelParams::new(3, 3.0, r_max).unwrap(), nr, 1).unwrap()
    }

    #[test]
    fn zero_field_is_fixed() {
        let d = radial3(4.0, 40);
        let op = LaplacianOp::new(&d);
        let z = FieldState::zeros(&d, 0.0);
        assert!(op.apply(&z).unwrap().values.iter().all(|v| v.norm() == 0.0));
        let cfg = PropagatorConfig::new(0.1).unwrap();
        let params = d.params.clone();
        let out = strang_step(&op, &params, &cfg, &z).unwrap();
        assert!(out.values.iter().all(|v| v.norm() == 0.0));
        assert!((out.time - 0.1).abs() < 1e-15);
        let lin = linear_step(&op, &cfg, &z).unwrap();
        assert!(lin.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn two_dimensional_mode_stencil() {
        let d = build_domain(ModelParams::new(2, 3.0, 3.0).unwrap(), 20, 4).unwrap();
        let op = LaplacianOp::new(&d);
        assert_eq!(op.symmetrization_constant, -0.25);
        let diag = op.diagonal(1);
        let h2 = d.dr * d.dr;
        for (dj, r) in diag.iter().zip(&d.nodes) {
            let expect = -2.0 / h2 - (-0.25 + 1.0) / (r * r);
            assert!((dj - expect).abs() < 1e-12 * expect.abs());
        }
        assert_eq!(op.off_diagonal(), 1.0 / h2);
    }

    #[test]
    fn sine_mode_is_an_eigenfunction_for_n3() {
        let l = 3.0;
        for &nr in &[59usize, 119, 239] {
            let d = radial3(1.0 + l, nr);
            let op = LaplacianOp::new(&d);
            let k = 2.0;
            let u = sample_radial(&d, |r| (k * PI * (r - 1.0) / l).sin() / r).unwrap();
            let lap = op.apply(&u).unwrap();
            let lambda = (k * PI / l).powi(2);
            let err = lap
                .values
                .iter()
                .zip(&u.values)
                .map(|(a, b)| (a + lambda * b).norm())
                .fold(0.0, f64::max);
            // Second difference error of the sine: λ (k π dr / L)² / 12 relative.
            let bound = lambda * (k * PI * d.dr / l).powi(2) / 12.0 * 1.01;
            assert!(err <= bound, "nr {nr}: err {err} bound {bound}");
        }
    }

    #[test]
    fn phase_flow_examples() {
        let d = radial3(3.0, 8);
        let params = ModelParams::new(3, 3.0, 3.0).unwrap();
        let one = FieldState::from_values(
            &d,
            0.0,
            vec![Complex64::new(1.0, 0.0); 8],
            Representation::AngularPoints,
        )
        .unwrap();
        let out = nonlinear_phase_step(&params, PI, &one).unwrap();
        for z in &out.values {
            assert!((z - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        }
        let s = sample_radial(&d, |r| (r - 1.0) * 3.0).unwrap();
        let out = nonlinear_phase_step(&params, 0.37, &s).unwrap();
        for (a, b) in s.values.iter().zip(&out.values) {
            assert!((a.norm() - b.norm()).abs() <= 4.0 * f64::EPSILON * a.norm());
        }
        let m0 = mass(&s);
        let m1 = mass(&out);
        assert!((m0 - m1).abs() <= 1e-14 * m0);
    }

    #[test]
    fn phase_flow_needs_points_in_2d() {
        let d = build_domain(ModelParams::new(2, 3.0, 3.0).unwrap(), 8, 4).unwrap();
        let s = sample_polar(&d, |r, th| Complex64::new(r * th.cos(), 0.0)).unwrap();
        let params = d.params.clone();
        assert!(nonlinear_phase_step(&params, 0.1, &s.to_modes()).is_err());
        assert!(nonlinear_phase_step(&params, 0.1, &s).is_ok());
    }

    #[test]
    fn potential_flow_constant_phase() {
        let w = Complex64::new(0.3, -0.7);
        let c = 2.5;
        let tau = 0.41;
        let out = potential_propagate(w, Complex64::new(c, 0.0), ZERO, tau);
        let expect = w * Complex64::new(0.0, -c * tau).exp();
        assert!((out - expect).norm() < 1e-15);
    }

    #[test]
    fn potential_flow_matches_series() {
        // Against a 40-term Taylor series of the 2×2 exponential.
        let cases = [
            (Complex64::new(2.0, 0.0), Complex64::new(0.5, 1.0)),
            (Complex64::new(0.5, 0.0), Complex64::new(1.5, -0.3)),
            (Complex64::new(1.0, 0.2), Complex64::new(0.0, 1.0)),
        ];
        for (v1, v2) in cases {
            let (alpha, beta, c, d) = (v1.re, v1.im, v2.re, v2.im);
            let a = [[beta + d, alpha - c], [-(alpha + c), beta - d]];
            let tau = 0.3;
            let w = Complex64::new(0.2, 0.9);
            let mut term = [w.re, w.im];
            let mut sum = term;
            for k in 1..40 {
                let next = [
                    (a[0][0] * term[0] + a[0][1] * term[1]) * tau / k as f64,
                    (a[1][0] * term[0] + a[1][1] * term[1]) * tau / k as f64,
                ];
                term = next;
                sum[0] += term[0];
                sum[1] += term[1];
            }
            let out = potential_propagate(w, v1, v2, tau);
            assert!((out.re - sum[0]).abs() < 1e-13 && (out.im - sum[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn remainder_is_quadratic() {
        let p = 5.0;
        let u = Complex64::new(0.8, -0.4);
        let w = Complex64::new(0.3, 0.1);
        let r1 = nonlinear_remainder(p, u, w * 1e-2).norm();
        let r2 = nonlinear_remainder(p, u, w * 5e-3).norm();
        let order = (r1 / r2).log2();
        assert!((order - 2.0).abs() < 0.05, "order {order}");
        assert_eq!(linearized_coefficients(p, ZERO), (ZERO, ZERO));
    }

    #[test]
    fn evolve_matches_repeated_strang() {
        let d = radial3(8.0, 200);
        let params = ModelParams::new(3, 3.0, 8.0).unwrap();
        let op = LaplacianOp::new(&d);
        let prop = Propagator::new(&op, PropagatorConfig::new(0.01).unwrap()).unwrap();
        let u0 = sample_radial(&d, |r| 0.5 * (r - 1.0).powi(2) * (-(r - 3.0).powi(2)).exp()).unwrap();
        let mut a = u0.clone();
        let mut b = u0.clone();
        for _ in 0..50 {
            prop.strang_step_in_place(&params, &mut a).unwrap();
        }
        prop.evolve(&params, &mut b, 50).unwrap();
        let diff = a.difference(&b).unwrap();
        let rel = mass(&diff).sqrt() / mass(&u0).sqrt();
        assert!(rel < 1e-12, "relative difference {rel}");
        assert!((a.time - b.time).abs() < 1e-12);
    }

    #[test]
    fn rejects_foreign_domain() {
        let d1 = radial3(4.0, 40);
        let d2 = radial3(4.0, 41);
        let op = LaplacianOp::new(&d1);
        assert!(matches!(
            op.apply(&FieldState::zeros(&d2, 0.0)),
            Err(Error::DomainMismatch)
        ));
        assert!(PropagatorConfig::new(0.0).is_err());
    }
}
