//! Pseudoconformal chart `u(t,x) = t^{-n/2} U(-1/t, x/t) e^{i|x|²/4t}`.
//!
//! A radial snapshot at time `t ≥ 1` maps to a slice of the cone
//! `{-1 ≤ T < 0, R ≥ -T}` at `T = -1/t`. The wall `r = 1` maps to the cone
//! boundary `R = -T`, where `U` vanishes. `U` solves
//! `i U_T + ΔU = (-T)^ν |U|^{p-1} U`, and the cone energy
//! `ℰ(T) = ∫_{-T}^∞ R^{n-1} (½|U_R|² + (-T)^ν |U|^{p+1}/(p+1)) dR` is
//! nonincreasing in `T` for defocusing solutions. `|S^{n-1}| ℰ(-1/t)` equals
//! the pseudoconformal energy `E₁(t)`.

use num_complex::Complex64;
use serde::Serialize;

use crate::domain::{DiscDomain, FieldState, ModelParams, Representation};
use crate::error::{Error, Result};
use crate::functionals::{energy, outer_mass_fraction, pseudoconformal_energy, weighted_mass, HORIZON_MASS_FRACTION};
use crate::operators::modulus_power;

use std::sync::Arc;

/// Relative tolerance (of the first audited value) on monotonicity.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-4;

/// Parameters of the transformed equation
/// `i U_T + Δ U = (-T)^ν |U|^{p-1} U`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PCParams {
    pub params: ModelParams,
    /// `ν = n/2 (p-1) - 2`.
    pub nu: f64,
}

impl PCParams {
    pub fn new(params: &ModelParams) -> Self {
        let nu = 0.5 * params.n as f64 * (params.p - 1.0) - 2.0;
        Self {
            params: params.clone(),
            nu,
        }
    }

    /// `ν > 0`, i.e. `p > 1 + 4/n`. Holds in particular above the
    /// energy-critical power `(n+2)/(n-2)`.
    pub fn nu_positive(&self) -> bool {
        self.nu > 0.0
    }
}

/// One `T = const` slice of the transformed field.
#[derive(Clone, Debug, Serialize)]
pub struct ConeSlice {
    pub params: ModelParams,
    /// `T = -1/t ∈ [-1, 0)`.
    pub t_cone: f64,
    /// Uniform radii from the cone boundary `-T` to the image of `r_max`,
    /// both endpoints included.
    pub nodes: Vec<f64>,
    /// `U(T, R)`; zero at both endpoints.
    pub values: Vec<Complex64>,
    /// `e(T, R) = R^{n-1} (½|U_R|² + (-T)^ν |U|^{p+1}/(p+1))` at the nodes
    /// (centered differences).
    pub density: Vec<f64>,
}

impl ConeSlice {
    /// Builds a slice from explicit node values. `values` must include the
    /// two endpoints.
    pub fn new(params: &ModelParams, t_cone: f64, nodes: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if !(-1.0..0.0).contains(&t_cone) {
            return Err(Error::OutOfRange(format!("cone time T = {t_cone} not in [-1, 0)")));
        }
        if nodes.len() != values.len() || nodes.len() < 3 {
            return Err(Error::InvalidGrid("slice needs >= 3 nodes with matching values".into()));
        }
        let mut slice = Self {
            params: params.clone(),
            t_cone,
            nodes,
            values,
            density: Vec::new(),
        };
        slice.density = slice.energy_density();
        Ok(slice)
    }

    /// Samples `U(R)` on `num_interior` uniform interior nodes of
    /// `(-T, r_end)`; the endpoint values are set to zero.
    pub fn from_fn(
        params: &ModelParams,
        t_cone: f64,
        r_end: f64,
        num_interior: usize,
        profile: impl Fn(f64) -> Complex64,
    ) -> Result<Self> {
        let start = -t_cone;
        let h = (r_end - start) / (num_interior + 1) as f64;
        let nodes: Vec<f64> = (0..num_interior + 2).map(|k| start + k as f64 * h).collect();
        let last = nodes.len() - 1;
        let values = nodes
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                if k == 0 || k == last {
                    Complex64::new(0.0, 0.0)
                } else {
                    profile(r)
                }
            })
            .collect();
        Self::new(params, t_cone, nodes, values)
    }

    /// `(-T)^ν`.
    pub fn potential_weight(&self) -> f64 {
        (-self.t_cone).powf(PCParams::new(&self.params).nu)
    }

    pub fn spacing(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }

    fn energy_density(&self) -> Vec<f64> {
        let n = self.params.n as i32;
        let p = self.params.p;
        let weight = self.potential_weight();
        let h = self.spacing();
        let last = self.values.len() - 1;
        (0..=last)
            .map(|k| {
                let du = if k == 0 {
                    (self.values[1] - self.values[0]) / h
                } else if k == last {
                    (self.values[last] - self.values[last - 1]) / h
                } else {
                    (self.values[k + 1] - self.values[k - 1]) / (2.0 * h)
                };
                let r = self.nodes[k];
                r.powi(n - 1) * (0.5 * du.norm_sqr() + weight * modulus_power(self.values[k], p + 1.0) / (p + 1.0))
            })
            .collect()
    }

    /// `sup_R |U|² R^{n-2}`.
    pub fn weighted_amplitude_sq(&self) -> f64 {
        let e = self.params.n as i32 - 2;
        self.nodes
            .iter()
            .zip(&self.values)
            .map(|(r, u)| u.norm_sqr() * r.powi(e))
            .fold(0.0, f64::max)
    }
}

/// `T = -1/t` and `U_k = t^{n/2} u_k e^{-i r_k²/(4t)}` on the image grid
/// `R_k = r_k / t`, which is exact (no resampling).
pub fn forward_transform(params: &ModelParams, state: &FieldState) -> Result<ConeSlice> {
    let t = state.time;
    if !state.is_radial() {
        return Err(Error::NotRadial);
    }
    if !(t >= 1.0) {
        return Err(Error::TransformRange(t));
    }
    let d = &state.domain;
    let scale = t.powf(0.5 * params.n as f64);
    let mut nodes = Vec::with_capacity(d.num_radial + 2);
    let mut values = Vec::with_capacity(d.num_radial + 2);
    nodes.push(params.r_inner / t);
    values.push(Complex64::new(0.0, 0.0));
    for (&r, u) in d.nodes.iter().zip(&state.values) {
        nodes.push(r / t);
        values.push(scale * u * Complex64::new(0.0, -r * r / (4.0 * t)).exp());
    }
    nodes.push(params.r_max / t);
    values.push(Complex64::new(0.0, 0.0));
    ConeSlice::new(params, -1.0 / t, nodes, values)
}

/// Forward transform followed by monotone cubic resampling onto
/// `num_interior` uniform interior nodes of the same cone interval.
pub fn forward_transform_onto(params: &ModelParams, state: &FieldState, num_interior: usize) -> Result<ConeSlice> {
    let exact = forward_transform(params, state)?;
    let start = exact.nodes[0];
    let end = *exact.nodes.last().unwrap();
    let h = (end - start) / (num_interior + 1) as f64;
    let nodes: Vec<f64> = (0..num_interior + 2).map(|k| start + k as f64 * h).collect();
    let values = resample(&exact.nodes, &exact.values, &nodes);
    ConeSlice::new(params, exact.t_cone, nodes, values)
}

/// Maps a slice back to the physical grid `domain` at `t = -1/T`:
/// `u(t, r) = t^{-n/2} U(T, r/t) e^{i r²/(4t)}`.
pub fn inverse_transform(slice: &ConeSlice, domain: &Arc<DiscDomain>) -> Result<FieldState> {
    if !domain.is_radial() {
        return Err(Error::NotRadial);
    }
    let t = -1.0 / slice.t_cone;
    let scale = t.powf(-0.5 * slice.params.n as f64);
    let targets: Vec<f64> = domain.nodes.iter().map(|r| r / t).collect();
    let big_u = resample(&slice.nodes, &slice.values, &targets);
    let values = domain
        .nodes
        .iter()
        .zip(big_u)
        .map(|(&r, z)| scale * z * Complex64::new(0.0, r * r / (4.0 * t)).exp())
        .collect();
    FieldState::from_values(domain, t, values, Representation::AngularPoints)
}

/// `ℰ(T) = ∫ R^{n-1} (½|U_R|² + (-T)^ν |U|^{p+1}/(p+1)) dR`.
///
/// The gradient term is evaluated as `∫ |V_R|² + c_n |V|²/R² dR` with
/// `V = R^{(n-1)/2} U` (edge differences), the same discrete form used for the
/// physical energy.
pub fn cone_energy(slice: &ConeSlice) -> f64 {
    let n = slice.params.n as f64;
    let p = slice.params.p;
    let c = slice.params.symmetrization_constant();
    let h = slice.spacing();
    let v: Vec<Complex64> = slice
        .nodes
        .iter()
        .zip(&slice.values)
        .map(|(r, u)| u * r.powf(0.5 * (n - 1.0)))
        .collect();
    let edges: f64 = v.windows(2).map(|w| (w[1] - w[0]).norm_sqr()).sum::<f64>() / h;
    let last = v.len() - 1;
    let mut centrifugal = 0.0;
    let mut potential = 0.0;
    for ((z, &r), u) in v.iter().zip(&slice.nodes).zip(&slice.values).take(last).skip(1) {
        centrifugal += c * z.norm_sqr() / (r * r);
        potential += r.powf(n - 1.0) * modulus_power(*u, p + 1.0);
    }
    0.5 * (edges + centrifugal * h) + slice.potential_weight() * potential * h / (p + 1.0)
}

/// Fritsch–Carlson monotone cubic interpolation of real and imaginary parts.
pub fn resample(xs: &[f64], ys: &[Complex64], targets: &[f64]) -> Vec<Complex64> {
    let re: Vec<f64> = ys.iter().map(|z| z.re).collect();
    let im: Vec<f64> = ys.iter().map(|z| z.im).collect();
    let pr = Pchip::new(xs, &re);
    let pi = Pchip::new(xs, &im);
    targets
        .iter()
        .map(|&x| Complex64::new(pr.eval(x), pi.eval(x)))
        .collect()
}

/// Piecewise cubic Hermite interpolant with Fritsch–Carlson slopes.
#[derive(Clone, Debug)]
pub struct Pchip<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
    slopes: Vec<f64>,
}

impl<'a> Pchip<'a> {
    pub fn new(xs: &'a [f64], ys: &'a [f64]) -> Self {
        let n = xs.len();
        assert!(n >= 2 && ys.len() == n, "pchip needs >= 2 matching samples");
        let secants: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])).collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes[0] = secants[0];
            slopes[1] = secants[0];
        } else {
            for k in 1..n - 1 {
                let (a, b) = (secants[k - 1], secants[k]);
                if a * b > 0.0 {
                    let h0 = xs[k] - xs[k - 1];
                    let h1 = xs[k + 1] - xs[k];
                    let w1 = 2.0 * h1 + h0;
                    let w2 = h1 + 2.0 * h0;
                    slopes[k] = (w1 + w2) / (w1 / a + w2 / b);
                }
            }
            slopes[0] = end_slope(xs[1] - xs[0], xs[2] - xs[1], secants[0], secants[1]);
            slopes[n - 1] = end_slope(
                xs[n - 1] - xs[n - 2],
                xs[n - 2] - xs[n - 3],
                secants[n - 2],
                secants[n - 3],
            );
        }
        Self { xs, ys, slopes }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = self.xs.partition_point(|&v| v <= x) - 1;
        let h = self.xs[k + 1] - self.xs[k];
        let s = (x - self.xs[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.ys[k] + h * h10 * self.slopes[k] + h01 * self.ys[k + 1] + h * h11 * self.slopes[k + 1]
    }
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

/// One audited sample.
#[derive(Clone, Debug, Serialize)]
pub struct AuditRow {
    pub time: f64,
    pub e1: f64,
    /// `T = -1/t`, present for `t ≥ 1`.
    pub t_cone: Option<f64>,
    pub cone_energy: Option<f64>,
    /// `‖x u(t)‖² / (E₁(t) + (t + t^{n(p-1)/2}) E(u(t)))`.
    pub weighted_mass_ratio: f64,
}

/// Result of [`monotonicity_audit`].
#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    pub rows: Vec<AuditRow>,
    pub tolerance: f64,
    /// Indices `k` with `E₁(t_{k+1}) > E₁(t_k) + tol · E₁(t_0)`.
    pub e1_violations: Vec<usize>,
    /// Same for `ℰ` over the `t ≥ 1` samples (indices into `rows`).
    pub cone_violations: Vec<usize>,
    /// `None` for the linear flow: monotonicity is only claimed in the
    /// defocusing case, so values are reported without a verdict.
    pub pass: Option<bool>,
    /// `sup_{T,R} |U|² R^{n-2}` over the audited slices.
    pub amplitude_sup: f64,
    /// `ℰ` at the earliest audited slice (`T = -1` when the trajectory has a
    /// sample at `t = 1`).
    pub cone_energy_initial: f64,
    /// `amplitude_sup / (2 ℰ_initial)`, the recorded discrete Strauss constant.
    pub amplitude_constant: f64,
}

/// Tabulates `E₁(t)` for every sample and `ℰ(T)` for samples with `t ≥ 1`,
/// flagging increases beyond `tolerance · (first value)`.
pub fn monotonicity_audit(
    trajectory: &[FieldState],
    params: &ModelParams,
    nonlinear: bool,
    tolerance: f64,
) -> Result<MonotonicityReport> {
    let mut auditor = MonotonicityAuditor::new(params, nonlinear, tolerance);
    for s in trajectory {
        auditor.push(s)?;
    }
    Ok(auditor.finish())
}

/// Streaming form of [`monotonicity_audit`]: samples are pushed in time order.
#[derive(Clone, Debug)]
pub struct MonotonicityAuditor {
    params: ModelParams,
    nonlinear: bool,
    tolerance: f64,
    rows: Vec<AuditRow>,
    amplitude_sup: f64,
    first_cone: Option<f64>,
}

impl MonotonicityAuditor {
    pub fn new(params: &ModelParams, nonlinear: bool, tolerance: f64) -> Self {
        Self {
            params: params.clone(),
            nonlinear,
            tolerance,
            rows: Vec::new(),
            amplitude_sup: 0.0,
            first_cone: None,
        }
    }

    pub fn push(&mut self, s: &FieldState) -> Result<()> {
        let params = &self.params;
        if !s.is_radial() {
            return Err(Error::NotRadial);
        }
        let frac = outer_mass_fraction(s);
        if frac >= HORIZON_MASS_FRACTION {
            return Err(Error::HorizonViolation {
                time: s.time,
                fraction: frac,
            });
        }
        let e1 = pseudoconformal_energy(params, s)?;
        let (t_cone, cone) = if s.time >= 1.0 {
            let slice = forward_transform(params, s)?;
            self.amplitude_sup = self.amplitude_sup.max(slice.weighted_amplitude_sq());
            let ce = cone_energy(&slice);
            self.first_cone.get_or_insert(ce);
            (Some(slice.t_cone), Some(ce))
        } else {
            (None, None)
        };
        let t = s.time;
        let growth = t + t.powf(0.5 * params.n as f64 * (params.p - 1.0));
        let denom = e1 + growth * energy(params, s);
        let wm = weighted_mass(s);
        self.rows.push(AuditRow {
            time: t,
            e1,
            t_cone,
            cone_energy: cone,
            weighted_mass_ratio: if denom > 0.0 { wm / denom } else { 0.0 },
        });
        Ok(())
    }

    pub fn finish(self) -> MonotonicityReport {
        let rows = self.rows;
        let tolerance = self.tolerance;
        let e1_series: Vec<f64> = rows.iter().map(|r| r.e1).collect();
        let e1_violations = increases(&e1_series, tolerance);
        let cone_idx: Vec<usize> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.cone_energy.is_some())
            .map(|(k, _)| k)
            .collect();
        let cone_series: Vec<f64> = cone_idx.iter().map(|&k| rows[k].cone_energy.unwrap()).collect();
        let cone_violations = increases(&cone_series, tolerance)
            .into_iter()
            .map(|k| cone_idx[k])
            .collect::<Vec<_>>();
        let pass = self
            .nonlinear
            .then_some(e1_violations.is_empty() && cone_violations.is_empty());
        let cone_energy_initial = self.first_cone.unwrap_or(0.0);
        let amplitude_constant = if cone_energy_initial > 0.0 {
            self.amplitude_sup / (2.0 * cone_energy_initial)
        } else {
            0.0
        };
        MonotonicityReport {
            rows,
            tolerance,
            e1_violations,
            cone_violations,
            pass,
            amplitude_sup: self.amplitude_sup,
            cone_energy_initial,
            amplitude_constant,
        }
    }
}

fn increases(series: &[f64], tolerance: f64) -> Vec<usize> {
    let Some(&first) = series.first() else {
        return Vec::new();
    };
    let slack = tolerance * first.abs();
    series
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0] + slack)
        .map(|(k, _)| k)
        .collect()
}
