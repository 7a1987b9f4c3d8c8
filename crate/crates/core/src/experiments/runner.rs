//! Scenario runner.
//!
//! A run samples [`DiagnosticsRecord`]s every `sample_stride` steps. With the
//! horizon check on, the first record past the validity horizon is kept
//! (marked invalid) and the run stops there. A non-finite field stops the run
//! with the exact step index, found by replaying the last chunk step by step.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{decay_fit, loglog_slope, noninflation_audit, FitResult, NonInflationReport, StabilityFit};
use super::manifest::{CompatSpec, RunManifest, Scenario};
use super::strichartz::{strichartz_quotient, StrichartzSetup, StrichartzTable};
use crate::compatibility::{
    linear_compat_sequence_with_factor, nonlinear_compat_sequence_with_factor, CompatReport, Forcing,
};
use crate::domain::{build_domain, DiscDomain, FieldState, ModelParams, Representation};
use crate::error::{Error, Result};
use crate::functionals::{
    lebesgue_norm, pseudoconformal_energy, sobolev_norm, stability_energy, weighted_mass, DiagnosticsRecord,
};
use crate::operators::{
    linearized_coefficients, nonlinear_remainder, LaplacianOp, PotentialMode, Propagator, PropagatorConfig,
};
use crate::pseudoconformal::{MonotonicityAuditor, MonotonicityReport};

/// One named pass/fail outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    Horizon,
    NonFinite,
}

/// A runtime event that stopped a run early.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub kind: AnomalyKind,
    /// Which run of the scenario (`"main"`, `"eps=0.01"`, ...).
    pub run: String,
    pub time: f64,
    pub step: usize,
    pub detail: String,
}

/// Conservation, Strauss, uniform-bound and pseudoconformal summary of a
/// radial run.
#[derive(Clone, Debug, Serialize)]
pub struct RadialSummary {
    pub final_time: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub sup_linf: f64,
    pub h1_initial: f64,
    /// `sup_t ‖u(t)‖_∞ / ‖u₀‖_{H¹}`.
    pub uniform_bound_constant: Option<f64>,
    pub strauss_max: Option<f64>,
    pub strauss_constant: f64,
    pub e1_initial: Option<f64>,
    /// `|E₁(0) - ⅛‖x u₀‖²| / (⅛‖x u₀‖²)`.
    pub e1_identity_error: Option<f64>,
    pub monotonicity: Option<MonotonicityReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompatSummary {
    pub order: usize,
    pub nonlinear: bool,
    pub traces: Vec<f64>,
    pub tolerances: Vec<f64>,
    pub pass: Vec<bool>,
    pub compatible: bool,
    pub first_failure: Option<usize>,
}

impl CompatSummary {
    fn from_report(r: &CompatReport, nonlinear: bool) -> Self {
        Self {
            order: r.order_requested,
            nonlinear,
            traces: r.traces.iter().map(|t| t.1).collect(),
            tolerances: r.tolerances.clone(),
            pass: r.pass.clone(),
            compatible: r.passes(),
            first_failure: r.first_failure(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbedRun {
    pub epsilon: f64,
    pub completed: bool,
    pub final_time: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
    /// `sup_t ‖v(t)‖_{H^{2m}} / ‖v(0)‖_{H^{2m}}`.
    pub sobolev_growth: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityRun {
    pub epsilon: f64,
    /// `E(w(0))`.
    pub initial_energy: f64,
    /// `‖w(0)‖²`.
    pub initial_mass: f64,
    pub fit: StabilityFit,
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub masses: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub runs: Vec<StabilityRun>,
    /// Log-log slope of `E(w(0))` against ε.
    pub epsilon_slope: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WLevel {
    pub dt: f64,
    pub num_radial: usize,
    /// `max_t ‖w_direct - (v - u)‖ / max_t ‖v - u‖`.
    pub error: f64,
    pub reference_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WReport {
    pub epsilon: f64,
    pub levels: Vec<WLevel>,
    /// Least-squares slope of `log error` against `log dt`.
    pub order: Option<f64>,
    pub pairwise_orders: Vec<f64>,
}

/// Scenario-specific sections; absent sections are omitted from the JSON.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ScenarioReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radial: Option<RadialSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compat: Option<CompatSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noninflation: Option<NonInflationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbed: Option<Vec<PerturbedRun>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strichartz: Option<StrichartzTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_consistency: Option<WReport>,
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub manifest: RunManifest,
    /// Diagnostics of the main trajectory, in time order.
    pub records: Vec<DiagnosticsRecord>,
    /// Further diagnostics series written as `(file name, records)`.
    pub extra_series: Vec<(String, Vec<DiagnosticsRecord>)>,
    /// Main-trajectory fields at the sampled times (only when requested).
    pub snapshots: Vec<FieldState>,
    pub report: ScenarioReport,
    pub verdicts: Vec<Verdict>,
    pub anomalies: Vec<Anomaly>,
    pub flags: Vec<String>,
}

impl RunOutput {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// 0 when every verdict passes, 2 when one fails, 3 on a runtime anomaly.
    pub fn exit_code(&self) -> i32 {
        if !self.anomalies.is_empty() {
            3
        } else if !self.all_pass() {
            2
        } else {
            0
        }
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

/// Time-stepping context shared by the trajectories of one run.
struct Stepper<'a> {
    params: &'a ModelParams,
    prop: Propagator,
    dt: f64,
    steps: usize,
    stride: usize,
    nonlinear: bool,
}

struct Trace {
    records: Vec<DiagnosticsRecord>,
    states: Vec<FieldState>,
    anomaly: Option<Anomaly>,
}

impl Trace {
    fn final_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.time)
    }
}

impl Stepper<'_> {
    fn advance(&self, u: &mut FieldState, steps: usize) -> Result<()> {
        if self.nonlinear {
            self.prop.evolve(self.params, u, steps)
        } else {
            self.prop.evolve_linear(u, steps)
        }
    }

    fn single(&self, u: &mut FieldState) -> Result<()> {
        if self.nonlinear {
            self.prop.strang_step_in_place(self.params, u)
        } else {
            self.prop.linear_step_in_place(u)
        }
    }

    /// Evolves `u` to the final step, sampling every `stride` steps.
    fn drive(
        &self,
        label: &str,
        mut u: FieldState,
        horizon: bool,
        keep_states: bool,
        mut observe: impl FnMut(&FieldState, &DiagnosticsRecord) -> Result<()>,
    ) -> Result<Trace> {
        let mut trace = Trace {
            records: Vec::new(),
            states: Vec::new(),
            anomaly: None,
        };
        let mut done = 0;
        u.time = 0.0;
        loop {
            let mut rec = DiagnosticsRecord::compute(self.params, &u)?;
            if !horizon {
                rec.valid = u.is_finite();
            }
            if rec.valid {
                observe(&u, &rec)?;
            } else {
                rec.flags.push("validity horizon exceeded".into());
                trace.anomaly = Some(Anomaly {
                    kind: AnomalyKind::Horizon,
                    run: label.to_string(),
                    time: u.time,
                    step: done,
                    detail: format!("outer-shell mass fraction {:e}", rec.outer_mass_fraction),
                });
            }
            trace.records.push(rec);
            if keep_states {
                trace.states.push(u.clone());
            }
            if trace.anomaly.is_some() || done >= self.steps {
                break;
            }
            let chunk = self.stride.min(self.steps - done);
            let backup = u.clone();
            self.advance(&mut u, chunk)?;
            if !u.is_finite() {
                let step = done + self.locate_non_finite(backup, chunk)?;
                trace.anomaly = Some(Anomaly {
                    kind: AnomalyKind::NonFinite,
                    run: label.to_string(),
                    time: step as f64 * self.dt,
                    step,
                    detail: format!("non-finite field at step {step}"),
                });
                break;
            }
            done += chunk;
            u.time = done as f64 * self.dt;
        }
        Ok(trace)
    }

    /// Offset (1-based) of the first non-finite step within a chunk.
    fn locate_non_finite(&self, mut u: FieldState, chunk: usize) -> Result<usize> {
        for s in 1..=chunk {
            self.single(&mut u)?;
            if !u.is_finite() {
                return Ok(s);
            }
        }
        Ok(chunk)
    }
}

/// Runs the manifest's scenario.
pub fn run_scenario(manifest: &RunManifest) -> Result<RunOutput> {
    manifest.validate()?;
    let mut out = RunOutput {
        manifest: manifest.clone(),
        records: Vec::new(),
        extra_series: Vec::new(),
        snapshots: Vec::new(),
        report: ScenarioReport::default(),
        verdicts: Vec::new(),
        anomalies: Vec::new(),
        flags: Vec::new(),
    };
    match manifest.scenario {
        Scenario::RadialGlobal | Scenario::DecayRate | Scenario::NonInflation => radial(manifest, &mut out)?,
        Scenario::Perturbed => perturbed(manifest, &mut out)?,
        Scenario::Stability => stability(manifest, &mut out)?,
        Scenario::LinearStrichartz => strichartz(manifest, &mut out)?,
        Scenario::CompatCheck => compat_check(manifest, &mut out)?,
        Scenario::WConsistency => w_consistency(manifest, &mut out)?,
    }
    Ok(out)
}

fn stepper<'a>(
    manifest: &RunManifest,
    params: &'a ModelParams,
    domain: &Arc<DiscDomain>,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<Stepper<'a>> {
    Ok(Stepper {
        params,
        prop: Propagator::new(&LaplacianOp::new(domain), PropagatorConfig::new(dt)?)?,
        dt,
        steps,
        stride,
        nonlinear: manifest.nonlinear,
    })
}

fn is_zero(u: &FieldState) -> bool {
    u.values.iter().all(|z| z.re == 0.0 && z.im == 0.0)
}

/// `max_k |x_k - x_0| / |x_0|` over valid records (absolute when `x_0 = 0`).
fn drift(records: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
    let valid: Vec<f64> = records.iter().filter(|r| r.valid).map(&f).collect();
    let Some(&x0) = valid.first() else { return 0.0 };
    let scale = if x0 != 0.0 { x0.abs() } else { 1.0 };
    valid.iter().map(|x| (x - x0).abs() / scale).fold(0.0, f64::max)
}

fn compat_for(manifest: &RunManifest, params: &ModelParams, u0: &FieldState, order: usize) -> Result<CompatSummary> {
    let nonlinear = manifest.options.compat_nonlinear.unwrap_or(manifest.nonlinear);
    let factor = manifest.options.trace_factor;
    let report = if nonlinear {
        nonlinear_compat_sequence_with_factor(params, u0, order, factor)?
    } else {
        linear_compat_sequence_with_factor(u0, &Forcing::Zero, order, factor)?
    };
    Ok(CompatSummary::from_report(&report, nonlinear))
}

fn radial(manifest: &RunManifest, out: &mut RunOutput) -> Result<()> {
    let params = manifest.model_params()?;
    let domain = manifest.build_domain()?;
    let th = &manifest.thresholds;
    let u0 = manifest.initial_data.sample(&domain, manifest.seed, 0)?;
    let zero = is_zero(&u0);
    if zero {
        out.flags.push("zero initial data".into());
    }

    if manifest.scenario == Scenario::NonInflation {
        let order = manifest.options.compat_order.unwrap_or_else(|| {
            manifest
                .options
                .orders
                .iter()
                .copied()
                .max()
                .unwrap_or(2)
                .div_ceil(2)
                .max(1)
        });
        if manifest.nonlinear && !(params.p > 2.0 * order as f64 - 1.0) {
            out.verdicts.push(Verdict::new(
                "noninflation",
                false,
                format!("refused: needs p > 2N - 1 = {} for N = {order}", 2 * order - 1),
            ));
            return Ok(());
        }
        let summary = compat_for(manifest, &params, &u0, order)?;
        let compatible = summary.compatible;
        let detail = match summary.first_failure {
            Some(j) => format!(
                "refused: trace of h_{j} = {:e} exceeds {:e} at order {order}",
                summary.traces[j], summary.tolerances[j]
            ),
            None => format!("order {order} compatible"),
        };
        out.report.compat = Some(summary);
        if !compatible {
            out.verdicts.push(Verdict::new("noninflation", false, detail));
            return Ok(());
        }
    }

    let steps = manifest.steps()?;
    let st = stepper(manifest, &params, &domain, manifest.dt, steps, manifest.sample_stride)?;
    // The audit needs the wall at r_max to be invisible.
    let audit_on = u0.is_radial() && manifest.horizon_check();
    let mut auditor =
        audit_on.then(|| MonotonicityAuditor::new(&params, manifest.nonlinear, th.monotonicity_tolerance));
    let e1_initial = if audit_on {
        Some(pseudoconformal_energy(&params, &u0)?)
    } else {
        None
    };
    let wm0 = weighted_mass(&u0);
    let trace = st.drive(
        "main",
        u0,
        manifest.horizon_check(),
        manifest.output.snapshots,
        |u, _| {
            if let Some(a) = auditor.as_mut() {
                a.push(u)?;
            }
            Ok(())
        },
    )?;
    let records = &trace.records;
    let valid: Vec<&DiagnosticsRecord> = records.iter().filter(|r| r.valid).collect();
    let sup_linf = valid.iter().map(|r| r.linf).fold(0.0, f64::max);
    let h1_initial = records[0].h1;
    let strauss: Vec<f64> = valid
        .iter()
        .map(|r| r.strauss_ratio)
        .filter(|v| v.is_finite())
        .collect();
    let strauss_max = (!strauss.is_empty()).then(|| strauss.iter().copied().fold(0.0, f64::max));
    let e1_identity_error = e1_initial.and_then(|e1| (wm0 > 0.0).then(|| (e1 - wm0 / 8.0).abs() / (wm0 / 8.0)));
    let monotonicity = auditor.map(|a| a.finish());
    let summary = RadialSummary {
        final_time: trace.final_time(),
        mass_drift: drift(records, |r| r.mass),
        energy_drift: drift(records, |r| r.energy),
        sup_linf,
        h1_initial,
        uniform_bound_constant: (h1_initial > 0.0).then(|| sup_linf / h1_initial),
        strauss_max,
        strauss_constant: th.strauss_constant,
        e1_initial,
        e1_identity_error,
        monotonicity,
    };

    match manifest.scenario {
        Scenario::RadialGlobal => {
            out.verdicts.push(Verdict::new(
                "mass_conservation",
                summary.mass_drift < th.mass_drift,
                format!("relative drift {:e} (limit {:e})", summary.mass_drift, th.mass_drift),
            ));
            out.verdicts.push(Verdict::new(
                "energy_conservation",
                summary.energy_drift < th.energy_drift,
                format!(
                    "relative drift {:e} (limit {:e})",
                    summary.energy_drift, th.energy_drift
                ),
            ));
            if params.n == 3 {
                if let Some(s) = summary.strauss_max {
                    out.verdicts.push(Verdict::new(
                        "strauss_bound",
                        s <= th.strauss_constant,
                        format!("max ratio {s:.6} (constant {:.6})", th.strauss_constant),
                    ));
                }
            }
            if let Some(err) = summary.e1_identity_error {
                out.verdicts.push(Verdict::new(
                    "e1_identity",
                    err <= th.e1_identity,
                    format!("relative error {err:e} (limit {:e})", th.e1_identity),
                ));
            }
            if let Some(pass) = summary.monotonicity.as_ref().and_then(|m| m.pass) {
                let m = summary.monotonicity.as_ref().unwrap();
                out.verdicts.push(Verdict::new(
                    "pseudoconformal_monotonicity",
                    pass,
                    format!(
                        "{} E1 and {} cone-energy increases beyond tolerance",
                        m.e1_violations.len(),
                        m.cone_violations.len()
                    ),
                ));
            }
        }
        Scenario::DecayRate => {
            if zero {
                out.flags.push("decay fit skipped: zero data".into());
            } else {
                let [a, b] = manifest.fit_window();
                let window = [a, b.min(trace.final_time())];
                match decay_fit(records, window, th.decay_exponent, th.min_fit_samples) {
                    Ok(fit) => {
                        out.verdicts.push(Verdict::new(
                            "decay_rate",
                            fit.pass,
                            format!(
                                "exponent {:.4} ± {:.4} on [{}, {}] (limit {})",
                                fit.exponent, fit.confidence_halfwidth, window[0], window[1], th.decay_exponent
                            ),
                        ));
                        out.report.decay = Some(fit);
                    }
                    Err(e) => out.verdicts.push(Verdict::new("decay_rate", false, e.to_string())),
                }
            }
        }
        Scenario::NonInflation => {
            let rep = noninflation_audit(
                records,
                &manifest.options.orders,
                manifest.options.split_time,
                th.noninflation_ratio,
                None,
            );
            match rep {
                Ok(rep) => {
                    out.flags.extend(rep.flags.iter().cloned());
                    if let Some(pass) = rep.pass {
                        let detail = rep
                            .ratios
                            .iter()
                            .filter_map(|r| r.ratio.map(|v| format!("H{} ratio {v:.4}", r.order)))
                            .collect::<Vec<_>>()
                            .join(", ");
                        out.verdicts.push(Verdict::new("noninflation", pass, detail));
                    }
                    out.report.noninflation = Some(rep);
                }
                Err(e) => out.verdicts.push(Verdict::new("noninflation", false, e.to_string())),
            }
        }
        _ => unreachable!("radial() handles radial scenarios only"),
    }
    out.report.radial = Some(summary);
    out.anomalies.extend(trace.anomaly);
    out.records = trace.records;
    out.snapshots = trace.states;
    Ok(())
}

/// `ε · ‖u₀‖_{H^{2m}} / ‖φ‖_{H^{2m}}`, or `ε / ‖φ‖_{H^{2m}}` for zero `u₀`.
fn perturbation_scale(params: &ModelParams, u0: &FieldState, phi: &FieldState, eps: f64) -> Result<f64> {
    let k = 2 * params.m_smooth;
    let nphi = sobolev_norm(phi, k)?;
    if nphi == 0.0 {
        return Err(Error::Degenerate("perturbation profile is zero"));
    }
    let nu = sobolev_norm(u0, k)?;
    Ok(eps * if nu > 0.0 { nu } else { 1.0 } / nphi)
}

fn perturbation(manifest: &RunManifest, domain: &Arc<DiscDomain>) -> Result<FieldState> {
    let profile = manifest
        .perturbation
        .as_ref()
        .ok_or_else(|| Error::Manifest("missing [perturbation]".into()))?;
    profile.sample(domain, manifest.seed, 1)
}

fn perturbed(manifest: &RunManifest, out: &mut RunOutput) -> Result<()> {
    let params = manifest.model_params()?;
    let domain = manifest.build_domain()?;
    let th = &manifest.thresholds;
    let u0 = manifest.initial_data.sample(&domain, manifest.seed, 0)?;
    let phi = perturbation(manifest, &domain)?;
    let steps = manifest.steps()?;
    let st = stepper(manifest, &params, &domain, manifest.dt, steps, manifest.sample_stride)?;
    let horizon = manifest.horizon_check();
    let k = 2 * params.m_smooth;
    let eps = &manifest.options.epsilons;
    let main = st.drive("main", u0.clone(), horizon, manifest.output.snapshots, |_, _| Ok(()))?;
    let runs = eps
        .par_iter()
        .map(|&e| -> Result<(Trace, f64)> {
            let scale = perturbation_scale(&params, &u0, &phi, e)?;
            let v0 = u0.axpy(Complex64::new(scale, 0.0), &phi)?;
            let h0 = sobolev_norm(&v0, k)?;
            let mut sup = h0;
            let trace = st.drive(&format!("eps={e}"), v0, horizon, false, |v, _| {
                sup = sup.max(sobolev_norm(v, k)?);
                Ok(())
            })?;
            Ok((trace, if h0 > 0.0 { sup / h0 } else { 1.0 }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    for (i, ((trace, growth), &e)) in runs.into_iter().zip(eps).enumerate() {
        let completed = trace.anomaly.is_none();
        let run = PerturbedRun {
            epsilon: e,
            completed,
            final_time: trace.final_time(),
            mass_drift: drift(&trace.records, |r| r.mass),
            energy_drift: drift(&trace.records, |r| r.energy),
            sobolev_growth: growth,
        };
        out.verdicts.push(Verdict::new(
            format!("global_eps_{i}"),
            completed,
            format!("ε = {e}: reached t = {}", run.final_time),
        ));
        out.verdicts.push(Verdict::new(
            format!("mass_conservation_eps_{i}"),
            run.mass_drift < th.mass_drift,
            format!("ε = {e}: relative drift {:e}", run.mass_drift),
        ));
        out.verdicts.push(Verdict::new(
            format!("energy_conservation_eps_{i}"),
            run.energy_drift < th.energy_drift,
            format!("ε = {e}: relative drift {:e}", run.energy_drift),
        ));
        out.anomalies.extend(trace.anomaly);
        out.extra_series
            .push((format!("diagnostics_eps_{i}.csv"), trace.records));
        reports.push(run);
    }
    out.report.perturbed = Some(reports);
    out.anomalies.extend(main.anomaly);
    out.records = main.records;
    out.snapshots = main.states;
    Ok(())
}

fn stability(manifest: &RunManifest, out: &mut RunOutput) -> Result<()> {
    let params = manifest.model_params()?;
    let domain = manifest.build_domain()?;
    let th = &manifest.thresholds;
    let u0 = manifest.initial_data.sample(&domain, manifest.seed, 0)?;
    let phi = perturbation(manifest, &domain)?;
    let steps = manifest.steps()?;
    let st = stepper(manifest, &params, &domain, manifest.dt, steps, manifest.sample_stride)?;
    let main = st.drive("main", u0.clone(), manifest.horizon_check(), true, |_, _| Ok(()))?;
    let base: Vec<&FieldState> = main
        .states
        .iter()
        .zip(&main.records)
        .filter(|(_, r)| r.valid)
        .map(|(s, _)| s)
        .collect();
    let runs = manifest
        .options
        .epsilons
        .par_iter()
        .map(|&e| -> Result<StabilityRun> {
            let scale = perturbation_scale(&params, &u0, &phi, e)?;
            let v0 = u0.axpy(Complex64::new(scale, 0.0), &phi)?;
            let mut times = Vec::new();
            let mut energies = Vec::new();
            let mut masses = Vec::new();
            let mut k = 0;
            st.drive(&format!("eps={e}"), v0, false, false, |v, _| {
                if let Some(u) = base.get(k) {
                    let s = stability_energy(&params, u, v)?;
                    times.push(u.time);
                    energies.push(s.energy);
                    masses.push(s.mass);
                }
                k += 1;
                Ok(())
            })?;
            let initial_energy = energies.first().copied().unwrap_or(0.0);
            let initial_mass = masses.first().copied().unwrap_or(0.0);
            let fit = super::fit::stability_fit(
                &times,
                &energies,
                initial_energy + initial_mass,
                th.stability_blocks,
                th.stability_curvature,
            )?;
            Ok(StabilityRun {
                epsilon: e,
                initial_energy,
                initial_mass,
                fit,
                times,
                energies,
                masses,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, run) in runs.iter().enumerate() {
        if run.fit.zero {
            out.flags.push(format!("ε = {}: E(w) ≡ 0, C = 0", run.epsilon));
        }
        out.verdicts.push(Verdict::new(
            format!("stability_eps_{i}"),
            run.fit.pass,
            format!(
                "ε = {}: C = {:.4}, curvature {:.4} (limit {})",
                run.epsilon, run.fit.c_growth, run.fit.curvature, th.stability_curvature
            ),
        ));
    }
    let positive: Vec<&StabilityRun> = runs.iter().filter(|r| r.initial_energy > 0.0).collect();
    let epsilon_slope = (positive.len() >= 2).then(|| {
        let x: Vec<f64> = positive.iter().map(|r| r.epsilon).collect();
        let y: Vec<f64> = positive.iter().map(|r| r.initial_energy).collect();
        loglog_slope(&x, &y)
    });
    if let Some(s) = epsilon_slope {
        out.verdicts.push(Verdict::new(
            "epsilon_scaling",
            (s - th.epsilon_slope).abs() <= th.epsilon_slope_tolerance,
            format!(
                "E(w(0)) slope {s:.4} (expected {} ± {})",
                th.epsilon_slope, th.epsilon_slope_tolerance
            ),
        ));
    } else {
        out.flags
            .push("ε-scaling fit skipped: fewer than two nonzero E(w(0))".into());
    }
    out.report.stability = Some(StabilityReport { runs, epsilon_slope });
    out.anomalies.extend(main.anomaly);
    out.records = main.records;
    if manifest.output.snapshots {
        out.snapshots = main.states;
    }
    Ok(())
}

fn strichartz(manifest: &RunManifest, out: &mut RunOutput) -> Result<()> {
    let params = manifest.model_params()?;
    let domain = manifest.build_domain()?;
    if manifest.nonlinear {
        out.flags.push("Strichartz probe always uses the linear flow".into());
    }
    let u0 = manifest.initial_data.sample(&domain, manifest.seed, 0)?;
    if is_zero(&u0) {
        out.flags.push("Strichartz quotients skipped: zero data".into());
        out.records.push(DiagnosticsRecord::compute(&params, &u0)?);
        return Ok(());
    }
    let o = &manifest.options;
    let th = &manifest.thresholds;
    let setup = StrichartzSetup {
        params: params.clone(),
        base_num_radial: manifest.domain.num_radial,
        resolutions: o.resolutions,
        dt: manifest.dt,
        steps: manifest.steps()?,
        sample_stride: manifest.sample_stride,
        seed: manifest.seed,
        profile: manifest.initial_data.clone(),
    };
    let pairs: Vec<(f64, f64)> = o.pairs.iter().map(|&[q, r]| (q, r)).collect();
    let table = strichartz_quotient(&setup, &pairs, o.ensemble_size)?;
    for pair in &table.pairs {
        let name = format!("strichartz_q{}_r{}", pair.q, pair.r);
        if pair.q.is_infinite() && pair.r == 2.0 {
            out.verdicts.push(Verdict::new(
                name,
                pair.max_unit_deviation <= th.strichartz_unit,
                format!("max |quotient - 1| = {:e}", pair.max_unit_deviation),
            ));
        } else {
            out.verdicts.push(Verdict::new(
                name,
                pair.variation < th.strichartz_variation,
                format!(
                    "ensemble-max variation ×{:.4} across {} grids (limit ×{})",
                    pair.variation,
                    pair.resolutions.len(),
                    th.strichartz_variation
                ),
            ));
        }
    }
    out.report.strichartz = Some(table);
    let mut lin = manifest.clone();
    lin.nonlinear = false;
    let st = stepper(
        &lin,
        &params,
        &domain,
        manifest.dt,
        manifest.steps()?,
        manifest.sample_stride,
    )?;
    let trace = st.drive("main", u0, false, manifest.output.snapshots, |_, _| Ok(()))?;
    out.anomalies.extend(trace.anomaly);
    out.records = trace.records;
    out.snapshots = trace.states;
    Ok(())
}

/// Runs the compatibility check described by a [`CompatSpec`].
pub fn check_compatibility(spec: &CompatSpec) -> Result<CompatSummary> {
    let params = spec.params.model()?;
    let domain = build_domain(params.clone(), spec.domain.num_radial, spec.domain.num_angular)?;
    let u0 = spec.initial_data.sample(&domain, spec.seed, 0)?;
    let report = if spec.nonlinear {
        nonlinear_compat_sequence_with_factor(&params, &u0, spec.order, spec.trace_factor)?
    } else {
        linear_compat_sequence_with_factor(&u0, &Forcing::Zero, spec.order, spec.trace_factor)?
    };
    Ok(CompatSummary::from_report(&report, spec.nonlinear))
}

fn compat_check(manifest: &RunManifest, out: &mut RunOutput) -> Result<()> {
    let params = manifest.model_params()?;
    let domain = manifest.build_domain()?;
    let u0 = manifest.initial_data.sample(&domain, manifest.seed, 0)?;
    let order = manifest.options.compat_order.unwrap_or(params.m_smooth);
    let summary = compat_for(manifest, &params, &u0, order)?;
    let (pass, detail) = match manifest.options.expect_compatible {
        Some(expect) => (
            summary.compatible == expect,
            format!("compatible = {}, expected {expect}", summary.compatible),
        ),
        None => (summary.compatible, format!("compatible = {}", summary.compatible)),
    };
    out.verdicts.push(Verdict::new("compatibility", pass, detail));
    out.report.compat = Some(summary);
    out.records.push(DiagnosticsRecord::compute(&params, &u0)?);
    Ok(())
}

/// `(V₁, V₂)` fields of the linearization about `u`, stamped at `u.time`.
fn coefficient_fields(p: f64, u: &FieldState) -> (FieldState, FieldState) {
    let mut v1 = u.clone();
    let mut v2 = u.clone();
    for ((a, b), z) in v1.values.iter_mut().zip(v2.values.iter_mut()).zip(&u.values) {
        let (c1, c2) = linearized_coefficients(p, *z);
        *a = c1;
        *b = c2;
    }
    (v1, v2)
}

fn remainder_field(p: f64, u: &FieldState, w: &FieldState, time: f64) -> FieldState {
    let mut f = w.clone();
    for (out, (a, b)) in f.values.iter_mut().zip(u.values.iter().zip(&w.values)) {
        *out = nonlinear_remainder(p, *a, *b);
    }
    f.time = time;
    f
}

fn w_consistency(manifest: &RunManifest, out: &mut RunOutput) -> Result<()> {
    let params = manifest.model_params()?;
    let base_domain = manifest.build_domain()?;
    let steps = manifest.steps()?;
    let eps = manifest.options.epsilons[0];
    let levels = manifest.options.refinement_levels;
    let nonlinear = manifest.nonlinear;
    let p = params.p;
    let results = (0..levels)
        .into_par_iter()
        .map(|level| -> Result<(WLevel, Vec<DiagnosticsRecord>)> {
            let factor = 1usize << level;
            let nr = (manifest.domain.num_radial + 1) * factor - 1;
            let domain = if level == 0 {
                base_domain.clone()
            } else {
                build_domain(params.clone(), nr, manifest.domain.num_angular)?
            };
            let dt = manifest.dt / factor as f64;
            let cfg = PropagatorConfig::new(dt)?;
            let op = LaplacianOp::new(&domain);
            let prop = Propagator::new(&op, cfg)?;
            let wprop = Propagator::new(&op, cfg.with_potential(PotentialMode::FrozenCoefficient))?;
            let mut u = manifest.initial_data.sample(&domain, manifest.seed, 0)?.to_points();
            let phi = perturbation(manifest, &domain)?;
            let scale = perturbation_scale(&params, &u, &phi, eps)?;
            let mut w = phi.scaled(Complex64::new(scale, 0.0)).to_points();
            let mut v = u.axpy(Complex64::new(1.0, 0.0), &w)?;
            let stride = manifest.sample_stride * factor;
            let mut records = vec![DiagnosticsRecord::compute(&params, &u)?];
            let mut err_max: f64 = 0.0;
            let mut ref_max: f64 = lebesgue_norm(&v.difference(&u)?, 2.0);
            for step in 1..=steps * factor {
                let u_prev = u.clone();
                if nonlinear {
                    prop.strang_step_in_place(&params, &mut u)?;
                    prop.strang_step_in_place(&params, &mut v)?;
                } else {
                    prop.linear_step_in_place(&mut u)?;
                    prop.linear_step_in_place(&mut v)?;
                }
                u.convert(Representation::AngularPoints);
                v.convert(Representation::AngularPoints);
                let t = (step - 1) as f64 * dt;
                u.time = step as f64 * dt;
                v.time = u.time;
                if nonlinear {
                    let t_mid = t + 0.5 * dt;
                    let mut mid = u_prev.clone();
                    for (m, z) in mid.values.iter_mut().zip(&u.values) {
                        *m = 0.5 * (*m + z);
                    }
                    mid.time = t_mid;
                    let (v1, v2) = coefficient_fields(p, &mid);
                    let f0 = remainder_field(p, &mid, &w, t_mid);
                    let mut trial = w.clone();
                    wprop.perturbed_step_in_place(&mut trial, &v1, &v2, &f0)?;
                    let mut half = w.clone();
                    for (h, z) in half.values.iter_mut().zip(&trial.values) {
                        *h = 0.5 * (*h + z);
                    }
                    let f1 = remainder_field(p, &mid, &half, t_mid);
                    wprop.perturbed_step_in_place(&mut w, &v1, &v2, &f1)?;
                } else {
                    wprop.linear_step_in_place(&mut w)?;
                }
                w.convert(Representation::AngularPoints);
                w.time = u.time;
                if !(u.is_finite() && v.is_finite() && w.is_finite()) {
                    return Err(Error::NonFiniteField { step });
                }
                if step % stride == 0 || step == steps * factor {
                    let diff = v.difference(&u)?;
                    ref_max = ref_max.max(lebesgue_norm(&diff, 2.0));
                    err_max = err_max.max(lebesgue_norm(&w.difference(&diff)?, 2.0));
                    records.push(DiagnosticsRecord::compute(&params, &u)?);
                }
            }
            let error = if ref_max > 0.0 { err_max / ref_max } else { 0.0 };
            Ok((
                WLevel {
                    dt,
                    num_radial: nr,
                    error,
                    reference_norm: ref_max,
                },
                records,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut levels_out = Vec::new();
    for (i, (lvl, recs)) in results.into_iter().enumerate() {
        if i == 0 {
            out.records = recs;
        }
        levels_out.push(lvl);
    }
    let usable: Vec<&WLevel> = levels_out.iter().filter(|l| l.error > 0.0).collect();
    let pairwise_orders: Vec<f64> = levels_out
        .windows(2)
        .filter(|w| w[0].error > 0.0 && w[1].error > 0.0)
        .map(|w| (w[0].error / w[1].error).ln() / (w[0].dt / w[1].dt).ln())
        .collect();
    let order = (usable.len() >= 2).then(|| {
        let x: Vec<f64> = usable.iter().map(|l| l.dt).collect();
        let y: Vec<f64> = usable.iter().map(|l| l.error).collect();
        loglog_slope(&x, &y)
    });
    let th = &manifest.thresholds;
    match order {
        Some(q) => out.verdicts.push(Verdict::new(
            "w_consistency",
            q >= th.w_order,
            format!(
                "errors {:?}, measured order {q:.3} (minimum {})",
                levels_out.iter().map(|l| l.error).collect::<Vec<_>>(),
                th.w_order
            ),
        )),
        None => out
            .flags
            .push("w-consistency order skipped: errors vanish (zero perturbation or exact agreement)".into()),
    }
    out.report.w_consistency = Some(WReport {
        epsilon: eps,
        levels: levels_out,
        order,
        pairwise_orders,
    });
    Ok(())
}
