//! Fits and audits over sampled diagnostics.

use serde::Serialize;

use crate::compatibility::CompatReport;
use crate::error::{Error, Result};
use crate::functionals::DiagnosticsRecord;

/// Two-sided 95% normal quantile used for the slope confidence half-width.
const Z95: f64 = 1.959963984540054;

/// Least-squares power-law fit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub exponent: f64,
    pub confidence_halfwidth: f64,
    pub window: [f64; 2],
    /// Root-mean-square residual of the log-log regression.
    pub residual: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, standard error of b, rms residual)`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - my - slope * (a - mx);
            e * e
        })
        .sum();
    let se = if x.len() > 2 && sxx > 0.0 {
        (ssr / (m - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (slope, se, (ssr / m).sqrt())
}

/// Slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_regression(&lx, &ly).0
}

/// Fits `sup_weighted_amp ∝ ⟨t⟩^exponent` over the valid records in `window`.
///
/// The regressor is `log⟨t⟩ = ½ log(1 + t²)`, so an exact `⟨t⟩^{-1}` series
/// gives exponent −1 on any window.
pub fn decay_fit(
    series: &[DiagnosticsRecord],
    window: [f64; 2],
    threshold: f64,
    min_samples: usize,
) -> Result<FitResult> {
    let [ta, tb] = window;
    if !(ta < tb) {
        return Err(Error::OutOfRange(format!("fit window [{ta}, {tb}] is empty")));
    }
    if ta < 1.0 {
        return Err(Error::OutOfRange(format!("fit window must start at t ≥ 1 (got {ta})")));
    }
    let slack = 1e-9 * tb.abs().max(1.0);
    let picked: Vec<&DiagnosticsRecord> = series
        .iter()
        .filter(|r| r.valid && r.time >= ta - slack && r.time <= tb + slack && r.sup_weighted_amp > 0.0)
        .collect();
    if picked.len() < min_samples.max(3) {
        return Err(Error::InsufficientData(format!(
            "{} valid samples in [{ta}, {tb}], need {}",
            picked.len(),
            min_samples.max(3)
        )));
    }
    let x: Vec<f64> = picked.iter().map(|r| 0.5 * (1.0 + r.time * r.time).ln()).collect();
    let y: Vec<f64> = picked.iter().map(|r| r.sup_weighted_amp.ln()).collect();
    let (slope, se, residual) = linear_regression(&x, &y);
    Ok(FitResult {
        exponent: slope,
        confidence_halfwidth: Z95 * se,
        window,
        residual,
        samples: picked.len(),
        pass: slope <= threshold,
    })
}

/// Outcome of [`stability_fit`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityFit {
    /// Smallest `C ≥ 0` with `E(w(t)) ≤ C e^{Ct} (E(w(0)) + ‖w(0)‖²)` at every sample.
    pub c_growth: f64,
    /// Largest positive second difference of the block envelope of
    /// `log E(w)`, divided by the squared block width.
    pub curvature: f64,
    pub pass: bool,
    /// True when `E(w) ≡ 0` (identical trajectories); `C = 0` by convention.
    pub zero: bool,
}

/// Stability fit from sampled `E(w(t))`, given `E(w(0)) + ‖w(0)‖²`.
///
/// Growth test: the window is cut into `blocks` equal time blocks, the max of
/// `log E(w)` is taken in each, and the second differences of that envelope,
/// divided by `h²` (`h` the block width), must not exceed `curvature_tol`. Exponential
/// growth has zero curvature; `e^{t²}` has curvature 2.
pub fn stability_fit(
    times: &[f64],
    energies: &[f64],
    initial: f64,
    blocks: usize,
    curvature_tol: f64,
) -> Result<StabilityFit> {
    if times.len() != energies.len() {
        return Err(Error::InsufficientData(format!(
            "mismatched sampling: {} times, {} energies",
            times.len(),
            energies.len()
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InsufficientData("sample times must increase".into()));
    }
    if energies.iter().all(|&e| e == 0.0) {
        return Ok(StabilityFit {
            c_growth: 0.0,
            curvature: 0.0,
            pass: true,
            zero: true,
        });
    }
    if blocks < 3 {
        return Err(Error::OutOfRange("the curvature test needs at least 3 blocks".into()));
    }
    let t0 = times[0];
    let c_growth = if initial > 0.0 {
        times
            .iter()
            .zip(energies)
            .map(|(&t, &e)| growth_constant(t - t0, e / initial))
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let h = (times[times.len() - 1] - t0) / blocks as f64;
    let mut envelope = vec![f64::NEG_INFINITY; blocks];
    for (&t, &e) in times.iter().zip(energies) {
        if e > 0.0 {
            // Block b covers (t0 + b h, t0 + (b+1) h]; t0 itself joins block 0.
            let b = (((t - t0) / h).ceil() as usize).clamp(1, blocks) - 1;
            envelope[b] = envelope[b].max(e.ln());
        }
    }
    if envelope.iter().any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData(
            "a curvature block has no positive sample".into(),
        ));
    }
    let curvature = envelope
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]) / (h * h))
        .fold(0.0, f64::max);
    Ok(StabilityFit {
        c_growth,
        curvature,
        pass: c_growth.is_finite() && curvature <= curvature_tol,
        zero: false,
    })
}

/// Smallest `C ≥ 0` with `C e^{C t} ≥ ratio`.
fn growth_constant(t: f64, ratio: f64) -> f64 {
    if !(ratio > 0.0) {
        return 0.0;
    }
    let g = |c: f64| c * (c * t).exp() - ratio;
    let mut hi = ratio.max(1.0);
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

/// One audited Sobolev order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InflationRatio {
    pub order: usize,
    pub early_sup: f64,
    pub late_sup: f64,
    /// `None` when the early sup is zero (0/0 skipped).
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonInflationReport {
    pub split_time: f64,
    pub threshold: f64,
    pub ratios: Vec<InflationRatio>,
    /// `None` when every ratio was skipped.
    pub pass: Option<bool>,
    pub flags: Vec<String>,
}

/// `sup_{t ≥ split} ‖u‖_{Hᵏ} / sup_{t ≤ split} ‖u‖_{Hᵏ}` over valid records.
///
/// Refuses to run when `compat` is given and fails.
pub fn noninflation_audit(
    series: &[DiagnosticsRecord],
    orders: &[usize],
    split_time: f64,
    threshold: f64,
    compat: Option<&CompatReport>,
) -> Result<NonInflationReport> {
    if let Some(report) = compat {
        if let Some(j) = report.first_failure() {
            return Err(Error::Incompatible {
                order: report.order_requested,
                index: j,
                trace: report.traces[j].1,
                tolerance: report.tolerances[j],
            });
        }
    }
    let valid: Vec<&DiagnosticsRecord> = series.iter().filter(|r| r.valid).collect();
    let early: Vec<&&DiagnosticsRecord> = valid.iter().filter(|r| r.time <= split_time).collect();
    let late: Vec<&&DiagnosticsRecord> = valid.iter().filter(|r| r.time >= split_time).collect();
    if early.is_empty() || late.is_empty() {
        return Err(Error::InsufficientData(format!(
            "need valid samples on both sides of t = {split_time}"
        )));
    }
    let mut flags = Vec::new();
    let mut ratios = Vec::with_capacity(orders.len());
    for &k in orders {
        let norm = |r: &&&DiagnosticsRecord| {
            r.sobolev(k)
                .ok_or_else(|| Error::OutOfRange(format!("Sobolev order {k} is not recorded")))
        };
        let early_sup = early
            .iter()
            .map(norm)
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let late_sup = late
            .iter()
            .map(norm)
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let ratio = if early_sup > 0.0 {
            Some(late_sup / early_sup)
        } else {
            flags.push(format!("H{k} ratio 0/0 skipped"));
            None
        };
        ratios.push(InflationRatio {
            order: k,
            early_sup,
            late_sup,
            ratio,
        });
    }
    let computed: Vec<f64> = ratios.iter().filter_map(|r| r.ratio).collect();
    let pass = (!computed.is_empty()).then(|| computed.iter().all(|&r| r <= threshold));
    Ok(NonInflationReport {
        split_time,
        threshold,
        ratios,
        pass,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64, amp: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            time: t,
            mass: 1.0,
            energy: 1.0,
            pc_energy: 0.0,
            strauss_ratio: 0.0,
            sup_weighted_amp: amp,
            h0: amp,
            h1: amp,
            h2: amp,
            h4: amp,
            linf: amp,
            outer_mass_fraction: 0.0,
            valid: true,
            flags: Vec::new(),
        }
    }

    fn bracket(t: f64) -> f64 {
        (1.0 + t * t).sqrt()
    }

    #[test]
    fn recovers_bracket_power_law() {
        let series: Vec<_> = (0..=80)
            .map(|k| record(0.5 * k as f64, 3.0 / bracket(0.5 * k as f64)))
            .collect();
        let fit = decay_fit(&series, [2.0, 40.0], -0.85, 8).unwrap();
        assert!((fit.exponent + 1.0).abs() < 1e-3, "{fit:?}");
        assert!(fit.residual < 1e-12);
        assert!(fit.pass);
        assert_eq!(fit.samples, 77);
    }

    #[test]
    fn constant_series_fails() {
        let series: Vec<_> = (0..=40).map(|k| record(k as f64, 2.0)).collect();
        let fit = decay_fit(&series, [2.0, 40.0], -0.85, 8).unwrap();
        assert!(fit.exponent.abs() < 1e-12);
        assert!(!fit.pass);
    }

    #[test]
    fn invalid_records_are_excluded() {
        let mut series: Vec<_> = (0..=40).map(|k| record(k as f64, 1.0 / bracket(k as f64))).collect();
        for r in series.iter_mut().skip(20) {
            r.valid = false;
            r.sup_weighted_amp = 1e3;
        }
        let fit = decay_fit(&series, [2.0, 40.0], -0.85, 8).unwrap();
        assert_eq!(fit.samples, 18);
        assert!((fit.exponent + 1.0).abs() < 1e-3);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let series: Vec<_> = (0..=5).map(|k| record(2.0 + k as f64, 1.0)).collect();
        assert!(matches!(
            decay_fit(&series, [2.0, 40.0], -0.85, 8),
            Err(Error::InsufficientData(_))
        ));
        assert!(decay_fit(&series, [0.5, 4.0], -0.85, 3).is_err());
    }

    fn grid(a: f64, b: f64, m: usize) -> Vec<f64> {
        (0..=m).map(|k| a + (b - a) * k as f64 / m as f64).collect()
    }

    #[test]
    fn identical_trajectories_give_zero_constant() {
        let t = grid(0.0, 10.0, 50);
        let fit = stability_fit(&t, &vec![0.0; t.len()], 0.0, 5, 0.1).unwrap();
        assert!(fit.zero && fit.pass);
        assert_eq!(fit.c_growth, 0.0);
    }

    #[test]
    fn exponential_growth_passes_with_its_rate() {
        let t = grid(0.0, 10.0, 200);
        let e: Vec<f64> = t.iter().map(|t| 0.5 * (0.7 * t).exp()).collect();
        let fit = stability_fit(&t, &e, 1.0, 5, 0.1).unwrap();
        assert!(fit.pass, "{fit:?}");
        assert!(fit.curvature < 1e-12);
        for (t, e) in t.iter().zip(&e) {
            assert!(fit.c_growth * (fit.c_growth * t).exp() >= *e * (1.0 - 1e-12));
        }
        assert!(fit.c_growth < 0.7);
    }

    #[test]
    fn calibration_fixtures() {
        // Polynomial growth is concave in log: passes.
        let t = grid(0.0, 10.0, 200);
        let quartic: Vec<f64> = t.iter().map(|t| 1e-6 * t.powi(4)).collect();
        let fit = stability_fit(&t, &quartic, 1e-6, 5, 0.1).unwrap();
        assert!(fit.pass, "{fit:?}");
        // Super-exponential growth fails.
        let gauss: Vec<f64> = t.iter().map(|t| 1e-6 * (t * t).exp()).collect();
        let fit = stability_fit(&t, &gauss, 1e-6, 5, 0.1).unwrap();
        assert!(!fit.pass);
        assert!((fit.curvature - 2.0).abs() < 0.3, "{fit:?}");
    }

    #[test]
    fn mismatched_sampling_is_an_error() {
        assert!(stability_fit(&[0.0, 1.0], &[1.0], 1.0, 5, 0.1).is_err());
    }

    #[test]
    fn noninflation_ratios() {
        let series: Vec<_> = (0..=40)
            .map(|k| record(k as f64, if k <= 5 { 2.0 } else { 3.0 }))
            .collect();
        let rep = noninflation_audit(&series, &[2, 4], 5.0, 3.0, None).unwrap();
        assert_eq!(rep.ratios[0].ratio, Some(1.5));
        assert_eq!(rep.pass, Some(true));
        let zero: Vec<_> = (0..=40).map(|k| record(k as f64, 0.0)).collect();
        let rep = noninflation_audit(&zero, &[2], 5.0, 3.0, None).unwrap();
        assert_eq!(rep.ratios[0].ratio, None);
        assert_eq!(rep.pass, None);
        assert_eq!(rep.flags.len(), 1);
    }

    #[test]
    fn slopes() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
