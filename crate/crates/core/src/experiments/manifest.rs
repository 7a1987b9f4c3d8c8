//! Run manifests.
//!
//! A manifest is a TOML document describing one run. Unknown keys are
//! rejected at every level. Calibration thresholds live in `[thresholds]`
//! and are echoed into every report.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::profiles::Profile;
use crate::domain::{build_domain, DiscDomain, ModelParams};
use crate::error::{Error, Result};
use crate::functionals::{check_admissible, strauss_constant_3d};
use crate::operators::Scheme;

/// Manifest schema version understood by this build.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    RadialGlobal,
    DecayRate,
    NonInflation,
    Perturbed,
    Stability,
    LinearStrichartz,
    CompatCheck,
    WConsistency,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::RadialGlobal => "radial_global",
            Scenario::DecayRate => "decay_rate",
            Scenario::NonInflation => "non_inflation",
            Scenario::Perturbed => "perturbed",
            Scenario::Stability => "stability",
            Scenario::LinearStrichartz => "linear_strichartz",
            Scenario::CompatCheck => "compat_check",
            Scenario::WConsistency => "w_consistency",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub n: usize,
    pub p: f64,
    pub r_max: f64,
}

impl ParamsSpec {
    pub fn model(&self) -> Result<ModelParams> {
        ModelParams::new(self.n, self.p, self.r_max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub num_radial: usize,
    #[serde(default = "one")]
    pub num_angular: usize,
}

/// Calibration constants. None of them comes from the analysis; they are
/// the pass/fail margins of the numerical checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Decay fit passes when the exponent is at most this.
    pub decay_exponent: f64,
    /// Minimum number of valid samples in a fit window.
    pub min_fit_samples: usize,
    /// Largest allowed max/min ratio of ensemble-max Strichartz quotients.
    pub strichartz_variation: f64,
    /// Allowed deviation of the `(∞, 2)` quotient from 1.
    pub strichartz_unit: f64,
    /// Largest allowed late/early Sobolev ratio.
    pub noninflation_ratio: f64,
    /// Relative slack of the monotonicity audit.
    pub monotonicity_tolerance: f64,
    /// Relative tolerance of `E₁(0) = ⅛‖x u₀‖²`.
    pub e1_identity: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
    /// Bound on `sup r^{1/2}|u| / ‖∇u‖` (n = 3).
    pub strauss_constant: f64,
    /// Number of time blocks in the stability curvature test.
    pub stability_blocks: usize,
    /// Largest allowed positive curvature of the block envelope of `log E(w)`.
    pub stability_curvature: f64,
    /// Expected log-log slope of `E(w(0))` against ε.
    pub epsilon_slope: f64,
    pub epsilon_slope_tolerance: f64,
    /// Minimum measured refinement order of the w-equation cross-check.
    pub w_order: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            decay_exponent: -0.85,
            min_fit_samples: 8,
            strichartz_variation: 2.0,
            strichartz_unit: 1e-12,
            noninflation_ratio: 3.0,
            monotonicity_tolerance: crate::pseudoconformal::MONOTONICITY_TOLERANCE,
            e1_identity: 1e-3,
            mass_drift: 1e-10,
            energy_drift: 1e-4,
            strauss_constant: strauss_constant_3d(),
            stability_blocks: 5,
            stability_curvature: 0.1,
            epsilon_slope: 2.0,
            epsilon_slope_tolerance: 0.1,
            w_order: 1.0,
        }
    }
}

/// Scenario-specific knobs. Each scenario reads the fields it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioOptions {
    /// Decay fit window; defaults to `[2, T_final]`.
    pub fit_window: Option<[f64; 2]>,
    /// Early/late split of the non-inflation audit.
    pub split_time: f64,
    /// Sobolev orders audited for non-inflation.
    pub orders: Vec<usize>,
    /// Perturbation sizes relative to `‖u₀‖_{H^{2m}}`.
    pub epsilons: Vec<f64>,
    /// Strichartz pairs `[q, r]`; `inf` (or the string `"inf"`) is accepted.
    #[serde(with = "exponent_pairs")]
    pub pairs: Vec<[f64; 2]>,
    pub ensemble_size: usize,
    /// Number of grids in the Strichartz resolution ladder.
    pub resolutions: usize,
    /// Number of joint `(dt, dr)` levels in the w-equation cross-check.
    pub refinement_levels: usize,
    /// Compatibility order checked by `compat_check` (and the audit order
    /// for `non_inflation` when unset).
    pub compat_order: Option<usize>,
    /// Use the nonlinear ψ-sequence; defaults to the manifest's `nonlinear`.
    pub compat_nonlinear: Option<bool>,
    /// Expected verdict of `compat_check`; the verdict is "compatible" when unset.
    pub expect_compatible: Option<bool>,
    pub trace_factor: f64,
    /// Enforce the validity horizon; defaults to false for domain-filling
    /// eigenmode data and true otherwise.
    pub horizon_check: Option<bool>,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            fit_window: None,
            split_time: 5.0,
            orders: vec![2, 4],
            epsilons: vec![1e-1, 1e-2, 1e-3],
            pairs: vec![[f64::INFINITY, 2.0], [4.0, 3.0]],
            ensemble_size: 20,
            resolutions: 3,
            refinement_levels: 3,
            compat_order: None,
            compat_nonlinear: None,
            expect_compatible: None,
            trace_factor: crate::compatibility::DEFAULT_TRACE_FACTOR,
            horizon_check: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub csv: String,
    pub report: String,
    /// Also write the field at every sampled time.
    pub snapshots: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            csv: "diagnostics.csv".into(),
            report: "report.json".into(),
            snapshots: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub scenario: Scenario,
    #[serde(default)]
    pub scheme: Scheme,
    pub params: ParamsSpec,
    pub domain: DomainSpec,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "one")]
    pub sample_stride: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub nonlinear: bool,
    pub initial_data: Profile,
    #[serde(default)]
    pub perturbation: Option<Profile>,
    #[serde(default)]
    pub options: ScenarioOptions,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Infinite exponents are written as the string `"inf"` so the JSON echo of
/// a manifest reads back.
pub(crate) mod exponent_pairs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Exponent {
        Number(f64),
        Text(String),
    }

    fn encode(x: f64) -> Exponent {
        if x.is_infinite() && x > 0.0 {
            Exponent::Text("inf".into())
        } else {
            Exponent::Number(x)
        }
    }

    fn decode<E: serde::de::Error>(e: Exponent) -> Result<f64, E> {
        match e {
            Exponent::Number(x) => Ok(x),
            Exponent::Text(s) if s == "inf" => Ok(f64::INFINITY),
            Exponent::Text(s) => Err(E::custom(format!("bad exponent {s:?}"))),
        }
    }

    pub fn serialize_one<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        encode(*x).serialize(s)
    }

    pub fn serialize<S: Serializer>(pairs: &[[f64; 2]], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<[Exponent; 2]> = pairs.iter().map(|&[q, r]| [encode(q), encode(r)]).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<[f64; 2]>, D::Error> {
        Vec::<[Exponent; 2]>::deserialize(d)?
            .into_iter()
            .map(|[q, r]| Ok([decode(q)?, decode(r)?]))
            .collect()
    }
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn format_version() -> u32 {
    FORMAT_VERSION
}

impl RunManifest {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let m: RunManifest = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    /// Reads and validates a manifest. A relative `output.dir` is left as
    /// written (relative to the working directory).
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Manifest(msg) => Error::Manifest(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        self.params.model()
    }

    pub fn build_domain(&self) -> Result<Arc<DiscDomain>> {
        build_domain(self.model_params()?, self.domain.num_radial, self.domain.num_angular)
    }

    /// Number of time steps; `t_final` must be an integer multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        let ratio = self.t_final / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Manifest(format!(
                "t_final = {} is not a multiple of dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(steps as usize)
    }

    /// Whether the validity horizon is enforced for this run.
    pub fn horizon_check(&self) -> bool {
        self.options
            .horizon_check
            .unwrap_or_else(|| !self.initial_data.is_domain_filling())
    }

    pub fn fit_window(&self) -> [f64; 2] {
        self.options.fit_window.unwrap_or([2.0, self.t_final])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Manifest(msg));
        if self.format_version != FORMAT_VERSION {
            return bad(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        let params = self.model_params()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad(format!("t_final = {} must be non-negative", self.t_final));
        }
        if self.sample_stride == 0 {
            return bad("sample_stride must be at least 1".into());
        }
        self.steps()?;
        let domain = self.build_domain()?;
        self.initial_data.validate(&params, domain.num_angular)?;
        if let Some(p) = &self.perturbation {
            p.validate(&params, domain.num_angular)?;
        }
        let o = &self.options;
        if o.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("epsilons must be positive".into());
        }
        if o.orders.iter().any(|&k| !matches!(k, 0 | 1 | 2 | 4)) {
            return bad("non-inflation orders must be among {0, 1, 2, 4}".into());
        }
        if !(o.split_time > 0.0) {
            return bad("split_time must be positive".into());
        }
        if let Some([a, b]) = o.fit_window {
            if !(a < b) {
                return bad(format!("fit window [{a}, {b}] is empty"));
            }
        }
        if !(o.trace_factor > 0.0) {
            return bad("trace_factor must be positive".into());
        }
        match self.scenario {
            Scenario::Perturbed => {
                if !(params.p > params.n as f64 + 6.0) {
                    return bad(format!(
                        "perturbed runs require p > n + 6 (n = {}, p = {})",
                        params.n, params.p
                    ));
                }
                if self.perturbation.is_none() {
                    return bad("perturbed runs need a [perturbation] profile".into());
                }
            }
            Scenario::Stability | Scenario::WConsistency => {
                if self.perturbation.is_none() {
                    return bad(format!("{} runs need a [perturbation] profile", self.scenario.name()));
                }
                if self.scenario == Scenario::WConsistency && o.refinement_levels < 2 {
                    return bad("refinement_levels must be at least 2".into());
                }
            }
            Scenario::LinearStrichartz => {
                if o.resolutions == 0 || o.ensemble_size == 0 {
                    return bad("resolutions and ensemble_size must be at least 1".into());
                }
                for &[q, r] in &o.pairs {
                    check_pair(params.n, q, r)?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Input of the `compat` subcommand: data and grid only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompatSpec {
    pub params: ParamsSpec,
    pub domain: DomainSpec,
    pub initial_data: Profile,
    #[serde(default = "two")]
    pub order: usize,
    #[serde(default)]
    pub nonlinear: bool,
    #[serde(default = "trace_factor")]
    pub trace_factor: f64,
    #[serde(default)]
    pub seed: u64,
}

fn two() -> usize {
    2
}

fn trace_factor() -> f64 {
    crate::compatibility::DEFAULT_TRACE_FACTOR
}

impl CompatSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: CompatSpec = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        let params = spec.params.model()?;
        spec.initial_data.validate(&params, spec.domain.num_angular)?;
        Ok(spec)
    }
}

/// Expands a sweep axis `dotted.key=v1,v2,...` over a manifest template.
/// Values are TOML literals; use `;` as the separator when a value contains
/// commas (arrays). Returns `(label, manifest)` pairs in axis order.
pub fn expand_sweep(template: &str, axis: &str) -> Result<Vec<(String, RunManifest)>> {
    let (key, values) = axis
        .split_once('=')
        .ok_or_else(|| Error::Manifest(format!("sweep axis {axis:?} is not of the form key=v1,v2,...")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Manifest("empty sweep key".into()));
    }
    let base: toml::Table = template
        .parse()
        .map_err(|e: toml::de::Error| Error::Manifest(e.to_string()))?;
    let sep = if values.contains(';') { ';' } else { ',' };
    values
        .split(sep)
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|raw| {
            let value = parse_literal(raw);
            let mut doc = base.clone();
            set_path(&mut doc, key, value)?;
            let text = toml::to_string(&doc).map_err(|e| Error::Manifest(e.to_string()))?;
            let label = format!("{key}={raw}");
            let m = RunManifest::from_toml_str(&text).map_err(|e| Error::Manifest(format!("{label}: {e}")))?;
            Ok((label, m))
        })
        .collect()
}

fn parse_literal(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, head) = parts.split_last().expect("split yields at least one part");
    let mut table = doc;
    for part in head {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Manifest(format!("sweep key {key}: {part} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Rejects inadmissible and endpoint pairs, and `r = ∞` in dimension 2.
pub fn check_pair(n: usize, q: f64, r: f64) -> Result<()> {
    let adm = check_admissible(n, q, r);
    if !adm.admissible {
        return Err(Error::Inadmissible { n, q, r });
    }
    if adm.endpoint || (n == 2 && r.is_infinite()) {
        return Err(Error::Endpoint { q, r });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
scenario = "radial_global"
dt = 0.01
t_final = 1.0
sample_stride = 10

[params]
n = 3
p = 10.0
r_max = 20.0

[domain]
num_radial = 200

[initial_data]
profile = "gaussian_ring"
power = 3
width = 0.25
"#;

    #[test]
    fn minimal_manifest_parses_with_defaults() {
        let m = RunManifest::from_toml_str(MINIMAL).unwrap();
        assert_eq!(m.scenario, Scenario::RadialGlobal);
        assert_eq!(m.domain.num_angular, 1);
        assert_eq!(m.steps().unwrap(), 100);
        assert!(m.nonlinear);
        assert_eq!(m.thresholds, Thresholds::default());
        assert_eq!(m.fit_window(), [2.0, 1.0]);
        assert!(m.horizon_check());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = MINIMAL.replace("sample_stride = 10", "sample_stride = 10\nbogus = 1");
        assert!(matches!(RunManifest::from_toml_str(&text), Err(Error::Manifest(_))));
        let text = MINIMAL.replace("width = 0.25", "width = 0.25\ncenter = 3.0");
        assert!(matches!(RunManifest::from_toml_str(&text), Err(Error::Manifest(_))));
        let text = format!("{MINIMAL}\n[thresholds]\ndecay = 1.0\n");
        assert!(matches!(RunManifest::from_toml_str(&text), Err(Error::Manifest(_))));
    }

    #[test]
    fn round_trips_through_toml() {
        let m = RunManifest::from_toml_str(MINIMAL).unwrap();
        let back = RunManifest::from_toml_str(&m.to_toml_string().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn round_trips_through_json_with_infinite_exponent() {
        let m = RunManifest::from_toml_str(MINIMAL).unwrap();
        assert!(m.options.pairs[0][0].is_infinite());
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"inf\""));
        let back: RunManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rejects_bad_time_grid() {
        let text = MINIMAL.replace("t_final = 1.0", "t_final = 1.005");
        assert!(RunManifest::from_toml_str(&text).is_err());
        let text = MINIMAL.replace("dt = 0.01", "dt = 0.0");
        assert!(RunManifest::from_toml_str(&text).is_err());
    }

    #[test]
    fn perturbed_requires_supercritical_power() {
        let text = MINIMAL
            .replace("radial_global", "perturbed")
            .replace("n = 3", "n = 2")
            .replace("p = 10.0", "p = 7.0");
        let text = format!(
            "{text}\n[perturbation]\nprofile = \"angular\"\nmode = 1\n[perturbation.radial]\nprofile = \"gaussian_ring\"\npower = 3\nwidth = 0.5\n"
        );
        let text = text.replace("num_radial = 200", "num_radial = 200\nnum_angular = 8");
        assert!(RunManifest::from_toml_str(&text).is_err());
        let ok = text.replace("p = 7.0", "p = 9.0");
        RunManifest::from_toml_str(&ok).unwrap();
    }

    #[test]
    fn sweep_expands_values_in_order() {
        let points = expand_sweep(MINIMAL, "params.p=7,9.5,11").unwrap();
        let ps: Vec<f64> = points.iter().map(|(_, m)| m.params.p).collect();
        assert_eq!(ps, vec![7.0, 9.5, 11.0]);
        assert_eq!(points[1].0, "params.p=9.5");
        let points = expand_sweep(MINIMAL, "options.fit_window=[1.0, 2.0];[2.0, 4.0]").unwrap();
        assert_eq!(points[1].1.options.fit_window, Some([2.0, 4.0]));
        let points = expand_sweep(MINIMAL, "scenario=\"decay_rate\"").unwrap();
        assert_eq!(points[0].1.scenario, Scenario::DecayRate);
        assert!(expand_sweep(MINIMAL, "params.q=1").is_err());
        assert!(expand_sweep(MINIMAL, "dt").is_err());
    }

    #[test]
    fn compat_spec_parses() {
        let spec = CompatSpec::from_toml_str(
            "order = 3\nnonlinear = true\n[params]\nn = 3\np = 11.0\nr_max = 41.0\n[domain]\nnum_radial = 799\n[initial_data]\nprofile = \"exp_polynomial\"\npower = 3\nrate = 1.0\n",
        )
        .unwrap();
        assert_eq!(spec.order, 3);
        assert!(spec.nonlinear);
        assert!(CompatSpec::from_toml_str("order = 2\n").is_err());
    }

    #[test]
    fn strichartz_pairs_are_checked() {
        assert!(check_pair(3, 4.0, 3.0).is_ok());
        assert!(check_pair(3, f64::INFINITY, 2.0).is_ok());
        assert!(matches!(check_pair(3, 4.0, 4.0), Err(Error::Inadmissible { .. })));
        assert!(matches!(check_pair(3, 2.0, 6.0), Err(Error::Endpoint { .. })));
        assert!(matches!(check_pair(2, 2.0, f64::INFINITY), Err(Error::Endpoint { .. })));
    }
}
