//! Scenario runner: manifests, initial-data profiles, fits, the Strichartz
//! probe and the CSV/JSON artifacts.

pub mod fit;
pub mod manifest;
pub mod output;
pub mod profiles;
pub mod runner;
pub mod strichartz;

pub use fit::{decay_fit, noninflation_audit, stability_fit, FitResult, NonInflationReport, StabilityFit};
pub use manifest::{expand_sweep, CompatSpec, RunManifest, Scenario, Thresholds};
pub use output::{write_run, Environment, RunReport};
pub use profiles::Profile;
pub use runner::{check_compatibility, run_scenario, Anomaly, CompatSummary, RunOutput, ScenarioReport, Verdict};
pub use strichartz::{strichartz_quotient, StrichartzSetup, StrichartzTable};
