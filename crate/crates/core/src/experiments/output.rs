//! CSV and JSON artifacts.
//!
//! CSV floats are written with `{:.16e}` (17 significant digits); `valid` is
//! `1` or `0`. The JSON report holds the manifest echo, the environment stamp,
//! the verdicts and the scenario sections. Nothing time-dependent is written,
//! so identical manifests give identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::RunManifest;
use super::runner::{Anomaly, RunOutput, Verdict};
use crate::domain::FieldState;
use crate::error::{Error, Result};
use crate::functionals::DiagnosticsRecord;
use crate::operators::Scheme;

pub const CSV_COLUMNS: [&str; 12] = [
    "time",
    "mass",
    "energy",
    "pc_energy",
    "strauss_ratio",
    "sup_weighted_amp",
    "h1",
    "h2",
    "h4",
    "linf",
    "outer_mass_fraction",
    "valid",
];

/// Build and platform stamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub scheme: Scheme,
    pub target_os: String,
    pub target_arch: String,
    pub debug_assertions: bool,
}

impl Environment {
    pub fn current(scheme: Scheme) -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            scheme,
            target_os: std::env::consts::OS.into(),
            target_arch: std::env::consts::ARCH.into(),
            debug_assertions: cfg!(debug_assertions),
        }
    }
}

/// The JSON document written next to the CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    /// `"pass"`, `"fail"` or `"anomaly"`.
    pub status: String,
    pub exit_code: i32,
    pub verdicts: Vec<Verdict>,
    pub anomalies: Vec<Anomaly>,
    pub flags: Vec<String>,
    /// Files written, relative to the run directory.
    pub outputs: Vec<String>,
    pub environment: Environment,
    pub manifest: RunManifest,
    pub report: serde_json::Value,
}

impl RunReport {
    pub fn from_output(out: &RunOutput, outputs: Vec<String>) -> Result<Self> {
        let exit_code = out.exit_code();
        Ok(Self {
            scenario: out.manifest.scenario.name().into(),
            status: status_name(exit_code).into(),
            exit_code,
            verdicts: out.verdicts.clone(),
            anomalies: out.anomalies.clone(),
            flags: out.flags.clone(),
            outputs,
            environment: Environment::current(out.manifest.scheme),
            manifest: out.manifest.clone(),
            report: serde_json::to_value(&out.report)?,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn status_name(exit_code: i32) -> &'static str {
    match exit_code {
        0 => "pass",
        2 => "fail",
        _ => "anomaly",
    }
}

fn float(s: &mut String, x: f64) {
    if x.is_nan() {
        s.push_str("NaN");
    } else if x.is_infinite() {
        s.push_str(if x > 0.0 { "inf" } else { "-inf" });
    } else {
        let _ = write!(s, "{x:.16e}");
    }
}

pub fn csv_string(records: &[DiagnosticsRecord]) -> String {
    let mut s = CSV_COLUMNS.join(",");
    s.push('\n');
    for r in records {
        for x in [
            r.time,
            r.mass,
            r.energy,
            r.pc_energy,
            r.strauss_ratio,
            r.sup_weighted_amp,
            r.h1,
            r.h2,
            r.h4,
            r.linf,
            r.outer_mass_fraction,
        ] {
            float(&mut s, x);
            s.push(',');
        }
        s.push(if r.valid { '1' } else { '0' });
        s.push('\n');
    }
    s
}

/// Parses a diagnostics CSV written by [`csv_string`]. `h0` is rebuilt from
/// the mass; flags are not stored in the CSV.
pub fn parse_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InsufficientData("empty CSV".into()))?;
    if header.split(',').ne(CSV_COLUMNS) {
        return Err(Error::InsufficientData(format!("unexpected CSV header: {header}")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != CSV_COLUMNS.len() {
                return Err(Error::InsufficientData(format!(
                    "row {} has {} cells",
                    i + 1,
                    cells.len()
                )));
            }
            let num = |k: usize| {
                cells[k]
                    .parse::<f64>()
                    .map_err(|_| Error::InsufficientData(format!("row {}: bad value {:?}", i + 1, cells[k])))
            };
            Ok(DiagnosticsRecord {
                time: num(0)?,
                mass: num(1)?,
                energy: num(2)?,
                pc_energy: num(3)?,
                strauss_ratio: num(4)?,
                sup_weighted_amp: num(5)?,
                h0: num(1)?.max(0.0).sqrt(),
                h1: num(6)?,
                h2: num(7)?,
                h4: num(8)?,
                linf: num(9)?,
                outer_mass_fraction: num(10)?,
                valid: cells[11] == "1",
                flags: Vec::new(),
            })
        })
        .collect()
}

fn snapshot_csv(state: &FieldState) -> String {
    let pts = state.to_points();
    let mut s = String::from("angular_index,r,re,im\n");
    for a in 0..pts.num_angular() {
        for (z, &r) in pts.row(a).iter().zip(&pts.domain.nodes) {
            let _ = write!(s, "{a},");
            float(&mut s, r);
            s.push(',');
            float(&mut s, z.re);
            s.push(',');
            float(&mut s, z.im);
            s.push('\n');
        }
    }
    s
}

/// Writes the CSV(s), optional snapshots and the JSON report into `dir`
/// (created if missing). Returns the report.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<RunReport> {
    fs::create_dir_all(dir)?;
    let spec = &out.manifest.output;
    let mut outputs = Vec::new();
    fs::write(dir.join(&spec.csv), csv_string(&out.records))?;
    outputs.push(spec.csv.clone());
    for (name, records) in &out.extra_series {
        fs::write(dir.join(name), csv_string(records))?;
        outputs.push(name.clone());
    }
    if !out.snapshots.is_empty() {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir)?;
        for (k, state) in out.snapshots.iter().enumerate() {
            let name = format!("snapshot_{k:05}.csv");
            fs::write(snap_dir.join(&name), snapshot_csv(state))?;
            outputs.push(format!("snapshots/{name}"));
        }
    }
    outputs.push(spec.report.clone());
    let report = RunReport::from_output(out, outputs)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(dir.join(&spec.report), text)?;
    Ok(report)
}

/// Directory a manifest writes to, unless overridden.
pub fn default_dir(manifest: &RunManifest) -> PathBuf {
    manifest.output.dir.clone()
}
