//! Command-line front end of the experiment runner.
//!
//! Exit codes: 0 every verdict passes, 2 a verdict fails, 3 a runtime anomaly
//! (non-finite field or validity-horizon abort), 1 invalid input.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use extnls::experiments::output::{status_name, write_run, RunReport};
use extnls::experiments::{check_compatibility, expand_sweep, run_scenario, CompatSpec, RunManifest, Scenario};

#[derive(Parser)]
#[command(name = "extnls", version, about = "Exterior-domain defocusing NLS experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one manifest.
    Run {
        manifest: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a manifest template once per value of `axis` (`key=v1,v2,...`).
    Sweep {
        template: PathBuf,
        axis: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the compatibility conditions of a data spec; prints JSON.
    Compat { spec: PathBuf },
    /// Run the Strichartz probe with a manifest's grid and data.
    Strichartz {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a finished run directory.
    Report { run_dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run { manifest, out } => {
            let m = RunManifest::from_path(&manifest)?;
            run_one(&m, out.as_deref())
        }
        Command::Strichartz { manifest, out } => {
            let mut m = RunManifest::from_path(&manifest)?;
            m.scenario = Scenario::LinearStrichartz;
            m.nonlinear = false;
            m.validate()?;
            run_one(&m, out.as_deref())
        }
        Command::Sweep { template, axis, out } => sweep(&template, &axis, out.as_deref()),
        Command::Compat { spec } => {
            let text = std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec = CompatSpec::from_toml_str(&text)?;
            let summary = check_compatibility(&spec)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(if summary.compatible { 0 } else { 2 })
        }
        Command::Report { run_dir } => report(&run_dir),
    }
}

fn run_one(m: &RunManifest, out: Option<&Path>) -> Result<i32> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| m.output.dir.clone());
    eprintln!("[run] {} -> {}", m.scenario.name(), dir.display());
    let output = run_scenario(m)?;
    let report = write_run(&output, &dir)?;
    print_report(&report);
    Ok(report.exit_code)
}

fn print_report(report: &RunReport) {
    for v in &report.verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    for a in &report.anomalies {
        println!("ANOMALY {}: {}", a.run, a.detail);
    }
    for f in &report.flags {
        println!("FLAG {f}");
    }
    println!("status: {} (exit {})", report.status, report.exit_code);
}

#[derive(Serialize)]
struct SweepPoint {
    label: String,
    dir: String,
    status: String,
    exit_code: i32,
    failed: Vec<String>,
}

fn sweep(template: &Path, axis: &str, out: Option<&Path>) -> Result<i32> {
    let text = std::fs::read_to_string(template).with_context(|| format!("reading {}", template.display()))?;
    let points = expand_sweep(&text, axis)?;
    let root = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| points.first().map(|p| p.1.output.dir.clone()).unwrap_or_default());
    let results = points
        .par_iter()
        .enumerate()
        .map(|(i, (label, m))| -> Result<SweepPoint> {
            let name = format!("point_{i:03}");
            let dir = root.join(&name);
            let output = run_scenario(m).with_context(|| label.clone())?;
            let report = write_run(&output, &dir)?;
            Ok(SweepPoint {
                label: label.clone(),
                dir: name,
                status: report.status.clone(),
                exit_code: report.exit_code,
                failed: report
                    .verdicts
                    .iter()
                    .filter(|v| !v.pass)
                    .map(|v| v.name.clone())
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let code = results.iter().map(|p| p.exit_code).max().unwrap_or(0);
    for p in &results {
        println!("{:8} {} ({})", p.status, p.label, p.dir);
    }
    let summary = serde_json::json!({
        "axis": axis,
        "status": status_name(code),
        "exit_code": code,
        "points": results,
    });
    std::fs::create_dir_all(&root)?;
    std::fs::write(root.join("sweep.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("status: {} (exit {code})", status_name(code));
    Ok(code)
}

fn report(run_dir: &Path) -> Result<i32> {
    let path = run_dir.join("report.json");
    let report = RunReport::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let csv_path = run_dir.join(&report.manifest.output.csv);
    let csv = std::fs::read_to_string(&csv_path).with_context(|| format!("reading {}", csv_path.display()))?;
    let records = extnls::experiments::output::parse_csv(&csv)?;
    let invalid = records.iter().filter(|r| !r.valid).count();
    println!(
        "{}: {} samples ({} invalid), t in [{}, {}]",
        report.scenario,
        records.len(),
        invalid,
        records.first().map_or(0.0, |r| r.time),
        records.last().map_or(0.0, |r| r.time)
    );
    print_report(&report);
    Ok(report.exit_code)
}
