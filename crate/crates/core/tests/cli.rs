//! End-to-end tests of the `extnls` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use extnls::experiments::output::{parse_csv, RunReport};

fn extnls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_extnls")).args(args).output().unwrap()
}

fn manifests() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const SMALL: &str = r#"
scenario = "radial_global"
dt = 0.01
t_final = 1.0
sample_stride = 10

[params]
n = 3
p = 10.0
r_max = 21.0

[domain]
num_radial = 799

[initial_data]
profile = "gaussian_ring"
amplitude = 0.5
power = 3
width = 1.0
"#;

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.toml", SMALL);
    let out = dir.path().join("out");
    let o = extnls(&["run", &m, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report = RunReport::read(&out.join("report.json")).unwrap();
    assert_eq!(report.status, "pass");
    assert_eq!(report.outputs, ["diagnostics.csv", "report.json"]);
    let records = parse_csv(&std::fs::read_to_string(out.join("diagnostics.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 11);
    assert!(records.windows(2).all(|w| w[0].time < w[1].time));

    let o = extnls(&["report", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("11 samples (0 invalid)"), "{text}");
    assert!(text.contains("PASS mass_conservation"), "{text}");
}

#[test]
fn invalid_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "bad.toml", &format!("{SMALL}\ncolour = \"red\"\n"));
    let o = extnls(&["run", &m]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    assert_eq!(extnls(&["run", "/nonexistent.toml"]).status.code(), Some(1));
    assert_eq!(extnls(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(extnls(&["--help"]).status.code(), Some(0));
}

#[test]
fn horizon_violation_is_an_anomaly() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("r_max = 21.0", "r_max = 6.0")
        .replace("num_radial = 799", "num_radial = 199")
        .replace("t_final = 1.0", "t_final = 4.0");
    let m = write(dir.path(), "m.toml", &text);
    let out = dir.path().join("out");
    let o = extnls(&["run", &m, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
    let records = parse_csv(&std::fs::read_to_string(out.join("diagnostics.csv")).unwrap()).unwrap();
    let last = records.last().unwrap();
    assert!(!last.valid);
    assert!(last.time < 4.0);
    assert_eq!(records.iter().filter(|r| !r.valid).count(), 1);
    let report = RunReport::read(&out.join("report.json")).unwrap();
    assert_eq!(report.status, "anomaly");
    assert_eq!(report.anomalies.len(), 1);
}

#[test]
fn zero_data_gives_zero_diagnostics_and_a_flag() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("radial_global", "decay_rate").replace(
        "profile = \"gaussian_ring\"\namplitude = 0.5\npower = 3\nwidth = 1.0",
        "profile = \"zero\"",
    );
    let m = write(dir.path(), "m.toml", &text);
    let out = dir.path().join("out");
    let o = extnls(&["run", &m, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report = RunReport::read(&out.join("report.json")).unwrap();
    assert!(
        report.flags.iter().any(|f| f.contains("decay fit skipped")),
        "{:?}",
        report.flags
    );
    let records = parse_csv(&std::fs::read_to_string(out.join("diagnostics.csv")).unwrap()).unwrap();
    for r in &records {
        assert_eq!(r.mass, 0.0);
        assert_eq!(r.energy, 0.0);
        assert_eq!(r.sup_weighted_amp, 0.0);
        assert_eq!(r.h2, 0.0);
        assert!(r.valid);
    }
}

#[test]
fn compat_subcommand() {
    let spec = manifests().join("compat_spec.toml");
    let o = extnls(&["compat", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["compatible"], true);

    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(&spec)
        .unwrap()
        .replace("power = 3", "power = 1")
        .replace("n = 3", "n = 2");
    let failing = write(dir.path(), "spec.toml", &text);
    let o = extnls(&["compat", &failing]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["first_failure"], 1);
}

#[test]
fn sweep_reports_the_worst_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let template = manifests().join("compat_eigenmode.toml");
    let out = dir.path().join("sweep");
    let o = extnls(&[
        "sweep",
        template.to_str().unwrap(),
        "options.expect_compatible=true,false",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let points = summary["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    assert_eq!(points[0]["status"], "pass");
    assert_eq!(points[1]["status"], "fail");
    assert!(out.join("point_001/report.json").exists());
}

#[test]
fn strichartz_subcommand_forces_the_linear_probe() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
scenario = "radial_global"
dt = 0.01
t_final = 1.0
sample_stride = 10

[params]
n = 3
p = 10.0
r_max = 11.0

[domain]
num_radial = 99

[initial_data]
profile = "random_eigenmodes"

[options]
ensemble_size = 4
resolutions = 2
"#;
    let m = write(dir.path(), "m.toml", text);
    let out = dir.path().join("out");
    let o = extnls(&["strichartz", &m, "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("PASS strichartz_qinf_r2"), "{stdout}");
    let report = RunReport::read(&out.join("report.json")).unwrap();
    assert_eq!(report.scenario, "linear_strichartz");
    assert_eq!(report.report["strichartz"]["pairs"][0]["q"], "inf");
}
