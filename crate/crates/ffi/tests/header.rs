//! The generated header is current and usable from C.

use std::path::{Path, PathBuf};
use std::process::Command;

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/extnls.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "extnls_version",
        "extnls_last_error",
        "extnls_string_free",
        "extnls_manifest_from_toml",
        "extnls_manifest_from_path",
        "extnls_manifest_to_toml",
        "extnls_manifest_set_seed",
        "extnls_manifest_free",
        "extnls_run(",
        "extnls_run_free",
        "extnls_run_exit_code",
        "extnls_run_verdict_count",
        "extnls_run_verdict(",
        "extnls_run_record_count",
        "extnls_run_record(",
        "extnls_run_csv",
        "extnls_run_report_json",
        "extnls_run_write",
        "extnls_compat_check",
        "typedef struct ExtnlsManifest ExtnlsManifest;",
        "typedef struct ExtnlsRun ExtnlsRun;",
        "EXTNLS_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

/// Compiles and runs `examples/smoke.c` against the static library.
#[test]
fn c_client_links_and_runs() {
    let Ok(exe) = std::env::current_exe() else { return };
    // target/<profile>/deps/<test> -> target/<profile>
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libextnls_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/smoke.c");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("PASS mass_conservation"), "{stdout}");
    assert!(stdout.contains("rows 6 t_end 0.500"), "{stdout}");
    assert!(stdout.contains("bad manifest status 3"), "{stdout}");
}
