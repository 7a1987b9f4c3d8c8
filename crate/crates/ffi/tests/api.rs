use std::ffi::{CStr, CString};
use std::ptr;

use extnls_ffi::*;

const MANIFEST: &str = r#"
scenario = "radial_global"
dt = 0.01
t_final = 0.5
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

fn manifest(text: &str) -> *mut ExtnlsManifest {
    let c = CString::new(text).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { extnls_manifest_from_toml(c.as_ptr(), &mut m) },
        ExtnlsStatus::Ok
    );
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = extnls_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    extnls_string_free(s);
    out
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(extnls_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn run_round_trip() {
    let m = manifest(MANIFEST);
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(extnls_run(m, &mut run), ExtnlsStatus::Ok);
        let mut code = -1;
        assert_eq!(extnls_run_exit_code(run, &mut code), ExtnlsStatus::Ok);
        assert_eq!(code, 0);

        let mut n = 0;
        extnls_run_verdict_count(run, &mut n);
        assert!(n >= 3);
        let mut pass = false;
        let mut name = ptr::null_mut();
        let mut detail = ptr::null_mut();
        assert_eq!(
            extnls_run_verdict(run, 0, &mut pass, &mut name, &mut detail),
            ExtnlsStatus::Ok
        );
        assert!(pass);
        assert_eq!(take(name), "mass_conservation");
        assert!(take(detail).contains("drift"));

        let mut rows = 0;
        extnls_run_record_count(run, &mut rows);
        assert_eq!(rows, 6);
        let mut rec = ExtnlsRecord::default();
        assert_eq!(extnls_run_record(run, rows - 1, &mut rec), ExtnlsStatus::Ok);
        assert!((rec.time - 0.5).abs() < 1e-12);
        assert!(rec.valid);

        let mut csv = ptr::null_mut();
        assert_eq!(extnls_run_csv(run, &mut csv), ExtnlsStatus::Ok);
        let csv = take(csv);
        assert!(csv.starts_with("time,mass,energy"));
        assert_eq!(csv.lines().count(), rows + 1);

        let mut json = ptr::null_mut();
        assert_eq!(extnls_run_report_json(run, &mut json), ExtnlsStatus::Ok);
        let json: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(json["status"], "pass");

        let dir = tempfile::tempdir().unwrap();
        let d = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(extnls_run_write(run, d.as_ptr()), ExtnlsStatus::Ok);
        assert_eq!(
            std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap(),
            csv
        );

        extnls_run_free(run);
        extnls_manifest_free(m);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut m = ptr::null_mut();
    let bad = CString::new("scenario = \"radial_global\"\nbogus = 1\n").unwrap();
    unsafe {
        assert_eq!(
            extnls_manifest_from_toml(bad.as_ptr(), &mut m),
            ExtnlsStatus::InvalidManifest
        );
        assert!(m.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(
            extnls_manifest_from_toml(ptr::null(), &mut m),
            ExtnlsStatus::NullPointer
        );
        assert!(last_error().contains("null"));

        let missing = CString::new("/nonexistent/manifest.toml").unwrap();
        assert_eq!(extnls_manifest_from_path(missing.as_ptr(), &mut m), ExtnlsStatus::Io);

        let invalid = [0xffu8, 0];
        assert_eq!(
            extnls_manifest_from_toml(invalid.as_ptr().cast(), &mut m),
            ExtnlsStatus::InvalidUtf8
        );

        let mut code = 0;
        assert_eq!(extnls_run_exit_code(ptr::null(), &mut code), ExtnlsStatus::NullPointer);
        extnls_run_free(ptr::null_mut());
        extnls_manifest_free(ptr::null_mut());
        extnls_string_free(ptr::null_mut());
    }
}

#[test]
fn out_of_range_index() {
    let m = manifest(MANIFEST);
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(extnls_run(m, &mut run), ExtnlsStatus::Ok);
        let mut pass = false;
        assert_eq!(
            extnls_run_verdict(run, 99, &mut pass, ptr::null_mut(), ptr::null_mut()),
            ExtnlsStatus::OutOfRange
        );
        assert!(last_error().contains("99"));
        let mut rec = ExtnlsRecord::default();
        assert_eq!(extnls_run_record(run, 1000, &mut rec), ExtnlsStatus::OutOfRange);
        extnls_run_free(run);
        extnls_manifest_free(m);
    }
}

#[test]
fn manifest_seed_and_toml() {
    let m = manifest(MANIFEST);
    unsafe {
        assert_eq!(extnls_manifest_set_seed(m, 42), ExtnlsStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(extnls_manifest_to_toml(m, &mut s), ExtnlsStatus::Ok);
        let text = take(s);
        assert!(text.contains("seed = 42"));
        extnls_manifest_free(m);
    }
}

#[test]
fn compat_fixtures() {
    let spec = |power: u32, n: usize| {
        CString::new(format!(
            "order = 2\n[params]\nn = {n}\np = 10.0\nr_max = 30.0\n[domain]\nnum_radial = 2899\n\
             [initial_data]\nprofile = \"exp_polynomial\"\namplitude = 1.0\npower = {power}\nrate = 1.0\n"
        ))
        .unwrap()
    };
    let mut ok = false;
    unsafe {
        assert_eq!(extnls_compat_check(spec(3, 3).as_ptr(), &mut ok), ExtnlsStatus::Ok);
        assert!(ok);
        assert_eq!(extnls_compat_check(spec(1, 2).as_ptr(), &mut ok), ExtnlsStatus::Ok);
        assert!(!ok);
    }
}
