//! C ABI over the experiment runner.
//!
//! Manifests and finished runs are opaque handles owned by the caller and
//! released with their `*_free` function. Every fallible call returns an
//! [`ExtnlsStatus`]; on failure [`extnls_last_error`] describes the cause for
//! the calling thread. Strings returned through `char **` out-parameters are
//! heap-allocated and must be released with [`extnls_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use extnls::experiments::output::{csv_string, write_run, RunReport};
use extnls::experiments::{check_compatibility, run_scenario, CompatSpec, RunManifest, RunOutput};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtnlsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidManifest = 3,
    OutOfRange = 4,
    RunFailed = 5,
    Io = 6,
    Panic = 7,
}

/// A parsed and validated run manifest.
pub struct ExtnlsManifest(RunManifest);

/// The outcome of one scenario run.
pub struct ExtnlsRun(RunOutput);

/// One row of the diagnostics series.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExtnlsRecord {
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
    pub pc_energy: f64,
    pub strauss_ratio: f64,
    pub sup_weighted_amp: f64,
    pub h1: f64,
    pub h2: f64,
    pub h4: f64,
    pub linf: f64,
    pub outer_mass_fraction: f64,
    pub valid: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(ExtnlsStatus, String);

impl Failure {
    fn new(status: ExtnlsStatus, msg: impl ToString) -> Self {
        Self(status, msg.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ExtnlsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ExtnlsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            ExtnlsStatus::Panic
        }
    }
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(Failure::new(ExtnlsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure::new(ExtnlsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(ExtnlsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn store<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(ExtnlsStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

fn verdict_at(run: &ExtnlsRun, index: usize) -> Result<&extnls::experiments::Verdict, Failure> {
    run.0.verdicts.get(index).ok_or_else(|| {
        Failure::new(
            ExtnlsStatus::OutOfRange,
            format!("verdict {index} out of range ({} verdicts)", run.0.verdicts.len()),
        )
    })
}

/// Version of the library as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn extnls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn extnls_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn extnls_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a TOML manifest.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn extnls_manifest_from_toml(toml: *const c_char, out: *mut *mut ExtnlsManifest) -> ExtnlsStatus {
    guard(|| {
        let m = RunManifest::from_toml_str(text(toml, "toml")?)
            .map_err(|e| Failure::new(ExtnlsStatus::InvalidManifest, e))?;
        store(out, Box::into_raw(Box::new(ExtnlsManifest(m))), "out")
    })
}

/// Reads and parses a TOML manifest file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn extnls_manifest_from_path(path: *const c_char, out: *mut *mut ExtnlsManifest) -> ExtnlsStatus {
    guard(|| {
        let path = text(path, "path")?;
        let m = RunManifest::from_path(Path::new(path)).map_err(|e| match e {
            extnls::Error::Io(_) => Failure::new(ExtnlsStatus::Io, e),
            _ => Failure::new(ExtnlsStatus::InvalidManifest, e),
        })?;
        store(out, Box::into_raw(Box::new(ExtnlsManifest(m))), "out")
    })
}

/// Serializes a manifest back to TOML (defaults filled in).
///
/// # Safety
/// `manifest` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn extnls_manifest_to_toml(
    manifest: *const ExtnlsManifest,
    out: *mut *mut c_char,
) -> ExtnlsStatus {
    guard(|| {
        let m = borrow(manifest, "manifest")?;
        let s =
            m.0.to_toml_string()
                .map_err(|e| Failure::new(ExtnlsStatus::InvalidManifest, e))?;
        store(out, c_string(s), "out")
    })
}

/// Overrides the manifest seed.
///
/// # Safety
/// `manifest` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn extnls_manifest_set_seed(manifest: *mut ExtnlsManifest, seed: u64) -> ExtnlsStatus {
    guard(|| {
        let m = manifest
            .as_mut()
            .ok_or_else(|| Failure::new(ExtnlsStatus::NullPointer, "manifest is null"))?;
        m.0.seed = seed;
        Ok(())
    })
}

/// Releases a manifest. Null is ignored.
///
/// # Safety
/// `manifest` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn extnls_manifest_free(manifest: *mut ExtnlsManifest) {
    if !manifest.is_null() {
        drop(Box::from_raw(manifest));
    }
}

/// Runs the manifest's scenario. A run that finishes with failed verdicts or
/// anomalies still returns `EXTNLS_STATUS_OK`; inspect
/// [`extnls_run_exit_code`].
///
/// # Safety
/// `manifest` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn extnls_run(manifest: *const ExtnlsManifest, out: *mut *mut ExtnlsRun) -> ExtnlsStatus {
    guard(|| {
        let m = borrow(manifest, "manifest")?;
        let run = run_scenario(&m.0).map_err(|e| Failure::new(ExtnlsStatus::RunFailed, e))?;
        store(out, Box::into_raw(Box::new(ExtnlsRun(run))), "out")
    })
}

/// Releases a run. Null is ignored.
///
/// # Safety
/// `run` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn extnls_run_free(run: *mut ExtnlsRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// 0 all verdicts pass, 2 a verdict fails, 3 a runtime anomaly.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn extnls_run_exit_code(run: *const ExtnlsRun, out: *mut i32) -> ExtnlsStatus {
    guard(|| store(out, borrow(run, "run")?.0.exit_code(), "out"))
}

/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn extnls_run_verdict_count(run: *const ExtnlsRun, out: *mut usize) -> ExtnlsStatus {
    guard(|| store(out, borrow(run, "run")?.0.verdicts.len(), "out"))
}

/// Name, outcome and detail of verdict `index`. `name` and `detail` may be
/// null when not wanted; otherwise they receive strings to free.
///
/// # Safety
/// `run` must be a live handle; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn extnls_run_verdict(
    run: *const ExtnlsRun,
    index: usize,
    pass: *mut bool,
    name: *mut *mut c_char,
    detail: *mut *mut c_char,
) -> ExtnlsStatus {
    guard(|| {
        let v = verdict_at(borrow(run, "run")?, index)?;
        store(pass, v.pass, "pass")?;
        if !name.is_null() {
            name.write(c_string(v.name.clone()));
        }
        if !detail.is_null() {
            detail.write(c_string(v.detail.clone()));
        }
        Ok(())
    })
}

/// Number of rows in the main diagnostics series.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn extnls_run_record_count(run: *const ExtnlsRun, out: *mut usize) -> ExtnlsStatus {
    guard(|| store(out, borrow(run, "run")?.0.records.len(), "out"))
}

/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn extnls_run_record(
    run: *const ExtnlsRun,
    index: usize,
    out: *mut ExtnlsRecord,
) -> ExtnlsStatus {
    guard(|| {
        let records = &borrow(run, "run")?.0.records;
        let r = records.get(index).ok_or_else(|| {
            Failure::new(
                ExtnlsStatus::OutOfRange,
                format!("record {index} out of range ({} records)", records.len()),
            )
        })?;
        let rec = ExtnlsRecord {
            time: r.time,
            mass: r.mass,
            energy: r.energy,
            pc_energy: r.pc_energy,
            strauss_ratio: r.strauss_ratio,
            sup_weighted_amp: r.sup_weighted_amp,
            h1: r.h1,
            h2: r.h2,
            h4: r.h4,
            linf: r.linf,
            outer_mass_fraction: r.outer_mass_fraction,
            valid: r.valid,
        };
        store(out, rec, "out")
    })
}

/// The main diagnostics series in the CSV format written by the CLI.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn extnls_run_csv(run: *const ExtnlsRun, out: *mut *mut c_char) -> ExtnlsStatus {
    guard(|| store(out, c_string(csv_string(&borrow(run, "run")?.0.records)), "out"))
}

/// The JSON report (without the list of written files).
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn extnls_run_report_json(run: *const ExtnlsRun, out: *mut *mut c_char) -> ExtnlsStatus {
    guard(|| {
        let run = borrow(run, "run")?;
        let report = RunReport::from_output(&run.0, Vec::new()).map_err(|e| Failure::new(ExtnlsStatus::Io, e))?;
        let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::new(ExtnlsStatus::Io, e))?;
        store(out, c_string(json), "out")
    })
}

/// Writes the CSV files and the JSON report into `dir`, creating it.
///
/// # Safety
/// `run` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn extnls_run_write(run: *const ExtnlsRun, dir: *const c_char) -> ExtnlsStatus {
    guard(|| {
        let run = borrow(run, "run")?;
        let dir = text(dir, "dir")?;
        write_run(&run.0, Path::new(dir)).map_err(|e| Failure::new(ExtnlsStatus::Io, e))?;
        Ok(())
    })
}

/// Checks the compatibility conditions of a TOML data spec (the format of
/// `extnls compat`).
///
/// # Safety
/// `spec` must be a NUL-terminated string; `compatible` must be writable.
#[no_mangle]
pub unsafe extern "C" fn extnls_compat_check(spec: *const c_char, compatible: *mut bool) -> ExtnlsStatus {
    guard(|| {
        let spec = CompatSpec::from_toml_str(text(spec, "spec")?)
            .map_err(|e| Failure::new(ExtnlsStatus::InvalidManifest, e))?;
        let summary = check_compatibility(&spec).map_err(|e| Failure::new(ExtnlsStatus::RunFailed, e))?;
        store(compatible, summary.compatible, "compatible")
    })
}
