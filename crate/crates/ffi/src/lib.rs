//! C ABI over the dstc core.
//!
//! Every entry point returns a [`DstcStatus`]; results go through out
//! pointers. On failure a message is kept per thread and can be read with
//! [`dstc_last_error_message`]. Experiments are opaque handles owned by the
//! caller and released with [`dstc_experiment_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dstc::cascade::Cascade;
use dstc::config::{self, ScenarioConfig};
use dstc::engine::{Engine, EngineOptions};
use dstc::scenario::Experiment;
use dstc::units::UnitSystem;
use dstc::Error;

/// Status codes. Config and Numerical match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DstcStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Numerical = 3,
    InvalidUtf8 = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// A parsed and validated experiment.
pub struct DstcExperiment {
    exp: Experiment,
    opts: EngineOptions,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DstcStatus, msg: impl Into<String>) -> DstcStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> DstcStatus {
    let status = if e.is_config() { DstcStatus::Config } else { DstcStatus::Numerical };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into a status so they never cross the ABI.
fn guard(f: impl FnOnce() -> DstcStatus) -> DstcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        fail(DstcStatus::Panic, msg)
    })
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, DstcStatus> {
    if s.is_null() {
        return Err(fail(DstcStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s).to_str().map_err(|e| fail(DstcStatus::InvalidUtf8, e.to_string()))
}

unsafe fn handle<'a>(h: *const DstcExperiment) -> Result<&'a DstcExperiment, DstcStatus> {
    h.as_ref().ok_or_else(|| fail(DstcStatus::NullPointer, "null experiment handle"))
}

fn store(cfg: &ScenarioConfig, exp: Experiment, out: *mut *mut DstcExperiment) -> DstcStatus {
    let h = Box::new(DstcExperiment { exp, opts: cfg.engine_options() });
    // SAFETY: checked non-null by the callers.
    unsafe { *out = Box::into_raw(h) };
    DstcStatus::Ok
}

/// Builds an experiment from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dstc_experiment_from_toml(toml: *const c_char, out: *mut *mut DstcExperiment) -> DstcStatus {
    guard(|| {
        if out.is_null() {
            return fail(DstcStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let src = match text(toml) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let built = ScenarioConfig::parse(src).and_then(|c| c.build(Some(src)).map(|e| (c, e)));
        match built {
            Ok((cfg, exp)) => store(&cfg, exp, out),
            Err(e) => from_error(e),
        }
    })
}

/// Builds an experiment from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dstc_experiment_load(path: *const c_char, out: *mut *mut DstcExperiment) -> DstcStatus {
    guard(|| {
        if out.is_null() {
            return fail(DstcStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let p = match text(path) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match config::load(Path::new(p)) {
            Ok((cfg, exp)) => store(&cfg, exp, out),
            Err(e) => from_error(e),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `h` must come from one of the constructors and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dstc_experiment_free(h: *mut DstcExperiment) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of scenarios, which sizes the arrays of the calls below.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dstc_scenario_count(h: *const DstcExperiment, out: *mut usize) -> DstcStatus {
    guard(|| {
        let h = match handle(h) {
            Ok(h) => h,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(DstcStatus::NullPointer, "null output pointer");
        }
        *out = h.exp.scenarios.len();
        DstcStatus::Ok
    })
}

/// Time of the first reduction. `found` is set to 0 when none happens
/// before the search horizon; `t_c` is left untouched then.
///
/// # Safety
/// `h` must be a live handle; `t_c` and `found` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dstc_critical_time(h: *const DstcExperiment, t_c: *mut f64, found: *mut i32) -> DstcStatus {
    guard(|| {
        let h = match handle(h) {
            Ok(h) => h,
            Err(s) => return s,
        };
        if t_c.is_null() || found.is_null() {
            return fail(DstcStatus::NullPointer, "null output pointer");
        }
        let engine = Engine::new(&h.exp, h.opts.clone());
        match engine.critical_time(&h.exp.intensities(), h.exp.max_split_time()) {
            Ok(Ok(t)) => {
                *t_c = t;
                *found = 1;
                DstcStatus::Ok
            }
            Ok(Err(_)) => {
                *found = 0;
                DstcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

unsafe fn out_slice<'a>(buf: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], DstcStatus> {
    if buf.is_null() {
        return Err(fail(DstcStatus::NullPointer, "null output buffer"));
    }
    if len < need {
        return Err(fail(DstcStatus::BufferTooSmall, format!("buffer holds {len} values, need {need}")));
    }
    Ok(std::slice::from_raw_parts_mut(buf, need))
}

/// Exact probability that each scenario ends as the sole survivor, in
/// config order. `unresolved` (optional) receives the stalled mass.
///
/// # Safety
/// `h` must be a live handle; `probs` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dstc_survivor_probabilities(
    h: *const DstcExperiment,
    probs: *mut f64,
    len: usize,
    unresolved: *mut f64,
) -> DstcStatus {
    guard(|| {
        let h = match handle(h) {
            Ok(h) => h,
            Err(s) => return s,
        };
        let out = match out_slice(probs, len, h.exp.scenarios.len()) {
            Ok(o) => o,
            Err(s) => return s,
        };
        match Cascade::new(&h.exp, h.opts.clone()).tree() {
            Ok(t) => {
                out.copy_from_slice(&t.survivor);
                if !unresolved.is_null() {
                    *unresolved = t.unresolved_probability();
                }
                DstcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Monte Carlo survivor frequencies over all `trials`, with standard
/// errors. Results depend only on `seed`, not on the thread count.
///
/// # Safety
/// `h` must be a live handle; `freq` and `errors` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dstc_estimate(
    h: *const DstcExperiment,
    trials: u64,
    seed: u64,
    freq: *mut f64,
    errors: *mut f64,
    len: usize,
    unresolved: *mut u64,
) -> DstcStatus {
    guard(|| {
        let h = match handle(h) {
            Ok(h) => h,
            Err(s) => return s,
        };
        let n = h.exp.scenarios.len();
        let f = match out_slice(freq, len, n) {
            Ok(o) => o,
            Err(s) => return s,
        };
        let se = match out_slice(errors, len, n) {
            Ok(o) => o,
            Err(s) => return s,
        };
        match Cascade::new(&h.exp, h.opts.clone()).estimate(trials, seed) {
            Ok(est) => {
                for k in 0..n {
                    (f[k], se[k]) = est.share_of_all(k);
                }
                if !unresolved.is_null() {
                    *unresolved = est.unresolved;
                }
                DstcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Time-averaged path intensity after an action difference `ds` (in units
/// of ħ) held for `duration`, and its linear approximation.
///
/// # Safety
/// `numeric` and `linear` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dstc_path_intensity_drop(ds: f64, duration: f64, numeric: *mut f64, linear: *mut f64) -> DstcStatus {
    guard(|| {
        if numeric.is_null() || linear.is_null() {
            return fail(DstcStatus::NullPointer, "null output pointer");
        }
        match dstc::wavepacket::path_intensity_drop(ds, duration, &UnitSystem::dimensionless()) {
            Ok(d) => {
                *numeric = d.numeric;
                *linear = d.linear;
                DstcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn dstc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
