//! C interface to the beamsplit simulator.
//!
//! Configurations and runs are opaque handles created and destroyed through
//! this API. Every fallible call returns a [`BsStatus`]; on failure the
//! message is available from [`bs_last_error`] on the same thread. Strings
//! returned by the library must be released with [`bs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use beamsplit::coincidence::Counter;
use beamsplit::config::{parse_config, ConfigBuilder, ExperimentConfig};
use beamsplit::experiment::{run_experiment, RunReport};
use beamsplit::report::tally_csv;
use beamsplit::stats::{predicted_rates, PredictionOrder};

/// Result of a library call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    RuntimeError = 4,
    UnknownCounter = 5,
    Undefined = 6,
    Panic = 7,
}

/// Zero-delay correlation summary. Fractions are NaN when no pairs were
/// counted.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsCorrelation {
    pub g2_cross: f64,
    pub g2_same: f64,
    pub bunching_fraction: f64,
    pub same_side_pair_fraction: f64,
}

/// Validated experiment configuration.
pub struct BsConfig(ExperimentConfig);

/// Completed simulation with its analysis.
pub struct BsRun(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: BsStatus, message: impl Into<String>) -> BsStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> BsStatus) -> BsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(BsStatus::Panic, "internal panic"))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, BsStatus> {
    if s.is_null() {
        return Err(fail(BsStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(BsStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or NULL. The caller
/// owns the returned string.
#[no_mangle]
pub extern "C" fn bs_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |s| s.clone().into_raw())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn bs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses configuration text in `key = value` format.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bs_config_parse(text: *const c_char, out: *mut *mut BsConfig) -> BsStatus {
    guard(|| {
        if out.is_null() {
            return fail(BsStatus::NullPointer, "null output pointer");
        }
        let text = match read_str(text) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match parse_config(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(BsConfig(cfg)));
                BsStatus::Ok
            }
            Err(e) => fail(BsStatus::ConfigError, e.to_string()),
        }
    })
}

/// Overrides one key, with the same rules as the file format.
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn bs_config_set(
    config: *mut BsConfig,
    key: *const c_char,
    value: *const c_char,
) -> BsStatus {
    guard(|| {
        let Some(config) = config.as_mut() else {
            return fail(BsStatus::NullPointer, "null config handle");
        };
        let (key, value) = match (read_str(key), read_str(value)) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(status), _) | (_, Err(status)) => return status,
        };
        let rebuilt = ConfigBuilder::new()
            .file(&config.0.to_text())
            .and_then(|b| b.set(key, value).build());
        match rebuilt {
            Ok(cfg) => {
                config.0 = cfg;
                BsStatus::Ok
            }
            Err(e) => fail(BsStatus::ConfigError, e.to_string()),
        }
    })
}

/// The effective configuration in file format. The caller owns the string.
///
/// # Safety
/// `config` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_config_to_text(config: *const BsConfig) -> *mut c_char {
    config
        .as_ref()
        .map_or(ptr::null_mut(), |c| into_c_string(c.0.to_text()))
}

/// # Safety
/// `config` must be NULL or a handle from [`bs_config_parse`], freed once.
#[no_mangle]
pub unsafe extern "C" fn bs_config_free(config: *mut BsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Closed-form rate (per second) of one counter, e.g. `"pairs:A'B'"`.
///
/// # Safety
/// `config` must be a live handle, `counter` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bs_predict_rate(
    config: *const BsConfig,
    counter: *const c_char,
    out: *mut f64,
) -> BsStatus {
    guard(|| {
        let (Some(config), false) = (config.as_ref(), out.is_null()) else {
            return fail(
                BsStatus::NullPointer,
                "null config handle or output pointer",
            );
        };
        let counter = match lookup_counter(counter) {
            Ok(c) => c,
            Err(status) => return status,
        };
        match predicted_rates(&config.0.rate_inputs(), PredictionOrder::Exact) {
            Ok(pred) => {
                *out = pred.rates.get(counter);
                BsStatus::Ok
            }
            Err(e) => fail(BsStatus::RuntimeError, e.to_string()),
        }
    })
}

unsafe fn lookup_counter(name: *const c_char) -> Result<Counter, BsStatus> {
    let name = read_str(name)?;
    Counter::from_name(name).ok_or_else(|| {
        fail(
            BsStatus::UnknownCounter,
            format!("unknown counter '{name}'"),
        )
    })
}

/// Runs the simulation. Report files are written when the configuration
/// sets `output_dir`.
///
/// # Safety
/// `config` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bs_run(config: *const BsConfig, out: *mut *mut BsRun) -> BsStatus {
    guard(|| {
        let (Some(config), false) = (config.as_ref(), out.is_null()) else {
            return fail(
                BsStatus::NullPointer,
                "null config handle or output pointer",
            );
        };
        match run_experiment(&config.0) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(BsRun(report)));
                BsStatus::Ok
            }
            Err(e) => fail(BsStatus::RuntimeError, e.to_string()),
        }
    })
}

/// Count of one counter, e.g. `"singles:A'"` or `"triples:A'A''B'"`.
///
/// # Safety
/// `run` must be a live handle, `counter` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn bs_run_count(
    run: *const BsRun,
    counter: *const c_char,
    out: *mut u64,
) -> BsStatus {
    guard(|| {
        let (Some(run), false) = (run.as_ref(), out.is_null()) else {
            return fail(BsStatus::NullPointer, "null run handle or output pointer");
        };
        match lookup_counter(counter) {
            Ok(c) => {
                *out = run.0.simulation.tally.count(c);
                BsStatus::Ok
            }
            Err(status) => status,
        }
    })
}

/// Acquisition time of the run in seconds, or NaN for a NULL handle.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_run_acquisition_s(run: *const BsRun) -> f64 {
    run.as_ref()
        .map_or(f64::NAN, |r| r.0.simulation.tally.acquisition_s)
}

/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bs_run_correlation(
    run: *const BsRun,
    out: *mut BsCorrelation,
) -> BsStatus {
    guard(|| {
        let (Some(run), false) = (run.as_ref(), out.is_null()) else {
            return fail(BsStatus::NullPointer, "null run handle or output pointer");
        };
        match run.0.correlation {
            Some(c) => {
                *out = BsCorrelation {
                    g2_cross: c.g2_cross,
                    g2_same: c.g2_same,
                    bunching_fraction: c.bunching_fraction.unwrap_or(f64::NAN),
                    same_side_pair_fraction: c.same_side_pair_fraction.unwrap_or(f64::NAN),
                };
                BsStatus::Ok
            }
            None => fail(
                BsStatus::Undefined,
                "correlation undefined: a detector recorded no singles",
            ),
        }
    })
}

/// The tally in CSV form. The caller owns the string.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_run_tally_csv(run: *const BsRun) -> *mut c_char {
    run.as_ref().map_or(ptr::null_mut(), |r| {
        into_c_string(tally_csv(&r.0.simulation.tally))
    })
}

/// # Safety
/// `run` must be NULL or a handle from [`bs_run`], freed once.
#[no_mangle]
pub unsafe extern "C" fn bs_run_free(run: *mut BsRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
