//! C ABI over `sdcps-core`.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns an [`SdcpsStatus`];
//! on failure [`sdcps_last_error`] describes what went wrong on this thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sdcps_core::scenario::config::{ConfigError, SystemConfig};
use sdcps_core::scenario::report::{render_report, ReportFormat};
use sdcps_core::scenario::runner::{
    run_scenario, MetricsRecord, RunOptions, ScenarioId, ScenarioSpec, UnknownScenario,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdcpsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    ConfigParse = 4,
    ConfigInvalid = 5,
    UnknownScenario = 6,
    InvalidArgument = 7,
    OutOfRange = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdcpsFormat {
    Csv = 0,
    Jsonl = 1,
}

/// Parsed and validated system configuration.
pub struct SdcpsConfig {
    inner: SystemConfig,
}

/// Metrics records produced by one scenario run.
pub struct SdcpsReport {
    records: Vec<MetricsRecord>,
}

/// One metrics row. `scenario` is 1 to 4.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SdcpsRecord {
    pub scenario: u32,
    pub n_local: u64,
    pub switches_per_local: u64,
    pub hosts_per_switch: u64,
    pub seed: u64,
    pub sim_time: u64,
    pub requests_served: u64,
    pub config_work: u64,
    pub config_wall_ms: f64,
    pub test_wall_ms: f64,
    pub requests_issued: u64,
    pub requests_lost: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SdcpsStatus, String);

fn fail(status: SdcpsStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let status = match e {
            ConfigError::Io { .. } => SdcpsStatus::Io,
            ConfigError::Parse(_) => SdcpsStatus::ConfigParse,
            ConfigError::ConfigInvalid(_) => SdcpsStatus::ConfigInvalid,
        };
        fail(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `body`, records any failure or panic, and returns the status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SdcpsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SdcpsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SdcpsStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(SdcpsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SdcpsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(SdcpsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(SdcpsStatus::NullPointer, format!("{what} is null")))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sdcps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sdcps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default configuration.
///
/// # Safety
/// `out` must be null or point to writable storage for a pointer.
#[no_mangle]
pub unsafe extern "C" fn sdcps_config_default(out: *mut *mut SdcpsConfig) -> SdcpsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(SdcpsConfig {
            inner: SystemConfig::default(),
        }));
        Ok(())
    })
}

/// Reads and validates a TOML config file.
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn sdcps_config_load(path: *const c_char, out: *mut *mut SdcpsConfig) -> SdcpsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let inner = SystemConfig::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(SdcpsConfig { inner }));
        Ok(())
    })
}

/// Parses and validates TOML config text.
///
/// # Safety
/// `text` must be null or a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn sdcps_config_parse(text: *const c_char, out: *mut *mut SdcpsConfig) -> SdcpsStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        let inner = SystemConfig::from_toml(text)?;
        inner.validate()?;
        *out = Box::into_raw(Box::new(SdcpsConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sdcps_config_free(config: *mut SdcpsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs `scenario` ("Sc1" to "Sc4") for every seed in `first_seed..=last_seed`.
/// `threads` of 0 uses every available CPU.
///
/// # Safety
/// `config` must be null or a live handle, `scenario` null or NUL-terminated,
/// and `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn sdcps_run(
    config: *const SdcpsConfig,
    scenario: *const c_char,
    first_seed: u64,
    last_seed: u64,
    threads: u32,
    out: *mut *mut SdcpsReport,
) -> SdcpsStatus {
    guard(|| {
        let config = &handle(config, "config")?.inner;
        let id: ScenarioId = str_arg(scenario, "scenario")?
            .parse()
            .map_err(|e: UnknownScenario| fail(SdcpsStatus::UnknownScenario, e.to_string()))?;
        let out = out_arg(out, "out")?;
        if last_seed < first_seed {
            return Err(fail(
                SdcpsStatus::InvalidArgument,
                format!("empty seed range {first_seed}..{last_seed}"),
            ));
        }
        let spec =
            ScenarioSpec::from_config(id, config).map_err(|e| fail(SdcpsStatus::ConfigInvalid, e.to_string()))?;
        let options = match threads {
            0 => RunOptions::default(),
            n => RunOptions { threads: n as usize },
        };
        let seeds: Vec<u64> = (first_seed..=last_seed).collect();
        let records = run_scenario(&spec, config, &seeds, options)
            .map_err(|e| fail(SdcpsStatus::ConfigInvalid, e.to_string()))?;
        *out = Box::into_raw(Box::new(SdcpsReport { records }));
        Ok(())
    })
}

/// Number of records in `report`; 0 for null.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdcps_report_len(report: *const SdcpsReport) -> usize {
    report.as_ref().map_or(0, |r| r.records.len())
}

/// Copies record `index` into `out`.
///
/// # Safety
/// `report` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn sdcps_report_record(
    report: *const SdcpsReport,
    index: usize,
    out: *mut SdcpsRecord,
) -> SdcpsStatus {
    guard(|| {
        let report = handle(report, "report")?;
        let out = out_arg(out, "out")?;
        let r = report.records.get(index).ok_or_else(|| {
            fail(
                SdcpsStatus::OutOfRange,
                format!("record {index} of {}", report.records.len()),
            )
        })?;
        *out = SdcpsRecord {
            scenario: match r.scenario {
                ScenarioId::Sc1 => 1,
                ScenarioId::Sc2 => 2,
                ScenarioId::Sc3 => 3,
                ScenarioId::Sc4 => 4,
            },
            n_local: r.n_local as u64,
            switches_per_local: r.switches_per_local as u64,
            hosts_per_switch: r.hosts_per_switch as u64,
            seed: r.seed,
            sim_time: r.sim_time,
            requests_served: r.requests_served,
            config_work: r.config_work,
            config_wall_ms: r.config_wall_ms,
            test_wall_ms: r.test_wall_ms,
            requests_issued: r.requests_issued,
            requests_lost: r.requests_lost,
        };
        Ok(())
    })
}

/// Renders the report as CSV or JSON lines. Free the string with
/// [`sdcps_string_free`].
///
/// # Safety
/// `report` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn sdcps_report_render(
    report: *const SdcpsReport,
    format: SdcpsFormat,
    out: *mut *mut c_char,
) -> SdcpsStatus {
    guard(|| {
        let report = handle(report, "report")?;
        let out = out_arg(out, "out")?;
        let format = match format {
            SdcpsFormat::Csv => ReportFormat::Csv,
            SdcpsFormat::Jsonl => ReportFormat::Jsonl,
        };
        let text = render_report(&report.records, format).map_err(|e| fail(SdcpsStatus::Internal, e.to_string()))?;
        *out = CString::new(text)
            .map_err(|_| fail(SdcpsStatus::Internal, "report contains NUL"))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sdcps_report_free(report: *mut SdcpsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sdcps_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
