use std::ffi::{CStr, CString};
use std::ptr;

use sdcps_ffi::*;

const SMALL: &str = "[topology]\nn_local = 2\nswitches_per_local = 2\nhosts_per_switch = 2\npartitions = 1\n\
[workload]\nwindow = 8\n[sweep]\nvalues = [2, 4]\nrequests = 200\n";

fn last_error() -> String {
    let p = sdcps_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn parse(text: &str) -> *mut SdcpsConfig {
    let text = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { sdcps_config_parse(text.as_ptr(), &mut cfg) }, SdcpsStatus::Ok);
    assert!(sdcps_last_error().is_null());
    cfg
}

#[test]
fn run_and_read_records() {
    let cfg = parse(SMALL);
    let scenario = CString::new("sc1").unwrap();
    let mut report = ptr::null_mut();
    let status = unsafe { sdcps_run(cfg, scenario.as_ptr(), 3, 4, 1, &mut report) };
    assert_eq!(status, SdcpsStatus::Ok);
    assert_eq!(unsafe { sdcps_report_len(report) }, 4);

    let mut rec = SdcpsRecord::default();
    assert_eq!(unsafe { sdcps_report_record(report, 1, &mut rec) }, SdcpsStatus::Ok);
    assert_eq!((rec.scenario, rec.n_local, rec.seed), (1, 2, 4));
    assert_eq!((rec.requests_served, rec.requests_lost), (200, 0));
    assert!(rec.config_work > 0);
    assert_eq!(
        unsafe { sdcps_report_record(report, 4, &mut rec) },
        SdcpsStatus::OutOfRange
    );
    assert!(last_error().contains("record 4 of 4"));

    let mut text = ptr::null_mut();
    assert_eq!(
        unsafe { sdcps_report_render(report, SdcpsFormat::Csv, &mut text) },
        SdcpsStatus::Ok
    );
    let csv = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_string();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().nth(2).unwrap().starts_with("Sc1,2,2,2,4,"));
    unsafe {
        sdcps_string_free(text);
        sdcps_report_free(report);
        sdcps_config_free(cfg);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut cfg = ptr::null_mut();
    let bad = CString::new("[topology]\nn_local = 2\npartitions = 5\n").unwrap();
    assert_eq!(
        unsafe { sdcps_config_parse(bad.as_ptr(), &mut cfg) },
        SdcpsStatus::ConfigInvalid
    );
    assert!(cfg.is_null());
    let bad = CString::new("[topology\n").unwrap();
    assert_eq!(
        unsafe { sdcps_config_parse(bad.as_ptr(), &mut cfg) },
        SdcpsStatus::ConfigParse
    );
    let missing = CString::new("/nonexistent/sdcps.toml").unwrap();
    assert_eq!(
        unsafe { sdcps_config_load(missing.as_ptr(), &mut cfg) },
        SdcpsStatus::Io
    );
    assert_eq!(
        unsafe { sdcps_config_load(ptr::null(), &mut cfg) },
        SdcpsStatus::NullPointer
    );
    assert_eq!(last_error(), "path is null");

    let cfg = parse(SMALL);
    let mut report = ptr::null_mut();
    let sc9 = CString::new("sc9").unwrap();
    assert_eq!(
        unsafe { sdcps_run(cfg, sc9.as_ptr(), 1, 1, 1, &mut report) },
        SdcpsStatus::UnknownScenario
    );
    let sc1 = CString::new("sc1").unwrap();
    assert_eq!(
        unsafe { sdcps_run(cfg, sc1.as_ptr(), 5, 2, 1, &mut report) },
        SdcpsStatus::InvalidArgument
    );
    // Controller counts cannot drive a time sweep.
    let sc3 = CString::new("sc3").unwrap();
    assert_eq!(
        unsafe { sdcps_run(cfg, sc3.as_ptr(), 1, 1, 1, &mut report) },
        SdcpsStatus::ConfigInvalid
    );
    assert_eq!(
        unsafe { sdcps_run(ptr::null(), sc1.as_ptr(), 1, 1, 1, &mut report) },
        SdcpsStatus::NullPointer
    );
    assert!(report.is_null());
    assert_eq!(unsafe { sdcps_report_len(ptr::null()) }, 0);
    unsafe {
        sdcps_config_free(cfg);
        sdcps_config_free(ptr::null_mut());
        sdcps_report_free(ptr::null_mut());
        sdcps_string_free(ptr::null_mut());
    }
}

#[test]
fn default_config_and_version() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { sdcps_config_default(&mut cfg) }, SdcpsStatus::Ok);
    assert!(!cfg.is_null());
    unsafe { sdcps_config_free(cfg) };
    let v = unsafe { CStr::from_ptr(sdcps_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sdcps.h")).unwrap();
    for name in [
        "sdcps_last_error",
        "sdcps_version",
        "sdcps_config_default",
        "sdcps_config_load",
        "sdcps_config_parse",
        "sdcps_config_free",
        "sdcps_run",
        "sdcps_report_len",
        "sdcps_report_record",
        "sdcps_report_render",
        "sdcps_report_free",
        "sdcps_string_free",
        "SDCPS_STATUS_CONFIG_INVALID = 5",
        "typedef struct SdcpsConfig SdcpsConfig;",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
