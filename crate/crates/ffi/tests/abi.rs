use std::ffi::{CStr, CString};
use std::ptr;

use oscresp_ffi::*;

fn last_error() -> Option<String> {
    let p = oscresp_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn unit_params() -> *mut OscrespParams {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { oscresp_params_new(1.0, 1.0, 1.0, &mut p) }, OscrespStatus::Ok);
    p
}

#[test]
fn kernel_samples_match_the_closed_form() {
    let p = unit_params();
    let mut k = ptr::null_mut();
    let st = unsafe { oscresp_kernel_new(p, 64, 4, OscrespKernelKind::Retarded, &mut k) };
    assert_eq!(st, OscrespStatus::Ok);
    let n = unsafe { oscresp_kernel_len(k) };
    assert_eq!(n, 64);
    let dt = unsafe { oscresp_kernel_dt(k) };
    let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { oscresp_kernel_values(k, re.as_mut_ptr(), im.as_mut_ptr(), n) }, OscrespStatus::Ok);
    for j in 1..n {
        let tau = (j as f64 - 32.0) * dt;
        let expected = if tau > 0.0 { -tau.sin() } else { 0.0 };
        assert!((re[j] - expected).abs() < 1e-12, "lag {tau}");
        assert!(im[j].abs() < 1e-15);
    }
    unsafe {
        oscresp_kernel_free(k);
        oscresp_params_free(p);
    }
}

#[test]
fn short_buffer_is_reported() {
    let p = unit_params();
    let mut k = ptr::null_mut();
    unsafe { oscresp_kernel_new(p, 32, 2, OscrespKernelKind::Feynman, &mut k) };
    let mut buf = [0.0; 8];
    let mut buf2 = [0.0; 8];
    let st = unsafe { oscresp_kernel_values(k, buf.as_mut_ptr(), buf2.as_mut_ptr(), 8) };
    assert_eq!(st, OscrespStatus::BufferTooSmall);
    assert!(last_error().unwrap().contains("32"));
    unsafe {
        oscresp_kernel_free(k);
        oscresp_params_free(p);
    }
}

#[test]
fn errors_map_to_status_codes_and_clear_on_success() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { oscresp_params_new(-1.0, 1.0, 1.0, &mut p) }, OscrespStatus::InvalidArgument);
    assert!(p.is_null());
    assert!(last_error().unwrap().contains("invalid parameter"));

    let p = unit_params();
    assert!(last_error().is_none());
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { oscresp_kernel_new_loose(p, 64, 0.1, OscrespKernelKind::Contraction, &mut k) }, OscrespStatus::Ok);
    unsafe { oscresp_kernel_free(k) };
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { oscresp_kernel_new(p, 63, 4, OscrespKernelKind::Retarded, &mut k) }, OscrespStatus::InvalidGrid);
    assert_eq!(unsafe { oscresp_kernel_new(ptr::null(), 64, 4, OscrespKernelKind::Retarded, &mut k) }, OscrespStatus::NullPointer);
    unsafe { oscresp_params_free(p) };
}

#[test]
fn suite_runs_and_serializes() {
    let json = CString::new(r#"{"grid": {"n": 64, "bin": 4}}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { oscresp_config_from_json(json.as_ptr(), &mut cfg) }, OscrespStatus::Ok);
    assert_eq!(unsafe { oscresp_config_set_seed(cfg, 3) }, OscrespStatus::Ok);
    let suite = CString::new("kernels").unwrap();
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { oscresp_run_suite(cfg, suite.as_ptr(), &mut report) }, OscrespStatus::Ok);
    assert_eq!(unsafe { oscresp_report_passed(report) }, 1);
    let rows = unsafe { oscresp_report_row_count(report) };
    assert!(rows > 0);
    let (mut residual, mut pass) = (f64::NAN, -1);
    assert_eq!(unsafe { oscresp_report_row(report, 0, &mut residual, &mut pass) }, OscrespStatus::Ok);
    assert!(residual.is_finite() && pass == 1);
    assert_eq!(unsafe { oscresp_report_row(report, rows, &mut residual, &mut pass) }, OscrespStatus::InvalidArgument);

    let mut text = ptr::null_mut();
    assert_eq!(unsafe { oscresp_report_to_json(report, &mut text) }, OscrespStatus::Ok);
    let s = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_owned();
    unsafe { oscresp_string_free(text) };
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["suite"], "kernels");
    assert_eq!(v["config"]["seed"], 3);
    unsafe {
        oscresp_report_free(report);
        oscresp_config_free(cfg);
    }
}

#[test]
fn bad_inputs_to_suite_and_config() {
    let mut report = ptr::null_mut();
    let bogus = CString::new("bogus").unwrap();
    assert_eq!(unsafe { oscresp_run_suite(ptr::null(), bogus.as_ptr(), &mut report) }, OscrespStatus::UnknownSuite);
    let bad = CString::new(r#"{"seeds": 1}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { oscresp_config_from_json(bad.as_ptr(), &mut cfg) }, OscrespStatus::Parse);
    let invalid_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { oscresp_config_from_json(invalid_utf8.as_ptr().cast(), &mut cfg) }, OscrespStatus::InvalidUtf8);
    assert_eq!(unsafe { oscresp_config_from_json(ptr::null(), &mut cfg) }, OscrespStatus::NullPointer);
}

#[test]
fn last_error_is_per_thread() {
    let mut p = ptr::null_mut();
    unsafe { oscresp_params_new(0.0, 1.0, 1.0, &mut p) };
    assert!(last_error().is_some());
    std::thread::spawn(|| assert!(last_error().is_none())).join().unwrap();
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        oscresp_params_free(ptr::null_mut());
        oscresp_kernel_free(ptr::null_mut());
        oscresp_config_free(ptr::null_mut());
        oscresp_report_free(ptr::null_mut());
        oscresp_string_free(ptr::null_mut());
        assert_eq!(oscresp_kernel_len(ptr::null()), 0);
        assert_eq!(oscresp_report_passed(ptr::null()), 0);
    }
    let v = unsafe { CStr::from_ptr(oscresp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
