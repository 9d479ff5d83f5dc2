use std::path::{Path, PathBuf};
use std::process::Command;

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../include/oscresp.h")
}

#[test]
fn header_declares_the_exported_api() {
    let text = std::fs::read_to_string(header()).expect("generated header");
    for name in [
        "oscresp_last_error_message",
        "oscresp_params_new",
        "oscresp_kernel_new",
        "oscresp_kernel_values",
        "oscresp_run_suite",
        "oscresp_report_to_json",
        "oscresp_string_free",
        "typedef struct OscrespReport OscrespReport;",
        "OSCRESP_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
}

/// Compiles a small C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler found; skipping");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join("liboscresp_ffi.a");
    if !lib.is_file() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "oscresp.h"
int main(void) {
    OscrespParams *p = NULL;
    if (oscresp_params_new(1.0, 1.0, 1.0, &p) != OSCRESP_STATUS_OK) return 1;
    OscrespKernel *k = NULL;
    if (oscresp_kernel_new(p, 64, 4, OSCRESP_KERNEL_KIND_FEYNMAN, &k) != OSCRESP_STATUS_OK) return 2;
    double re[64], im[64];
    if (oscresp_kernel_values(k, re, im, 64) != OSCRESP_STATUS_OK) return 3;
    OscrespParams *bad = NULL;
    if (oscresp_params_new(1.0, -1.0, 1.0, &bad) == OSCRESP_STATUS_OK) return 4;
    if (oscresp_last_error_message() == NULL) return 5;
    printf("%.17g %.17g\n", re[32], im[32]);
    oscresp_kernel_free(k);
    oscresp_params_free(p);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    // D_F(0) = -i / 2 for unit parameters
    let line = String::from_utf8(out.stdout).unwrap();
    let vals: Vec<f64> = line.split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert!(vals[0].abs() < 1e-15 && (vals[1] + 0.5).abs() < 1e-15, "{line}");
}
