use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use skewprod_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sp_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn system() -> *mut SpSystem {
    let mut sys = ptr::null_mut();
    assert_eq!(
        unsafe { sp_system_new(0.5, 0.5, 0.1, &mut sys) },
        SpStatus::Ok
    );
    assert!(!sys.is_null());
    sys
}

#[test]
fn fiber_maps_round_trip() {
    let sys = system();
    let mut pre = [0.0; 2];
    unsafe {
        assert_eq!(
            sp_fiber_inverse(sys, 0.3, 0.75, pre.as_mut_ptr()),
            SpStatus::Ok
        );
        assert!(pre[0] < pre[1]);
        for y in pre {
            let mut t = 0.0;
            assert_eq!(sp_fiber_forward(sys, 0.3, y, &mut t), SpStatus::Ok);
            assert!((t - 0.75).abs() < 1e-12);
        }
        sp_system_free(sys);
    }
}

#[test]
fn constant_potential_closed_forms() {
    let sys = system();
    let c = 0.25;
    unsafe {
        assert_eq!(sp_system_set_constant(sys, c), SpStatus::Ok);
        let mut solver = ptr::null_mut();
        assert_eq!(sp_phi_solver_new(sys, 64, 0.5, &mut solver), SpStatus::Ok);
        let digits = [1u8, 0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 1, 0, 1, 0].repeat(8);
        let mut phi = 0.0;
        assert_eq!(
            sp_phi_compute(solver, digits.as_ptr(), digits.len(), 1e-12, &mut phi),
            SpStatus::Ok
        );
        assert!((phi - 2f64.ln() - c).abs() < 1e-12);

        let mut full = ptr::null_mut();
        assert_eq!(
            sp_rpf_full_solve(sys, 16, 32, 1e-12, 1000, &mut full),
            SpStatus::Ok
        );
        let mut lam = 0.0;
        assert_eq!(sp_rpf_log_eigenvalue(full, &mut lam), SpStatus::Ok);
        assert!((lam - 4f64.ln() - c).abs() < 1e-12);
        let mut len = 0;
        assert_eq!(sp_rpf_len(full, &mut len), SpStatus::Ok);
        assert_eq!(len, 16 * 32);
        let mut w = vec![0.0; len];
        assert_eq!(sp_rpf_copy(full, 1, w.as_mut_ptr(), len), SpStatus::Ok);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(
            sp_rpf_copy(full, 0, w.as_mut_ptr(), len - 1),
            SpStatus::InvalidArgument
        );

        let mut base = ptr::null_mut();
        assert_eq!(
            sp_rpf_base_solve(solver, 32, 1e-12, 1e-12, 1000, &mut base),
            SpStatus::Ok
        );
        assert_eq!(sp_rpf_log_eigenvalue(base, &mut lam), SpStatus::Ok);
        assert!((lam - 4f64.ln() - c).abs() < 1e-10);

        sp_rpf_free(full);
        sp_rpf_free(base);
        sp_phi_solver_free(solver);
        sp_system_free(sys);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut sys = ptr::null_mut();
        assert_eq!(sp_system_new(-1.0, 0.5, 0.1, &mut sys), SpStatus::Config);
        assert!(sys.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(
            sp_system_new(0.5, 0.5, 0.1, ptr::null_mut()),
            SpStatus::NullPointer
        );
        let mut v = 0.0;
        assert_eq!(
            sp_fiber_forward(ptr::null(), 0.1, 0.2, &mut v),
            SpStatus::NullPointer
        );

        let bad = CString::new("{ not json").unwrap();
        assert_eq!(
            sp_system_from_config_json(bad.as_ptr(), &mut sys),
            SpStatus::Config
        );
        assert!(last_error().contains("config"));

        let sys = system();
        let mut solver = ptr::null_mut();
        assert_eq!(
            sp_phi_solver_new(sys, 64, 0.123, &mut solver),
            SpStatus::InvalidArgument
        );
        let digits = [2u8, 0, 1];
        assert_eq!(sp_phi_solver_new(sys, 64, 0.5, &mut solver), SpStatus::Ok);
        assert_eq!(
            sp_phi_compute(solver, digits.as_ptr(), 3, 1e-10, &mut v),
            SpStatus::InvalidArgument
        );
        sp_phi_solver_free(solver);
        sp_system_free(sys);
        sp_system_free(ptr::null_mut());
    }
}

#[test]
fn config_json_and_potential() {
    let json =
        CString::new(r#"{"potential": {"terms": [[1, 0, 0.01]], "constant": 0.5}}"#).unwrap();
    unsafe {
        let mut sys = ptr::null_mut();
        assert_eq!(
            sp_system_from_config_json(json.as_ptr(), &mut sys),
            SpStatus::Ok
        );
        let mut v = 0.0;
        assert_eq!(sp_potential_eval(sys, 0.0, 0.3, &mut v), SpStatus::Ok);
        assert!((v - 0.51).abs() < 1e-15);
        assert_eq!(sp_system_add_term(sys, 0, 1, 0.02), SpStatus::Ok);
        assert_eq!(sp_potential_eval(sys, 0.0, 0.0, &mut v), SpStatus::Ok);
        assert!((v - 0.53).abs() < 1e-15);
        sp_system_free(sys);
    }
}

#[test]
fn word_counts() {
    let mut c = 0u64;
    unsafe {
        assert_eq!(sp_count_i(0.5, 2, 1, 2, &mut c), SpStatus::Ok);
        assert_eq!(c, 3);
        assert_eq!(sp_count_i(0.0, 20, 1, 2, &mut c), SpStatus::Ok);
        assert_eq!(c, 1 << 20);
        assert_eq!(
            sp_count_i(0.0, 100, 1, 2, &mut c),
            SpStatus::InvalidArgument
        );
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(sp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(manifest_dir().join("include/skewprod.h")).unwrap();
    for name in [
        "typedef struct SpSystem SpSystem;",
        "SP_STATUS_OK = 0",
        "sp_last_error_message",
        "sp_system_new",
        "sp_phi_compute",
        "sp_rpf_full_solve",
        "sp_rpf_free",
        "sp_count_i",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    // tests run from target/<profile>/deps; the static library sits one level up
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = lib_dir.join("libskewprod_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "skewprod.h"

int main(void) {
    SpSystem *sys = NULL;
    if (sp_system_new(0.5, 0.5, 0.1, &sys) != SP_STATUS_OK) return 1;
    if (sp_system_set_constant(sys, 0.1) != SP_STATUS_OK) return 2;
    SpRpf *rpf = NULL;
    if (sp_rpf_full_solve(sys, 16, 16, 1e-12, 1000, &rpf) != SP_STATUS_OK) return 3;
    double lam = 0.0;
    sp_rpf_log_eigenvalue(rpf, &lam);
    if (fabs(lam - log(4.0) - 0.1) > 1e-12) return 4;
    if (sp_system_new(0.5, 0.5, 0.1, NULL) != SP_STATUS_NULL_POINTER) return 5;
    printf("%s\n", sp_last_error_message());
    sp_rpf_free(rpf);
    sp_system_free(sys);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = tmp.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).contains("null"));
}
