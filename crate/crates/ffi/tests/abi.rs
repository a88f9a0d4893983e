use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use lts_core::localtime::{local_time_tanaka, SideConvention};
use lts_core::pathsim::{brownian_path, TimeGrid};
use lts_core::RngStream;
use lts_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 512];
    unsafe {
        lts_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn values(p: *const LtsPath) -> Vec<f64> {
    unsafe {
        let n = lts_path_len(p);
        let mut v = vec![0.0; n];
        assert_eq!(lts_path_values(p, v.as_mut_ptr(), n), LtsStatus::Ok);
        v
    }
}

#[test]
fn brownian_and_local_time_match_core() {
    unsafe {
        let mut b = ptr::null_mut();
        assert_eq!(lts_brownian_path(10, 4, 2, &mut b), LtsStatus::Ok);
        let core_b = brownian_path(TimeGrid::dyadic(10), RngStream::new(4, 2));
        assert_eq!(values(b), core_b.values());

        let mut l = ptr::null_mut();
        assert_eq!(lts_local_time(b, 0.1, LtsSide::Left as i32, &mut l), LtsStatus::Ok);
        assert_eq!(values(l), local_time_tanaka(&core_b, 0.1, SideConvention::Left).values());

        let mut occ = ptr::null_mut();
        assert_eq!(lts_occupation_local_time(b, 0.0, 0.05, LtsSide::Symmetric as i32, &mut occ), LtsStatus::Ok);
        let mut t = f64::NAN;
        assert_eq!(lts_path_terminal(occ, &mut t), LtsStatus::Ok);
        assert!(t >= 0.0);
        lts_path_free(occ);
        lts_path_free(l);
        lts_path_free(b);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(lts_skew_path(0.6, 8, 1, 0, &mut p), LtsStatus::InvalidArgument);
        assert!(p.is_null());
        assert!(last_error().contains("1/2"), "{}", last_error());

        assert_eq!(lts_brownian_path(40, 1, 0, &mut p), LtsStatus::InvalidArgument);
        assert_eq!(lts_brownian_path(8, 1, 0, ptr::null_mut()), LtsStatus::NullPointer);
        assert_eq!(lts_path_terminal(ptr::null(), &mut 0.0), LtsStatus::NullPointer);

        let v = [0.0, 1.0, 0.5];
        assert_eq!(lts_path_from_values(v.as_ptr(), 3, 1.0, &mut p), LtsStatus::Ok);
        let mut l = ptr::null_mut();
        assert_eq!(lts_local_time(p, 0.0, 9, &mut l), LtsStatus::InvalidArgument);
        assert_eq!(lts_occupation_local_time(p, 0.0, -1.0, 0, &mut l), LtsStatus::InvalidArgument);
        assert!(l.is_null());
        lts_path_free(p);

        let bad = [0.0, f64::NAN];
        assert_eq!(lts_path_from_values(bad.as_ptr(), 2, 1.0, &mut p), LtsStatus::InvalidArgument);
        assert_eq!(lts_path_from_values(v.as_ptr(), 3, -1.0, &mut p), LtsStatus::InvalidArgument);

        assert_eq!(lts_brownian_path(8, 1, 0, &mut p), LtsStatus::Ok);
        assert_eq!(lts_last_error(ptr::null_mut(), 0), 0);
        lts_path_free(p);
        lts_path_free(ptr::null_mut());
    }
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(lts_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/lts_ffi.h")).unwrap();
    let src = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 10);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}

/// Compiles `tests/c/smoke.c` against the header and the static library.
#[test]
fn c_smoke_program() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("liblts_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or {} missing", lib.display());
        return;
    }
    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("smoke");
    let status = Command::new(&cc)
        .arg(dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "smoke exited {:?}", run.status.code());
    let text = String::from_utf8(run.stdout).unwrap();
    assert!(text.starts_with(env!("CARGO_PKG_VERSION")), "{text}");
}
