use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use kmachine_ffi::*;

fn dataset(coords: &[i64], d: usize) -> *mut KmDataset {
    let mut ds = ptr::null_mut();
    let st = unsafe { km_dataset_from_coords(coords.as_ptr(), coords.len() / d, d, &mut ds) };
    assert_eq!(st, KmStatus::Ok);
    ds
}

fn last_error() -> String {
    let p = km_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn query_roundtrip() {
    // points on a line, id i at coordinate 10 * i
    let coords: Vec<i64> = (0..500).map(|i| i * 10).collect();
    let ds = dataset(&coords, 1);
    assert_eq!(unsafe { km_dataset_len(ds) }, 500);
    assert_eq!(unsafe { km_dataset_dim(ds) }, 1);

    for algo in [KmAlgorithm::Knn, KmAlgorithm::Baseline, KmAlgorithm::Selection] {
        let params = KmQueryParams { k: 4, l: 5, seed: 3, algorithm: algo, verify: 1, ..km_query_params_default() };
        let q = [2001i64];
        let mut r = ptr::null_mut();
        assert_eq!(unsafe { km_query(ds, q.as_ptr(), 1, &params, &mut r) }, KmStatus::Ok);
        assert_eq!(unsafe { km_result_len(r) }, 5);
        let mut ids = [0u64; 8];
        assert_eq!(unsafe { km_result_ids(r, ids.as_mut_ptr(), ids.len()) }, 5);
        assert_eq!(&ids[..5], &[200, 201, 199, 202, 198]);
        assert_eq!(unsafe { km_result_correct(r) }, 1);
        assert!(unsafe { km_result_rounds(r) } > 0);
        assert!(unsafe { km_result_messages(r) } > 0);
        assert_eq!(unsafe { km_result_fallback(r) }, 0);
        unsafe { km_result_free(r) };
    }
    unsafe { km_dataset_free(ds) };
}

#[test]
fn errors_are_reported() {
    let ds = dataset(&[1, 2, 3, 4], 2);
    let q = [0i64, 0];
    let mut r = ptr::null_mut();

    let params = KmQueryParams { k: 1, ..km_query_params_default() };
    assert_eq!(unsafe { km_query(ds, q.as_ptr(), 2, &params, &mut r) }, KmStatus::InvalidInput);
    assert!(last_error().contains("at least 2 machines"));
    assert!(r.is_null());

    let params = KmQueryParams { k: 2, l: 3, ..km_query_params_default() };
    assert_eq!(unsafe { km_query(ds, q.as_ptr(), 2, &params, &mut r) }, KmStatus::InvalidInput);

    let params = km_query_params_default();
    assert_eq!(unsafe { km_query(ds, q.as_ptr(), 1, &params, &mut r) }, KmStatus::InvalidInput);
    assert_eq!(unsafe { km_query(ptr::null(), q.as_ptr(), 2, &params, &mut r) }, KmStatus::NullArgument);
    assert_eq!(unsafe { km_query(ds, q.as_ptr(), 2, ptr::null(), &mut r) }, KmStatus::NullArgument);
    assert_eq!(unsafe { km_query(ds, q.as_ptr(), 2, &params, ptr::null_mut()) }, KmStatus::NullArgument);
    assert!(last_error().contains("out"));

    let path = CString::new("/nonexistent/points.csv").unwrap();
    let mut other = ptr::null_mut();
    assert_eq!(unsafe { km_dataset_load_csv(path.as_ptr(), &mut other) }, KmStatus::Io);
    assert!(other.is_null());

    // null handles are harmless
    unsafe {
        km_dataset_free(ptr::null_mut());
        km_result_free(ptr::null_mut());
        assert_eq!(km_result_len(ptr::null()), 0);
        assert_eq!(km_result_correct(ptr::null()), -1);
        km_dataset_free(ds);
    }
}

#[test]
fn loads_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    std::fs::write(&path, "id,label,c0,c1\n7,1,0,0\n8,1,5,5\n9,2,1,1\n").unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { km_dataset_load_csv(c.as_ptr(), &mut ds) }, KmStatus::Ok);
    let params = KmQueryParams { k: 2, l: 2, verify: 1, ..km_query_params_default() };
    let q = [0i64, 0];
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { km_query(ds, q.as_ptr(), 2, &params, &mut r) }, KmStatus::Ok);
    let mut ids = [0u64; 2];
    unsafe { km_result_ids(r, ids.as_mut_ptr(), 2) };
    assert_eq!(ids, [7, 9]);
    unsafe {
        km_result_free(r);
        km_dataset_free(ds);
    }
}

/// Builds the static archive in its own target directory so the outer cargo
/// lock is never contended.
fn static_lib() -> PathBuf {
    let target = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("smoke-target");
    let status = Command::new(env!("CARGO"))
        .args(["build", "--quiet", "-p", "kmachine-ffi", "--lib", "--target-dir"])
        .arg(&target)
        .status()
        .expect("cargo runs");
    assert!(status.success(), "building the static library failed");
    target.join("debug/libkmachine_ffi.a")
}

#[test]
fn c_program_links_against_header() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    if !cc.status.success() {
        return;
    }
    let lib = static_lib();
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "cc failed: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "smoke failed: {stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(stdout.trim(), "ids 3 2 4 ok");
}
