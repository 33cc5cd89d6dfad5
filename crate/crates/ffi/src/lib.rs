//! C interface to the kmachine simulator.
//!
//! Datasets and results are opaque handles owned by the caller and released
//! with the matching `*_free` function. Every fallible call returns a
//! [`KmStatus`]; the message for the most recent failure on the calling thread
//! is available from [`km_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kmachine::{Algorithm, Dataset, Error, Metric, Point, PointId, QueryRequest, QueryResult};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KmStatus {
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// Bad parameters or malformed data.
    InvalidInput = 2,
    /// A protocol broke the rules of the model; indicates a bug.
    ProtocolViolation = 3,
    /// File could not be read.
    Io = 4,
    /// A panic was caught at the boundary.
    Panic = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KmMetric {
    L1 = 0,
    L2Squared = 1,
    LInf = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KmAlgorithm {
    Knn = 0,
    Baseline = 1,
    Selection = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct KmQueryParams {
    /// Machine count, at least 2.
    pub k: u32,
    /// Neighbors wanted.
    pub l: u64,
    pub seed: u64,
    pub metric: KmMetric,
    pub algorithm: KmAlgorithm,
    /// Nonzero compares the answer with a brute-force sort.
    pub verify: u8,
}

/// Opaque dataset handle.
pub struct KmDataset(Dataset);

/// Opaque query result handle.
pub struct KmResult(QueryResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> KmStatus {
    match e {
        Error::Sim(_) => KmStatus::ProtocolViolation,
        Error::Io { .. } | Error::Csv { .. } => KmStatus::Io,
        _ => KmStatus::InvalidInput,
    }
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), (KmStatus, String)>) -> KmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside kmachine".into());
            KmStatus::Panic
        }
    }
}

fn fail(e: Error) -> (KmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (KmStatus, String) {
    (KmStatus::NullArgument, format!("{what} is null"))
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn km_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn km_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a dataset from a CSV file with header `id,label,c0,...`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn km_dataset_load_csv(path: *const c_char, out: *mut *mut KmDataset) -> KmStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| (KmStatus::InvalidInput, "path is not UTF-8".into()))?;
        let ds = Dataset::read_csv(path).map_err(fail)?;
        *out = Box::into_raw(Box::new(KmDataset(ds)));
        Ok(())
    })
}

/// Builds an unlabelled dataset from `n * d` row-major coordinates. Point `i`
/// gets id `i`.
///
/// # Safety
/// `coords` must point to `n * d` readable values (it may be null when `n` is 0)
/// and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn km_dataset_from_coords(
    coords: *const i64,
    n: usize,
    d: usize,
    out: *mut *mut KmDataset,
) -> KmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n.checked_mul(d).ok_or((KmStatus::InvalidInput, "n * d overflows".into()))?;
        let values: &[i64] = if len == 0 {
            &[]
        } else if coords.is_null() {
            return Err(null("coords"));
        } else {
            std::slice::from_raw_parts(coords, len)
        };
        let points = (0..n).map(|i| Point::new(i as PointId, values[i * d..(i + 1) * d].to_vec())).collect();
        let ds = Dataset::new(points, d).map_err(fail)?;
        *out = Box::into_raw(Box::new(KmDataset(ds)));
        Ok(())
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a handle returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn km_dataset_len(ds: *const KmDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Dimension, or 0 for a null handle.
///
/// # Safety
/// As [`km_dataset_len`].
#[no_mangle]
pub unsafe extern "C" fn km_dataset_dim(ds: *const KmDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.dim())
}

/// # Safety
/// `ds` must be null or a handle returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn km_dataset_free(ds: *mut KmDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Defaults: 16 machines, 1 neighbor, seed 0, squared L2, the sampling algorithm, no verification.
#[no_mangle]
pub extern "C" fn km_query_params_default() -> KmQueryParams {
    KmQueryParams { k: 16, l: 1, seed: 0, metric: KmMetric::L2Squared, algorithm: KmAlgorithm::Knn, verify: 0 }
}

fn request(p: &KmQueryParams) -> QueryRequest {
    let metric = match p.metric {
        KmMetric::L1 => Metric::L1,
        KmMetric::L2Squared => Metric::L2Squared,
        KmMetric::LInf => Metric::LInf,
    };
    let algo = match p.algorithm {
        KmAlgorithm::Knn => Algorithm::Knn,
        KmAlgorithm::Baseline => Algorithm::Baseline,
        KmAlgorithm::Selection => Algorithm::Selection,
    };
    QueryRequest { metric, algo, verify: p.verify != 0, ..QueryRequest::new(p.k as usize, p.l, p.seed) }
}

/// Finds the `params->l` nearest points to the `d`-dimensional `query`.
///
/// # Safety
/// `ds` must be a live dataset handle, `query` must point to `d` readable
/// values (null allowed when `d` is 0), `params` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn km_query(
    ds: *const KmDataset,
    query: *const i64,
    d: usize,
    params: *const KmQueryParams,
    out: *mut *mut KmResult,
) -> KmStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        let params = params.as_ref().ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let coords: Vec<i64> = if d == 0 {
            Vec::new()
        } else if query.is_null() {
            return Err(null("query"));
        } else {
            std::slice::from_raw_parts(query, d).to_vec()
        };
        let q = Point::new(PointId::MAX, coords);
        let (result, _) = kmachine::run_query(&ds.0, &q, &request(params)).map_err(fail)?;
        *out = Box::into_raw(Box::new(KmResult(result)));
        Ok(())
    })
}

/// Number of neighbor ids in the result.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn km_result_len(r: *const KmResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.neighbor_ids.len())
}

/// Copies up to `cap` neighbor ids, nearest first, into `buf`. Returns the number copied.
///
/// # Safety
/// `r` must be null or a live result handle; `buf` must have room for `cap` ids.
#[no_mangle]
pub unsafe extern "C" fn km_result_ids(r: *const KmResult, buf: *mut u64, cap: usize) -> usize {
    let (Some(r), false) = (r.as_ref(), buf.is_null()) else {
        return 0;
    };
    let ids = &r.0.neighbor_ids;
    let n = ids.len().min(cap);
    ptr::copy_nonoverlapping(ids.as_ptr(), buf, n);
    n
}

/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn km_result_rounds(r: *const KmResult) -> u64 {
    r.as_ref().map_or(0, |r| r.0.metrics.rounds)
}

/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn km_result_messages(r: *const KmResult) -> u64 {
    r.as_ref().map_or(0, |r| r.0.metrics.messages)
}

/// 1 when the pruned candidate set was too small and the run fell back to the
/// unpruned sets, else 0.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn km_result_fallback(r: *const KmResult) -> u8 {
    r.as_ref().map_or(0, |r| u8::from(r.0.fallback))
}

/// 1 if verified correct, 0 if verified wrong, -1 if not verified.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn km_result_correct(r: *const KmResult) -> i32 {
    match r.as_ref().and_then(|r| r.0.correct) {
        Some(true) => 1,
        Some(false) => 0,
        None => -1,
    }
}

/// # Safety
/// `r` must be null or a live result handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn km_result_free(r: *mut KmResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Error::Overflow), KmStatus::InvalidInput);
        assert_eq!(status_of(&Error::Sim(kmachine::sim::SimError::RoundLimit(1))), KmStatus::ProtocolViolation);
    }

    #[test]
    fn version_is_terminated() {
        let v = unsafe { CStr::from_ptr(km_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
