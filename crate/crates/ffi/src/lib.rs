//! C ABI over `factorlens`.
//!
//! Objects cross the boundary as opaque handles (`FlFeatureSet`, `FlReport`,
//! `FlIndex`) created by `fl_*` constructors and released with the matching
//! `*_free`. Every fallible call returns an [`FlStatus`]; the message for the
//! most recent failure on the calling thread is available from
//! [`fl_last_error_message`]. Panics never unwind into C: they become
//! `FL_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use factorlens::retrieve::IndexOptions;
use factorlens::{
    Error, Factor, FactorGrid, FeatureSet, Manifest, RetrievalIndex, VarianceReport, ViewMeta,
};

/// Result codes. Values are stable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    /// Grid index out of range.
    Index = 1,
    /// Unknown factor name.
    Key = 2,
    Param = 3,
    Shape = 4,
    /// Zero variance or identical samples.
    Degenerate = 5,
    /// Retrieval metadata missing or inconsistent.
    Meta = 6,
    /// Malformed `.fset` content.
    Format = 7,
    Convergence = 8,
    Io = 9,
    NullPointer = 10,
    /// A string argument was not valid UTF-8.
    Utf8 = 11,
    Panic = 12,
}

/// A feature set: rows of features on a factor grid.
pub struct FlFeatureSet(FeatureSet);

/// A variance report from `fl_analyze`.
pub struct FlReport(VarianceReport);

/// A dot-product retrieval index.
pub struct FlIndex(RetrievalIndex);

struct Fail(FlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Index { .. } => FlStatus::Index,
            Error::Key(_) => FlStatus::Key,
            Error::Param(_) => FlStatus::Param,
            Error::Shape(_) => FlStatus::Shape,
            Error::Degenerate(_) => FlStatus::Degenerate,
            Error::Meta(_) => FlStatus::Meta,
            Error::Format { .. } => FlStatus::Format,
            Error::Convergence { .. } => FlStatus::Convergence,
            Error::Io { .. } => FlStatus::Io,
        };
        Fail(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            FlStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| p.downcast_ref::<&str>().copied())
                .unwrap_or("panic");
            set_last_error(&format!("internal panic: {msg}"));
            FlStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(FlStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FlStatus::Utf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next `fl_*` call on the same thread.
#[no_mangle]
pub extern "C" fn fl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a `.fset` file.
#[no_mangle]
pub unsafe extern "C" fn fl_feature_set_load(
    path: *const c_char,
    out: *mut *mut FlFeatureSet,
) -> FlStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let set = FeatureSet::load(path)?;
        write_out(out, Box::into_raw(Box::new(FlFeatureSet(set))), "out")
    })
}

/// Writes a `.fset` file.
#[no_mangle]
pub unsafe extern "C" fn fl_feature_set_save(
    set: *const FlFeatureSet,
    path: *const c_char,
) -> FlStatus {
    guard(|| {
        let set = as_ref(set, "set")?;
        set.0.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Builds a feature set from row-major `data` (`prod(levels) * dim` values).
/// Factors are named by `factor_names` and have `levels[k]` indexed levels;
/// rows follow the grid with the last factor varying fastest.
#[no_mangle]
pub unsafe extern "C" fn fl_feature_set_from_data(
    n_factors: usize,
    factor_names: *const *const c_char,
    levels: *const usize,
    dim: usize,
    data: *const f32,
    data_len: usize,
    layer: *const c_char,
    out: *mut *mut FlFeatureSet,
) -> FlStatus {
    guard(|| {
        let names = slice_arg(factor_names, n_factors, "factor_names")?;
        let levels = slice_arg(levels, n_factors, "levels")?;
        let factors = names
            .iter()
            .zip(levels)
            .map(|(&n, &l)| Ok(Factor::indexed(str_arg(n, "factor name")?, l)))
            .collect::<Result<Vec<_>, Fail>>()?;
        let grid = FactorGrid::new(factors)?;
        let data = slice_arg(data, data_len, "data")?.to_vec();
        let layer = str_arg(layer, "layer")?;
        let set = FeatureSet::new(grid, layer, dim, data, Manifest::default())?;
        write_out(out, Box::into_raw(Box::new(FlFeatureSet(set))), "out")
    })
}

/// Number of rows, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn fl_feature_set_rows(set: *const FlFeatureSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.n_rows())
}

/// Feature dimension, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn fl_feature_set_dim(set: *const FlFeatureSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.dim())
}

#[no_mangle]
pub unsafe extern "C" fn fl_feature_set_free(set: *mut FlFeatureSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Decomposes `set` and reports variances; `threshold` is the explained
/// variance fraction used for intrinsic dimensions.
#[no_mangle]
pub unsafe extern "C" fn fl_analyze(
    set: *const FlFeatureSet,
    threshold: f64,
    out: *mut *mut FlReport,
) -> FlStatus {
    guard(|| {
        let set = as_ref(set, "set")?;
        let (_, report) = factorlens::analyze(&set.0, threshold)?;
        write_out(out, Box::into_raw(Box::new(FlReport(report))), "out")
    })
}

/// Number of factors, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn fl_report_n_factors(report: *const FlReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.factors.len())
}

/// Total variance, or NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn fl_report_total_variance(report: *const FlReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.total_variance)
}

/// Copies relative variances (factors in order, then the residual) into
/// `out`, which must hold `fl_report_n_factors(report) + 1` values.
#[no_mangle]
pub unsafe extern "C" fn fl_report_relative_variances(
    report: *const FlReport,
    out: *mut f64,
    len: usize,
) -> FlStatus {
    guard(|| {
        let r = as_ref(report, "report")?.0.relative_variances();
        if len != r.len() {
            return Err(Fail(
                FlStatus::Shape,
                format!("buffer holds {len} values, report has {}", r.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(r.as_ptr(), out, len);
        Ok(())
    })
}

/// Serializes the report as JSON. Free the string with `fl_string_free`.
#[no_mangle]
pub unsafe extern "C" fn fl_report_to_json(
    report: *const FlReport,
    out: *mut *mut c_char,
) -> FlStatus {
    guard(|| {
        let r = as_ref(report, "report")?;
        let text = serde_json::to_string(&r.0).map_err(|e| Fail(FlStatus::Param, e.to_string()))?;
        let c = CString::new(text).map_err(|e| Fail(FlStatus::Param, e.to_string()))?;
        write_out(out, c.into_raw(), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn fl_report_free(report: *mut FlReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Frees a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn fl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a retrieval index over `set`. `azimuths` may be null; otherwise it
/// holds one azimuth in degrees per row. Rows are labelled by their index.
#[no_mangle]
pub unsafe extern "C" fn fl_index_build(
    set: *const FlFeatureSet,
    azimuths: *const f64,
    target_dim: usize,
    normalize: bool,
    out: *mut *mut FlIndex,
) -> FlStatus {
    guard(|| {
        let set = as_ref(set, "set")?;
        let n = set.0.n_rows();
        let az = if azimuths.is_null() {
            None
        } else {
            Some(slice_arg(azimuths, n, "azimuths")?)
        };
        let meta = (0..n)
            .map(|r| ViewMeta {
                model_id: r.to_string(),
                azimuth_deg: az.map(|a| a[r]),
                elevation_deg: None,
            })
            .collect();
        let opts = IndexOptions {
            target_dim,
            normalize,
            require_azimuth: false,
        };
        let index = factorlens::build_index(&set.0, meta, &opts)?;
        write_out(out, Box::into_raw(Box::new(FlIndex(index))), "out")
    })
}

/// Reduced dimension of the index, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn fl_index_reduced_dim(index: *const FlIndex) -> usize {
    index.as_ref().map_or(0, |i| i.0.reduced_dim())
}

/// Top-`k` rows for `feature` (length `dim`). `rows` and `scores` must hold
/// `k` entries; `count` receives the number written (`min(k, rows)`).
#[no_mangle]
pub unsafe extern "C" fn fl_index_query(
    index: *const FlIndex,
    feature: *const f64,
    dim: usize,
    k: usize,
    rows: *mut usize,
    scores: *mut f64,
    count: *mut usize,
) -> FlStatus {
    guard(|| {
        let index = as_ref(index, "index")?;
        let feature = slice_arg(feature, dim, "feature")?;
        if rows.is_null() || scores.is_null() {
            return Err(null("rows/scores"));
        }
        let matches = index.0.query(feature, k)?;
        for (i, m) in matches.iter().enumerate() {
            rows.add(i).write(m.row);
            scores.add(i).write(m.score);
        }
        write_out(count, matches.len(), "count")
    })
}

#[no_mangle]
pub unsafe extern "C" fn fl_index_free(index: *mut FlIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Circular azimuth difference in degrees, in [0, 180].
#[no_mangle]
pub extern "C" fn fl_angular_error(a: f64, b: f64) -> f64 {
    factorlens::retrieve::angular_error(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_handles_are_reported() {
        let mut out = ptr::null_mut();
        let s = unsafe { fl_feature_set_load(ptr::null(), &mut out) };
        assert_eq!(s, FlStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(fl_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("path"));
        assert_eq!(unsafe { fl_feature_set_rows(ptr::null()) }, 0);
        unsafe { fl_feature_set_free(ptr::null_mut()) };
    }

    #[test]
    fn panics_are_contained() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, FlStatus::Panic);
        let msg = unsafe { CStr::from_ptr(fl_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("boom"));
    }
}
