//! C ABI over `lts-core`.
//!
//! Paths are opaque `LtsPath` handles created by the constructors below and
//! released with [`lts_path_free`]. Every fallible call returns an
//! [`LtsStatus`]; on failure the message is kept per thread and can be read
//! with [`lts_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lts_core::localtime::{local_time_occupation, local_time_tanaka, SideConvention};
use lts_core::pathsim::{brownian_path, SamplePath, TimeGrid};
use lts_core::sdelt::skew_bm;
use lts_core::{Error, RngStream};

/// Result codes. `Ok` is 0; everything else is an error.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LtsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numeric = 3,
    Resolution = 4,
    Unavailable = 5,
    Io = 6,
    Panic = 7,
}

/// Which sign convention at the level the local time uses.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LtsSide {
    Right = 0,
    Left = 1,
    Symmetric = 2,
}

/// Sides cross the ABI as plain integers so a bad value is an error, not UB.
fn side_of(s: i32) -> Result<SideConvention, (LtsStatus, String)> {
    match s {
        x if x == LtsSide::Right as i32 => Ok(SideConvention::Right),
        x if x == LtsSide::Left as i32 => Ok(SideConvention::Left),
        x if x == LtsSide::Symmetric as i32 => Ok(SideConvention::Symmetric),
        _ => Err(invalid(format!("unknown side {s}"))),
    }
}

/// Opaque sample path on a uniform time grid.
pub struct LtsPath {
    inner: SamplePath,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LtsStatus {
    match e {
        Error::Contract(_) | Error::Config(_) => LtsStatus::InvalidArgument,
        Error::NumericDomain { .. } | Error::Inversion { .. } => LtsStatus::Numeric,
        Error::VariationUnbounded(_) | Error::Resolution(_) => LtsStatus::Resolution,
        Error::RepresentationUnavailable(_) => LtsStatus::Unavailable,
        Error::Io(_) => LtsStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (LtsStatus, String)>) -> LtsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LtsStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(msg);
            LtsStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (LtsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (LtsStatus, String) {
    (LtsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (LtsStatus, String) {
    (LtsStatus::InvalidArgument, msg.into())
}

/// # Safety
/// `out` must be null or valid for one pointer write.
unsafe fn emit(out: *mut *mut LtsPath, p: SamplePath) -> Result<(), (LtsStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(LtsPath { inner: p }));
    Ok(())
}

/// # Safety
/// `p` must be null or a live handle from this library.
unsafe fn borrow<'a>(p: *const LtsPath) -> Result<&'a SamplePath, (LtsStatus, String)> {
    p.as_ref().map(|h| &h.inner).ok_or_else(|| null("path"))
}

fn dyadic(dt_exponent: u32) -> Result<TimeGrid, (LtsStatus, String)> {
    if !(1..=24).contains(&dt_exponent) {
        return Err(invalid(format!("dt_exponent {dt_exponent} outside [1, 24]")));
    }
    Ok(TimeGrid::dyadic(dt_exponent))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// without the terminator, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn lts_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Standard Brownian motion on `[0, 1]` with `2^dt_exponent` steps, from
/// stream `stream` of `seed`.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn lts_brownian_path(dt_exponent: u32, seed: u64, stream: u64, out: *mut *mut LtsPath) -> LtsStatus {
    guard(|| {
        let grid = dyadic(dt_exponent)?;
        emit(out, brownian_path(grid, RngStream::new(seed, stream)))
    })
}

/// Skew Brownian motion with parameter `beta` (`|beta| < 1/2`) driven by the
/// same Brownian stream [`lts_brownian_path`] would return.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn lts_skew_path(beta: f64, dt_exponent: u32, seed: u64, stream: u64, out: *mut *mut LtsPath) -> LtsStatus {
    guard(|| {
        let grid = dyadic(dt_exponent)?;
        let p = skew_bm(beta, grid, RngStream::new(seed, stream)).map_err(core_err)?;
        emit(out, p)
    })
}

/// Path through `values[0..len]` on a uniform grid over `[0, t_end]`.
///
/// # Safety
/// `values` must be valid for `len` reads; `out` for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn lts_path_from_values(values: *const f64, len: usize, t_end: f64, out: *mut *mut LtsPath) -> LtsStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        if len < 2 {
            return Err(invalid("a path needs at least two values"));
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(invalid("values must be finite"));
        }
        let grid = TimeGrid::new(0.0, t_end, len - 1).map_err(core_err)?;
        emit(out, SamplePath::new(grid, v).map_err(core_err)?)
    })
}

/// Number of grid nodes, or 0 for a null handle.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lts_path_len(path: *const LtsPath) -> usize {
    path.as_ref().map_or(0, |p| p.inner.len())
}

/// Copies the first `min(len, lts_path_len)` values into `buf`.
///
/// # Safety
/// `path` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn lts_path_values(path: *const LtsPath, buf: *mut f64, len: usize) -> LtsStatus {
    guard(|| {
        let p = borrow(path)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = p.values();
        let n = v.len().min(len);
        ptr::copy_nonoverlapping(v.as_ptr(), buf, n);
        Ok(())
    })
}

/// Tanaka local time of `path` at `level`, as a new path. `side` is an
/// [`LtsSide`] value.
///
/// # Safety
/// `path` must be a live handle; `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn lts_local_time(path: *const LtsPath, level: f64, side: i32, out: *mut *mut LtsPath) -> LtsStatus {
    guard(|| {
        let p = borrow(path)?;
        if !level.is_finite() {
            return Err(invalid("level must be finite"));
        }
        emit(out, local_time_tanaka(p, level, side_of(side)?))
    })
}

/// Occupation-window local time with window width `eps`, as a new path.
///
/// # Safety
/// `path` must be a live handle; `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn lts_occupation_local_time(
    path: *const LtsPath,
    level: f64,
    eps: f64,
    side: i32,
    out: *mut *mut LtsPath,
) -> LtsStatus {
    guard(|| {
        let p = borrow(path)?;
        emit(out, local_time_occupation(p, level, eps, side_of(side)?).map_err(core_err)?)
    })
}

/// Terminal value of a path, written to `out`.
///
/// # Safety
/// `path` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn lts_path_terminal(path: *const LtsPath, out: *mut f64) -> LtsStatus {
    guard(|| {
        let p = borrow(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = p.terminal();
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `path` must be null or a live handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn lts_path_free(path: *mut LtsPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}
