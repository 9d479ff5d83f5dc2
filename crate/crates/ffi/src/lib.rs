//! C ABI over `oscresp`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` functions and
//! released by the matching `*_free`. Every fallible call returns an
//! [`OscrespStatus`]; on failure a description is kept per thread and can be read
//! with [`oscresp_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use oscresp::io::to_json_string;
use oscresp::kernels::{commutator_kernel, osc_kernels, Commensurability, OscillatorParams};
use oscresp::spectral::{Kernel, Sampled, TimeGrid};
use oscresp::suite::{run_suite, Config, Suite, SuiteReport};
use oscresp::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OscrespStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidGrid = 4,
    Incommensurate = 5,
    Truncation = 6,
    Numerical = 7,
    Parse = 8,
    UnknownSuite = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Which oscillator kernel to sample.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OscrespKernelKind {
    Retarded = 0,
    Contraction = 1,
    Feynman = 2,
    FeynmanConj = 3,
    Commutator = 4,
}

/// Oscillator parameters (mass, frequency, hbar).
pub struct OscrespParams(OscillatorParams);

/// A kernel sampled on the lags of a periodic grid.
pub struct OscrespKernel(Kernel);

/// Configuration of a verification run.
pub struct OscrespConfig(Config);

/// The outcome of a verification run.
pub struct OscrespReport(SuiteReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> OscrespStatus {
    match e {
        Error::InvalidGrid(_) | Error::GridMismatch(_) => OscrespStatus::InvalidGrid,
        Error::Incommensurate { .. } => OscrespStatus::Incommensurate,
        Error::Truncation { .. } => OscrespStatus::Truncation,
        Error::StepTooCoarse { .. } => OscrespStatus::Numerical,
        Error::Parse(_) | Error::Json(_) => OscrespStatus::Parse,
        Error::UnknownSuite(_) => OscrespStatus::UnknownSuite,
        Error::Io { .. } => OscrespStatus::Io,
        _ => OscrespStatus::InvalidArgument,
    }
}

struct Failure(OscrespStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, records any failure, and turns panics into [`OscrespStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OscrespStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_last_error();
            OscrespStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            OscrespStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(OscrespStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(OscrespStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|e| Failure(OscrespStatus::InvalidArgument, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn oscresp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn oscresp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oscresp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn oscresp_params_new(
    mass: f64,
    omega0: f64,
    hbar: f64,
    out: *mut *mut OscrespParams,
) -> OscrespStatus {
    guard(|| put(out, OscrespParams(OscillatorParams::new(mass, omega0, hbar)?), "out"))
}

/// # Safety
/// `p` must be null or a handle from [`oscresp_params_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oscresp_params_free(p: *mut OscrespParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Samples a kernel on an `n`-point grid with `omega0` on DFT bin `bin`.
///
/// # Safety
/// `params` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oscresp_kernel_new(
    params: *const OscrespParams,
    n: usize,
    bin: usize,
    kind: OscrespKernelKind,
    out: *mut *mut OscrespKernel,
) -> OscrespStatus {
    guard(|| {
        let p = borrow(params, "params")?.0;
        let grid = TimeGrid::commensurate(n, p.omega0(), bin)?;
        put(out, OscrespKernel(sample_kernel(&p, grid, Commensurability::Strict, kind)?), "out")
    })
}

/// Samples a kernel on an explicit grid step; `omega0` need not sit on a bin.
///
/// # Safety
/// `params` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oscresp_kernel_new_loose(
    params: *const OscrespParams,
    n: usize,
    dt: f64,
    kind: OscrespKernelKind,
    out: *mut *mut OscrespKernel,
) -> OscrespStatus {
    guard(|| {
        let p = borrow(params, "params")?.0;
        let grid = TimeGrid::new(n, dt)?;
        put(out, OscrespKernel(sample_kernel(&p, grid, Commensurability::Loose, kind)?), "out")
    })
}

fn sample_kernel(
    p: &OscillatorParams,
    grid: TimeGrid,
    mode: Commensurability,
    kind: OscrespKernelKind,
) -> Result<Kernel, Failure> {
    let k = osc_kernels(p, grid, mode)?;
    Ok(match kind {
        OscrespKernelKind::Retarded => k.retarded,
        OscrespKernelKind::Contraction => k.contraction,
        OscrespKernelKind::Feynman => k.feynman,
        OscrespKernelKind::FeynmanConj => k.feynman.conj(),
        OscrespKernelKind::Commutator => commutator_kernel(&k.retarded, p.hbar()),
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `k` must be null or a live kernel handle.
#[no_mangle]
pub unsafe extern "C" fn oscresp_kernel_len(k: *const OscrespKernel) -> usize {
    k.as_ref().map_or(0, |k| k.0.len())
}

/// Grid step of the kernel, or NaN for a null handle.
///
/// # Safety
/// `k` must be null or a live kernel handle.
#[no_mangle]
pub unsafe extern "C" fn oscresp_kernel_dt(k: *const OscrespKernel) -> f64 {
    k.as_ref().map_or(f64::NAN, |k| k.0.grid().dt())
}

/// Copies the samples into `re` and `im`, each of capacity `len`.
/// Sample `k` sits at lag `(k - n/2) dt`.
///
/// # Safety
/// `k` must be a live handle; `re` and `im` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn oscresp_kernel_values(
    k: *const OscrespKernel,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> OscrespStatus {
    guard(|| {
        let k = &borrow(k, "kernel")?.0;
        if re.is_null() || im.is_null() {
            return Err(null("output buffer"));
        }
        if len < k.len() {
            return Err(Failure(
                OscrespStatus::BufferTooSmall,
                format!("buffer holds {len} samples, kernel has {}", k.len()),
            ));
        }
        let re = std::slice::from_raw_parts_mut(re, k.len());
        let im = std::slice::from_raw_parts_mut(im, k.len());
        for (i, z) in k.values().iter().enumerate() {
            re[i] = z.re;
            im[i] = z.im;
        }
        Ok(())
    })
}

/// # Safety
/// `k` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oscresp_kernel_free(k: *mut OscrespKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oscresp_config_default(out: *mut *mut OscrespConfig) -> OscrespStatus {
    guard(|| put(out, OscrespConfig(Config::default()), "out"))
}

/// Configuration parsed from JSON text; omitted fields take their defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oscresp_config_from_json(
    json: *const c_char,
    out: *mut *mut OscrespConfig,
) -> OscrespStatus {
    guard(|| put(out, OscrespConfig(Config::from_json(c_str(json, "json")?)?), "out"))
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn oscresp_config_set_seed(cfg: *mut OscrespConfig, seed: u64) -> OscrespStatus {
    guard(|| {
        cfg.as_mut().ok_or_else(|| null("config"))?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oscresp_config_free(cfg: *mut OscrespConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the named suite (`spectral`, `kernels`, `wick`, `functional`, `driven`,
/// `charged`, `field` or `all`). A null `cfg` uses the defaults.
///
/// # Safety
/// `cfg` must be null or live, `suite` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn oscresp_run_suite(
    cfg: *const OscrespConfig,
    suite: *const c_char,
    out: *mut *mut OscrespReport,
) -> OscrespStatus {
    guard(|| {
        let suite: Suite = c_str(suite, "suite")?.parse()?;
        let default = Config::default();
        let cfg = cfg.as_ref().map_or(&default, |c| &c.0);
        put(out, OscrespReport(run_suite(suite, cfg)?), "out")
    })
}

/// 1 if every gating row passed, 0 otherwise or for a null handle.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn oscresp_report_passed(r: *const OscrespReport) -> i32 {
    r.as_ref().map_or(0, |r| r.0.passed() as i32)
}

/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn oscresp_report_row_count(r: *const OscrespReport) -> usize {
    r.as_ref().map_or(0, |r| r.0.rows.len())
}

/// Residual and pass flag of row `index`.
///
/// # Safety
/// `r` must be a live handle; `residual` and `pass` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn oscresp_report_row(
    r: *const OscrespReport,
    index: usize,
    residual: *mut f64,
    pass: *mut i32,
) -> OscrespStatus {
    guard(|| {
        let r = &borrow(r, "report")?.0;
        let row = r.rows.get(index).ok_or_else(|| {
            Failure(OscrespStatus::InvalidArgument, format!("row {index} out of range ({} rows)", r.rows.len()))
        })?;
        if residual.is_null() || pass.is_null() {
            return Err(null("output"));
        }
        *residual = row.residual;
        *pass = row.pass as i32;
        Ok(())
    })
}

/// The report as JSON; release with [`oscresp_string_free`].
///
/// # Safety
/// `r` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oscresp_report_to_json(r: *const OscrespReport, out: *mut *mut c_char) -> OscrespStatus {
    guard(|| put_string(out, to_json_string(&borrow(r, "report")?.0)?))
}

/// # Safety
/// `r` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oscresp_report_free(r: *mut OscrespReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_distinct_codes() {
        assert_eq!(status_of(&Error::UnknownSuite("x".into())), OscrespStatus::UnknownSuite);
        assert_eq!(status_of(&Error::Incommensurate { omega: 1.0, bin: 0.5 }), OscrespStatus::Incommensurate);
        assert_eq!(
            status_of(&Error::StepTooCoarse { estimate: 1.0, tolerance: 0.1, time: 0.0 }),
            OscrespStatus::Numerical
        );
        assert_eq!(status_of(&Error::InvalidParams("m".into())), OscrespStatus::InvalidArgument);
    }

    #[test]
    fn panics_become_a_status() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, OscrespStatus::Panic);
        let msg = unsafe { CStr::from_ptr(oscresp_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "panic: boom");
    }

    #[test]
    fn interior_nul_is_replaced() {
        set_last_error("a\0b");
        let msg = unsafe { CStr::from_ptr(oscresp_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "a b");
    }
}
