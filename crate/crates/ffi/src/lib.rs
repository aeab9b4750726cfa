//! C ABI for `bbvi`.
//!
//! Objects are opaque heap handles created by `bbvi_*_new`/`parse` style
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`BbviStatus`]; on failure a description is available from
//! [`bbvi_last_error_message`] on the same thread. Panics never cross the
//! boundary.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bbvi::config::{parse_config, RunConfig};
use bbvi::harness::execute;
use bbvi::{
    make_gaussian_target, make_logistic_regression_target, Error, FamilyKind, Gaussian,
    GaussianStructure, GaussianTarget, GaussianTargetSpec, LogisticRegressionTarget, TargetModel,
};
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BbviStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Numeric = 5,
    /// The run finished without meeting its stopping rule; the result is
    /// still returned.
    NotConverged = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BbviFamily {
    MeanField = 0,
    FullRank = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BbviGaussianStructure {
    Identity = 0,
    DiagNonidentity = 1,
    UniformCorr = 2,
    BandedCorr = 3,
}

/// Opaque run configuration.
pub struct BbviConfig {
    inner: RunConfig,
}

enum TargetInner {
    Gaussian(GaussianTarget),
    Logistic(LogisticRegressionTarget),
}

/// Opaque target density.
pub struct BbviTarget {
    inner: TargetInner,
}

impl BbviTarget {
    fn model(&self) -> &dyn TargetModel {
        match &self.inner {
            TargetInner::Gaussian(t) => t,
            TargetInner::Logistic(t) => t,
        }
    }
}

/// Opaque result of [`bbvi_run`].
pub struct BbviResult {
    params: Vec<f64>,
    terminal_step: u64,
    success: bool,
    reason: CString,
    trace_jsonl: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> BbviStatus {
    match e {
        Error::Config { .. } => BbviStatus::Config,
        Error::Io(_) => BbviStatus::Io,
        Error::NonFiniteTarget { .. }
        | Error::NonFiniteGradient { .. }
        | Error::NotPositiveDefinite
        | Error::Fit(_)
        | Error::Diagnostic(_) => BbviStatus::Numeric,
        _ => BbviStatus::InvalidArgument,
    }
}

fn fail(status: BbviStatus, msg: impl Into<String>) -> BbviStatus {
    set_last_error(msg);
    status
}

fn from_error(e: Error) -> BbviStatus {
    let s = status_of(&e);
    fail(s, e.to_string())
}

fn guard<F: FnOnce() -> BbviStatus>(f: F) -> BbviStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(BbviStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, BbviStatus> {
    if p.is_null() {
        return Err(fail(BbviStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(BbviStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], BbviStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(BbviStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bbvi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next `bbvi_*` call on the same thread.
#[no_mangle]
pub extern "C" fn bbvi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn bbvi_config_default(out: *mut *mut BbviConfig) -> BbviStatus {
    guard(|| {
        if out.is_null() {
            return fail(BbviStatus::NullPointer, "out is null");
        }
        *out = Box::into_raw(Box::new(BbviConfig {
            inner: RunConfig::default(),
        }));
        BbviStatus::Ok
    })
}

/// Parse a `key=value` configuration document.
#[no_mangle]
pub unsafe extern "C" fn bbvi_config_parse(text: *const c_char, out: *mut *mut BbviConfig) -> BbviStatus {
    guard(|| {
        if out.is_null() {
            return fail(BbviStatus::NullPointer, "out is null");
        }
        let text = tri!(str_arg(text, "text"));
        match parse_config(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(BbviConfig { inner }));
                BbviStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Set one key. The configuration is validated as a whole by [`bbvi_run`].
#[no_mangle]
pub unsafe extern "C" fn bbvi_config_set(
    cfg: *mut BbviConfig,
    key: *const c_char,
    value: *const c_char,
) -> BbviStatus {
    guard(|| {
        let Some(cfg) = cfg.as_mut() else {
            return fail(BbviStatus::NullPointer, "config is null");
        };
        let key = tri!(str_arg(key, "key"));
        let value = tri!(str_arg(value, "value"));
        match cfg.inner.set(key, value) {
            Ok(()) => BbviStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// Canonical text of the configuration, written NUL-terminated into `buf`.
/// `needed` receives the required size including the terminator.
#[no_mangle]
pub unsafe extern "C" fn bbvi_config_to_string(
    cfg: *const BbviConfig,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> BbviStatus {
    guard(|| {
        let Some(cfg) = cfg.as_ref() else {
            return fail(BbviStatus::NullPointer, "config is null");
        };
        let text = cfg.inner.to_canonical();
        let n = text.len() + 1;
        if !needed.is_null() {
            *needed = n;
        }
        if buf.is_null() || len < n {
            return fail(BbviStatus::BufferTooSmall, format!("need {n} bytes"));
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
        BbviStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn bbvi_config_free(cfg: *mut BbviConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// `N(0, V)` with the given covariance structure; `corr` is ignored for
/// diagonal structures.
#[no_mangle]
pub unsafe extern "C" fn bbvi_target_gaussian(
    structure: u32,
    d: usize,
    corr: f64,
    out: *mut *mut BbviTarget,
) -> BbviStatus {
    guard(|| {
        if out.is_null() {
            return fail(BbviStatus::NullPointer, "out is null");
        }
        let structure = match structure {
            0 => GaussianStructure::Identity,
            1 => GaussianStructure::DiagNonidentity,
            2 => GaussianStructure::UniformCorr,
            3 => GaussianStructure::BandedCorr,
            s => return fail(BbviStatus::InvalidArgument, format!("unknown structure {s}")),
        };
        match make_gaussian_target(GaussianTargetSpec::new(d, structure).with_corr(corr)) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(BbviTarget {
                    inner: TargetInner::Gaussian(t),
                }));
                BbviStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Logistic regression on a row-major `n x p` design `x` and 0/1 responses.
#[no_mangle]
pub unsafe extern "C" fn bbvi_target_logistic(
    x: *const f64,
    n: usize,
    p: usize,
    y: *const f64,
    prior_scale: f64,
    out: *mut *mut BbviTarget,
) -> BbviStatus {
    guard(|| {
        if out.is_null() {
            return fail(BbviStatus::NullPointer, "out is null");
        }
        let Some(np) = n.checked_mul(p) else {
            return fail(BbviStatus::InvalidArgument, "n * p overflows");
        };
        let xs = tri!(slice_arg(x, np, "x"));
        let ys = tri!(slice_arg(y, n, "y"));
        let design = DMatrix::from_row_slice(n, p, xs);
        match make_logistic_regression_target(design, ys.to_vec(), prior_scale) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(BbviTarget {
                    inner: TargetInner::Logistic(t),
                }));
                BbviStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Dimension of the target, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn bbvi_target_dim(target: *const BbviTarget) -> usize {
    target.as_ref().map_or(0, |t| t.model().dim())
}

/// Unnormalized log density at `theta`; the gradient is written to `grad`
/// when it is non-null.
#[no_mangle]
pub unsafe extern "C" fn bbvi_target_log_density(
    target: *const BbviTarget,
    theta: *const f64,
    len: usize,
    out_logp: *mut f64,
    grad: *mut f64,
) -> BbviStatus {
    guard(|| {
        let Some(t) = target.as_ref() else {
            return fail(BbviStatus::NullPointer, "target is null");
        };
        if out_logp.is_null() {
            return fail(BbviStatus::NullPointer, "out_logp is null");
        }
        let model = t.model();
        if len != model.dim() {
            return fail(
                BbviStatus::InvalidArgument,
                format!("theta has length {len}, target dimension is {}", model.dim()),
            );
        }
        let theta = tri!(slice_arg(theta, len, "theta"));
        if grad.is_null() {
            *out_logp = model.log_density_u(theta);
        } else {
            let g = std::slice::from_raw_parts_mut(grad, len);
            *out_logp = model.log_density_and_grad(theta, g);
        }
        BbviStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn bbvi_target_free(target: *mut BbviTarget) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

/// Symmetrized KL divergence between two flat parameter vectors of the same
/// family.
#[no_mangle]
pub unsafe extern "C" fn bbvi_skl(
    family: u32,
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> BbviStatus {
    guard(|| {
        if out.is_null() {
            return fail(BbviStatus::NullPointer, "out is null");
        }
        let kind = match family {
            0 => FamilyKind::MeanField,
            1 => FamilyKind::FullRank,
            f => return fail(BbviStatus::InvalidArgument, format!("unknown family {f}")),
        };
        let a = tri!(slice_arg(a, len, "a"));
        let b = tri!(slice_arg(b, len, "b"));
        let r = Gaussian::from_flat(kind, a)
            .and_then(|qa| Gaussian::from_flat(kind, b).and_then(|qb| qa.skl(&qb)));
        match r {
            Ok(v) => {
                *out = v;
                BbviStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Run the configured algorithm on `target`. No files are written. On `Ok`
/// and `NotConverged` a result handle is stored in `out`.
#[no_mangle]
pub unsafe extern "C" fn bbvi_run(
    cfg: *const BbviConfig,
    target: *const BbviTarget,
    out: *mut *mut BbviResult,
) -> BbviStatus {
    guard(|| {
        let Some(cfg) = cfg.as_ref() else {
            return fail(BbviStatus::NullPointer, "config is null");
        };
        let Some(target) = target.as_ref() else {
            return fail(BbviStatus::NullPointer, "target is null");
        };
        if out.is_null() {
            return fail(BbviStatus::NullPointer, "out is null");
        }
        if let Err(e) = cfg.inner.validate() {
            return from_error(e);
        }
        let run = match execute(&cfg.inner, target.model(), None) {
            Ok(r) => r,
            Err(e) => return from_error(e),
        };
        let mut jsonl = String::new();
        for line in &run.lines {
            jsonl.push_str(&line.to_string());
            jsonl.push('\n');
        }
        let status = if run.success {
            BbviStatus::Ok
        } else {
            fail(
                BbviStatus::NotConverged,
                run.warning.clone().unwrap_or_else(|| run.reason.clone()),
            )
        };
        *out = Box::into_raw(Box::new(BbviResult {
            params: run.final_params,
            terminal_step: run.terminal_step as u64,
            success: run.success,
            reason: CString::new(run.reason).unwrap_or_default(),
            trace_jsonl: CString::new(jsonl).unwrap_or_default(),
        }));
        status
    })
}

#[no_mangle]
pub unsafe extern "C" fn bbvi_result_num_params(res: *const BbviResult) -> usize {
    res.as_ref().map_or(0, |r| r.params.len())
}

/// Copy the final variational parameters into `buf`.
#[no_mangle]
pub unsafe extern "C" fn bbvi_result_params(res: *const BbviResult, buf: *mut f64, len: usize) -> BbviStatus {
    guard(|| {
        let Some(r) = res.as_ref() else {
            return fail(BbviStatus::NullPointer, "result is null");
        };
        if buf.is_null() || len < r.params.len() {
            return fail(BbviStatus::BufferTooSmall, format!("need {} values", r.params.len()));
        }
        ptr::copy_nonoverlapping(r.params.as_ptr(), buf, r.params.len());
        BbviStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn bbvi_result_terminal_step(res: *const BbviResult) -> u64 {
    res.as_ref().map_or(0, |r| r.terminal_step)
}

#[no_mangle]
pub unsafe extern "C" fn bbvi_result_success(res: *const BbviResult) -> bool {
    res.as_ref().is_some_and(|r| r.success)
}

/// Termination reason; owned by the result.
#[no_mangle]
pub unsafe extern "C" fn bbvi_result_reason(res: *const BbviResult) -> *const c_char {
    res.as_ref().map_or(ptr::null(), |r| r.reason.as_ptr())
}

/// Trace records, one JSON object per line; owned by the result.
#[no_mangle]
pub unsafe extern "C" fn bbvi_result_trace(res: *const BbviResult) -> *const c_char {
    res.as_ref().map_or(ptr::null(), |r| r.trace_jsonl.as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn bbvi_result_free(res: *mut BbviResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}
