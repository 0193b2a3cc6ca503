//! C ABI over `cgolab`. Every entry point returns an `i32` status code;
//! `cgolab_last_error` copies the message of the most recent failure on the
//! calling thread.

use cgolab::harness::RunConfig;
use cgolab::quasimode::{build_quasimode, quasimode_residual, make_spectral_parameter, Quasimode};
use cgolab::reconstruct::{parameter_schedule, reconstruct, Pipeline};
use cgolab::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

pub const CGOLAB_OK: i32 = 0;
pub const CGOLAB_ERR_NULL: i32 = -1;
pub const CGOLAB_ERR_UTF8: i32 = -2;
pub const CGOLAB_ERR_DOMAIN: i32 = -3;
pub const CGOLAB_ERR_CONFIG: i32 = -4;
pub const CGOLAB_ERR_GEOMETRY: i32 = -5;
pub const CGOLAB_ERR_SOLVER: i32 = -6;
pub const CGOLAB_ERR_RESONANCE: i32 = -7;
pub const CGOLAB_ERR_IO: i32 = -8;
pub const CGOLAB_ERR_BUFFER: i32 = -9;
pub const CGOLAB_ERR_PANIC: i32 = -10;
pub const CGOLAB_ERR_OTHER: i32 = -11;

/// Grid, eigenbasis and line grid built from a TOML configuration.
pub struct CgolabPipeline {
    inner: Pipeline,
}

/// A sampled Gaussian beam.
pub struct CgolabQuasimode {
    inner: Quasimode,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::Domain(_) | Error::ZeroRealPart { .. } | Error::ZeroAmplitude | Error::Shape(_) => CGOLAB_ERR_DOMAIN,
        Error::Config { .. } => CGOLAB_ERR_CONFIG,
        Error::TangentialExit { .. }
        | Error::NoExit { .. }
        | Error::ConjugatePoint { .. }
        | Error::SelfIntersecting { .. }
        | Error::TubeTooWide { .. }
        | Error::NoValidPair { .. }
        | Error::GridTooCoarse { .. } => CGOLAB_ERR_GEOMETRY,
        Error::SolverFailure(_) | Error::RiccatiBlowup { .. } | Error::CalibrationDegenerate { .. } => CGOLAB_ERR_SOLVER,
        Error::Resonance { .. } | Error::HelmholtzResonance { .. } => CGOLAB_ERR_RESONANCE,
        Error::Io(_) | Error::Cache(_) => CGOLAB_ERR_IO,
        _ => CGOLAB_ERR_OTHER,
    }
}

fn guard(f: impl FnOnce() -> Result<(), i32>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CGOLAB_OK,
        Ok(Err(code)) => code,
        Err(_) => {
            set_error("panic inside cgolab");
            CGOLAB_ERR_PANIC
        }
    }
}

fn fail(e: Error) -> i32 {
    let c = code_of(&e);
    set_error(e.to_string());
    c
}

fn null(what: &str) -> i32 {
    set_error(format!("null pointer: {what}"));
    CGOLAB_ERR_NULL
}

/// Copy the last error message (NUL-terminated) into `buf`. Returns
/// `CGOLAB_ERR_BUFFER` when `len` is too small; the message is truncated.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cgolab_last_error(buf: *mut c_char, len: usize) -> i32 {
    if buf.is_null() || len == 0 {
        return CGOLAB_ERR_NULL;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        let n = bytes.len().min(len - 1);
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
        *buf.add(n) = 0;
        if bytes.len() >= len {
            CGOLAB_ERR_BUFFER
        } else {
            CGOLAB_OK
        }
    })
}

/// `s = sqrt(k^2 + (tau + i lambda)^2)` and `varsigma = sqrt(k^2 + tau^2 - lambda^2)`.
///
/// # Safety
/// Output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cgolab_spectral_parameter(
    k: f64,
    tau: f64,
    lambda: f64,
    s_re: *mut f64,
    s_im: *mut f64,
    varsigma: *mut f64,
) -> i32 {
    if s_re.is_null() || s_im.is_null() || varsigma.is_null() {
        return null("output");
    }
    guard(|| {
        let sp = make_spectral_parameter(k, tau, lambda).map_err(fail)?;
        *s_re = sp.s.re;
        *s_im = sp.s.im;
        *varsigma = sp.varsigma;
        Ok(())
    })
}

/// Parameter schedule: writes the case (1 or 2), `tau` and the `lambda` window.
///
/// # Safety
/// Output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cgolab_schedule(
    k: f64,
    eps: f64,
    sigma: f64,
    d: f64,
    case_out: *mut i32,
    tau: *mut f64,
    window: *mut f64,
) -> i32 {
    if case_out.is_null() || tau.is_null() || window.is_null() {
        return null("output");
    }
    guard(|| {
        let s = parameter_schedule(k, eps, sigma, d).map_err(fail)?;
        *case_out = i32::from(s.case);
        *tau = s.tau;
        *window = s.window;
        Ok(())
    })
}

/// Build a pipeline from TOML text (NULL or empty text: defaults).
///
/// # Safety
/// `config` must be NULL or a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgolab_pipeline_new(config: *const c_char, out: *mut *mut CgolabPipeline) -> i32 {
    if out.is_null() {
        return null("out");
    }
    *out = std::ptr::null_mut();
    let text = if config.is_null() {
        String::new()
    } else {
        match CStr::from_ptr(config).to_str() {
            Ok(s) => s.to_owned(),
            Err(_) => {
                set_error("config is not valid UTF-8");
                return CGOLAB_ERR_UTF8;
            }
        }
    };
    guard(|| {
        let cfg = RunConfig::from_toml(&text).map_err(fail)?;
        let inner = cfg.pipeline().map_err(fail)?;
        *out = Box::into_raw(Box::new(CgolabPipeline { inner }));
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a handle from `cgolab_pipeline_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cgolab_pipeline_free(p: *mut CgolabPipeline) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of transversal grid nodes (interior then boundary).
///
/// # Safety
/// `p` must be a live handle; `n` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cgolab_pipeline_nodes(p: *const CgolabPipeline, n: *mut usize) -> i32 {
    if p.is_null() || n.is_null() {
        return null("pipeline or output");
    }
    *n = (*p).inner.grid.n_all();
    CGOLAB_OK
}

/// Lowest retained Dirichlet eigenvalues `omega_j^2`; writes up to `len`
/// values and the count into `written`.
///
/// # Safety
/// `p` live; `values` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cgolab_pipeline_eigenvalues(
    p: *const CgolabPipeline,
    values: *mut f64,
    len: usize,
    written: *mut usize,
) -> i32 {
    if p.is_null() || values.is_null() || written.is_null() {
        return null("argument");
    }
    let ev = &(*p).inner.basis.eigenvalues;
    let n = ev.len().min(len);
    std::ptr::copy_nonoverlapping(ev.as_ptr(), values, n);
    *written = n;
    if n < ev.len() {
        set_error(format!("buffer holds {len} of {} eigenvalues", ev.len()));
        CGOLAB_ERR_BUFFER
    } else {
        CGOLAB_OK
    }
}

/// Gaussian beam through `(x, y)` in direction `(dx, dy)` for `(k, tau, lambda)`.
///
/// # Safety
/// `p` live; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cgolab_quasimode_new(
    p: *const CgolabPipeline,
    x: f64,
    y: f64,
    dx: f64,
    dy: f64,
    k: f64,
    tau: f64,
    lambda: f64,
    out: *mut *mut CgolabQuasimode,
) -> i32 {
    if p.is_null() || out.is_null() {
        return null("pipeline or out");
    }
    *out = std::ptr::null_mut();
    let pl = &(*p).inner;
    guard(|| {
        let sp = make_spectral_parameter(k, tau, lambda).map_err(fail)?;
        let q = build_quasimode(&pl.manifold, [x, y], [dx, dy], &sp, &pl.qcfg, &pl.grid).map_err(fail)?;
        *out = Box::into_raw(Box::new(CgolabQuasimode { inner: q }));
        Ok(())
    })
}

/// # Safety
/// `q` must be NULL or a handle from `cgolab_quasimode_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cgolab_quasimode_free(q: *mut CgolabQuasimode) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Copy the beam samples into `re`/`im` (length must equal the node count).
///
/// # Safety
/// `q` live; `re` and `im` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cgolab_quasimode_field(q: *const CgolabQuasimode, re: *mut f64, im: *mut f64, len: usize) -> i32 {
    if q.is_null() || re.is_null() || im.is_null() {
        return null("argument");
    }
    let f = &(*q).inner.field;
    if len != f.len() {
        set_error(format!("expected {} samples, buffer has {len}", f.len()));
        return CGOLAB_ERR_BUFFER;
    }
    for (i, z) in f.iter().enumerate() {
        *re.add(i) = z.re;
        *im.add(i) = z.im;
    }
    CGOLAB_OK
}

/// Relative residual `|(-Delta - s^2) v| / (|s|^2 |v|)`.
///
/// # Safety
/// Handles live; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cgolab_quasimode_residual(
    p: *const CgolabPipeline,
    q: *const CgolabQuasimode,
    out: *mut f64,
) -> i32 {
    if p.is_null() || q.is_null() || out.is_null() {
        return null("argument");
    }
    guard(|| {
        *out = quasimode_residual(&(*q).inner, &(*p).inner.grid).relative;
        Ok(())
    })
}

/// Separable test coefficient reconstruction; writes the `L^2` error.
///
/// # Safety
/// `p` live; `l2_error` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cgolab_reconstruct(
    p: *const CgolabPipeline,
    k: f64,
    eps: f64,
    seed: u64,
    l2_error: *mut f64,
) -> i32 {
    if p.is_null() || l2_error.is_null() {
        return null("argument");
    }
    let pl = &(*p).inner;
    guard(|| {
        let cfg = RunConfig::default();
        let r = reconstruct(pl, &cfg.truth(), k, eps, seed, &cfg.sampling()).map_err(fail)?;
        *l2_error = r.metrics.l2_error;
        Ok(())
    })
}
