//! C interface to `lossq`.
//!
//! Models live behind an opaque `LossqModel` handle. Every fallible call
//! returns a `LossqStatus`; on failure `lossq_last_error_message` describes
//! the most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lossq::asymptotics::{self, AsymptoticRegime};
use lossq::sim::{self, SimConfig};
use lossq::{mcoracle, recurrence, Error, InterarrivalDistribution, QueueModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossqStatus {
    Ok = 0,
    /// A required pointer was null.
    Null = 1,
    /// Bad parameter or unparsable distribution.
    Invalid = 2,
    /// The numerics failed for a valid model.
    Numeric = 3,
    /// A panic was caught at the boundary.
    Panic = 4,
}

/// Opaque model handle.
pub struct LossqModel {
    inner: QueueModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossqSimEstimate {
    pub p_hat: f64,
    pub std_error: f64,
    pub ci95_halfwidth: f64,
    pub losses: u64,
    pub arrivals_counted: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LossqStatus {
    if e.is_usage() {
        LossqStatus::Invalid
    } else {
        LossqStatus::Numeric
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (LossqStatus, String)>) -> LossqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LossqStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            LossqStatus::Panic
        }
    }
}

fn lib<T>(r: lossq::Result<T>) -> Result<T, (LossqStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (LossqStatus, String) {
    (LossqStatus::Null, format!("{what} is null"))
}

unsafe fn model_ref<'a>(m: *const LossqModel) -> Result<&'a QueueModel, (LossqStatus, String)> {
    unsafe { m.as_ref() }
        .map(|h| &h.inner)
        .ok_or_else(|| null("model"))
}

unsafe fn write<T>(out: *mut T, v: T) -> Result<(), (LossqStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    unsafe { out.write(v) };
    Ok(())
}

/// Creates a model from a distribution spec such as `"det:a=1"`.
///
/// # Safety
/// `dist` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lossq_model_new(
    dist: *const c_char,
    m: usize,
    n: usize,
    mu: f64,
    out: *mut *mut LossqModel,
) -> LossqStatus {
    guard(|| {
        if dist.is_null() {
            return Err(null("dist"));
        }
        let spec = unsafe { CStr::from_ptr(dist) }
            .to_str()
            .map_err(|_| (LossqStatus::Invalid, "dist is not UTF-8".to_string()))?;
        let d: InterarrivalDistribution = lib(spec.parse())?;
        let q = lib(QueueModel::new(m, n, mu, d))?;
        unsafe { write(out, Box::into_raw(Box::new(LossqModel { inner: q }))) }
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from `lossq_model_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lossq_model_free(model: *mut LossqModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Rescales the arrival process so the load `λ/(mμ)` equals `rho`.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lossq_model_set_load(model: *mut LossqModel, rho: f64) -> LossqStatus {
    guard(|| {
        let h = unsafe { model.as_mut() }.ok_or_else(|| null("model"))?;
        h.inner = lib(h.inner.with_load(rho))?;
        Ok(())
    })
}

/// Writes the load `λ/(mμ)`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lossq_model_load(model: *const LossqModel, out: *mut f64) -> LossqStatus {
    guard(|| unsafe { write(out, model_ref(model)?.load()) })
}

/// Exact loss probability.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lossq_loss_exact(model: *const LossqModel, out: *mut f64) -> LossqStatus {
    guard(|| {
        let p = lib(recurrence::loss_gimmn(unsafe { model_ref(model)? }))?.p;
        unsafe { write(out, p) }
    })
}

/// Loss probability from the stationary vector of the embedded chain.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lossq_loss_oracle(model: *const LossqModel, out: *mut f64) -> LossqStatus {
    guard(|| {
        let p = lib(mcoracle::loss_oracle(unsafe { model_ref(model)? }))?.p;
        unsafe { write(out, p) }
    })
}

/// Asymptotic estimate. With `heavy_c < 0` the regime follows from the
/// load; otherwise the heavy-traffic estimate with `C = heavy_c` is used.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lossq_loss_asymptotic(
    model: *const LossqModel,
    heavy_c: f64,
    out: *mut f64,
) -> LossqStatus {
    guard(|| {
        let q = unsafe { model_ref(model)? };
        let regime = if heavy_c < 0.0 {
            lib(AsymptoticRegime::classify(q))?
        } else {
            lib(AsymptoticRegime::heavy_traffic(q, Some(heavy_c)))?
        };
        let p = lib(asymptotics::theorem1_estimate(q, &regime))?.p;
        unsafe { write(out, p) }
    })
}

/// Root `σ_m` of the model, or 1 when the load is at least 1.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lossq_sigma_root(model: *const LossqModel, out: *mut f64) -> LossqStatus {
    guard(|| {
        let q = unsafe { model_ref(model)? };
        let s = lib(asymptotics::sigma_root(q.dist(), q.mu(), q.m()))?;
        unsafe { write(out, s) }
    })
}

/// Simulates the model. `arrivals` counts per replication, warmup included.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lossq_simulate(
    model: *const LossqModel,
    arrivals: u64,
    warmup: u64,
    replications: usize,
    seed: u64,
    out: *mut LossqSimEstimate,
) -> LossqStatus {
    guard(|| {
        let cfg = SimConfig {
            model: unsafe { model_ref(model)? }.clone(),
            arrivals_total: arrivals,
            warmup_arrivals: warmup,
            replications,
            seed,
        };
        let e = lib(sim::simulate(&cfg))?;
        let est = LossqSimEstimate {
            p_hat: e.p_hat,
            std_error: e.stderr,
            ci95_halfwidth: e.ci95_halfwidth,
            losses: e.losses,
            arrivals_counted: e.arrivals_counted,
        };
        unsafe { write(out, est) }
    })
}

/// Message for the last failure on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lossq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn lossq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
