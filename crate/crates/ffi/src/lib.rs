//! C interface to the bargaining crate.
//!
//! Instances and run results are opaque handles owned by the caller and
//! released with their `_free` function. Every fallible call returns a
//! [`BgStatus`]; on failure a message is available from
//! [`bg_last_error_message`] on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bargaining::dynamics::{compute_offer, run, DynamicsConfig, Init, MessageState};
use bargaining::pipeline::{verify, VerifyConfig};
use bargaining::{Error, Instance};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidInstance = 4,
    InvalidConfig = 5,
    NoConvergence = 6,
    BufferTooSmall = 7,
    Internal = 8,
    Panic = 9,
}

/// Parsed, validated instance.
pub struct BgInstance {
    inner: Instance,
}

/// Final state of a dynamics run.
pub struct BgState {
    state: MessageState,
    converged: bool,
    iterations: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BgRunConfig {
    pub kappa: f64,
    /// Stop once the step change is at most `kappa * eps_conv`.
    pub eps_conv: f64,
    pub max_iters: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(text).expect("nul bytes removed")));
}

fn status_of(err: &Error) -> BgStatus {
    match err {
        Error::Parse(_) | Error::Io(_) => BgStatus::Parse,
        Error::NonPositiveWeight { .. }
        | Error::DuplicateEdge { .. }
        | Error::SelfLoop(_)
        | Error::DanglingNode { .. }
        | Error::InvalidInstance(_) => BgStatus::InvalidInstance,
        Error::InvalidConfig(_) | Error::DomainMismatch { .. } | Error::SizeCap { .. } => BgStatus::InvalidConfig,
        Error::NoConvergence(_) => BgStatus::NoConvergence,
        _ => BgStatus::Internal,
    }
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (BgStatus, String)>) -> BgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BgStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside the library");
            BgStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (BgStatus, String) {
    (status_of(&e), e.to_string())
}

fn null() -> (BgStatus, String) {
    (BgStatus::NullPointer, "null pointer argument".into())
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, (BgStatus, String)> {
    p.as_ref().ok_or_else(null)
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, (BgStatus, String)> {
    p.as_mut().ok_or_else(null)
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn bg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses an instance document (`{"nodes": n, "edges": [{u, v, w}, ...]}`).
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out_instance` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn bg_instance_from_json(json: *const c_char, out_instance: *mut *mut BgInstance) -> BgStatus {
    guard(|| {
        let slot = out(out_instance)?;
        *slot = ptr::null_mut();
        if json.is_null() {
            return Err(null());
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| (BgStatus::InvalidUtf8, e.to_string()))?;
        let inner = Instance::load(text).map_err(lib_err)?;
        *slot = Box::into_raw(Box::new(BgInstance { inner }));
        Ok(())
    })
}

/// # Safety
/// `instance` must come from [`bg_instance_from_json`] and not be freed
/// twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bg_instance_free(instance: *mut BgInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn bg_instance_node_count(instance: *const BgInstance, out_count: *mut usize) -> BgStatus {
    guard(|| {
        *out(out_count)? = deref(instance)?.inner.node_count();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn bg_instance_edge_count(instance: *const BgInstance, out_count: *mut usize) -> BgStatus {
    guard(|| {
        *out(out_count)? = deref(instance)?.inner.edge_count();
        Ok(())
    })
}

/// Number of directed messages, twice the edge count. Arc `2e` runs from
/// the lower to the higher endpoint of edge `e`, arc `2e + 1` back.
///
/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn bg_instance_arc_count(instance: *const BgInstance, out_count: *mut usize) -> BgStatus {
    guard(|| {
        *out(out_count)? = deref(instance)?.inner.arc_count();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn bg_instance_max_weight(instance: *const BgInstance, out_weight: *mut f64) -> BgStatus {
    guard(|| {
        *out(out_weight)? = deref(instance)?.inner.max_weight();
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn bg_run_config_default() -> BgRunConfig {
    let d = DynamicsConfig::default();
    BgRunConfig { kappa: d.kappa, eps_conv: d.eps_conv, max_iters: d.max_iters }
}

/// Runs the dynamics. `init_alpha` may be null for the zero vector;
/// otherwise it holds `init_len` values, one per arc. A run that hits
/// `max_iters` still returns `BG_STATUS_OK`; check
/// [`bg_state_converged`].
///
/// # Safety
/// `instance` and `config` must be valid; `init_alpha` must point to
/// `init_len` doubles when non-null; `out_state` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bg_run(
    instance: *const BgInstance,
    config: *const BgRunConfig,
    init_alpha: *const f64,
    init_len: usize,
    out_state: *mut *mut BgState,
) -> BgStatus {
    guard(|| {
        let slot = out(out_state)?;
        *slot = ptr::null_mut();
        let inst = &deref(instance)?.inner;
        let c = deref(config)?;
        let init = if init_alpha.is_null() {
            Init::Zeros
        } else {
            Init::Explicit { alpha: std::slice::from_raw_parts(init_alpha, init_len).to_vec() }
        };
        let cfg = DynamicsConfig { kappa: c.kappa, eps_conv: c.eps_conv, max_iters: c.max_iters, init, ..DynamicsConfig::default() };
        let outcome = run(inst, &cfg).map_err(lib_err)?;
        *slot = Box::into_raw(Box::new(BgState {
            state: outcome.state,
            converged: outcome.converged,
            iterations: outcome.iterations,
        }));
        Ok(())
    })
}

/// # Safety
/// `state` must come from [`bg_run`] and not be freed twice. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn bg_state_free(state: *mut BgState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn bg_state_converged(state: *const BgState, out_converged: *mut bool) -> BgStatus {
    guard(|| {
        *out(out_converged)? = deref(state)?.converged;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn bg_state_iterations(state: *const BgState, out_iterations: *mut u64) -> BgStatus {
    guard(|| {
        *out(out_iterations)? = deref(state)?.iterations;
        Ok(())
    })
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize, out_needed: *mut usize) -> Result<(), (BgStatus, String)> {
    if !out_needed.is_null() {
        *out_needed = src.len();
    }
    if len < src.len() {
        return Err((BgStatus::BufferTooSmall, format!("buffer holds {len} values, {} needed", src.len())));
    }
    if buf.is_null() {
        return Err(null());
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copies the node earnings into `buf`. The required length is written
/// to `out_needed` (if non-null) even when the buffer is too small.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bg_state_earnings(state: *const BgState, buf: *mut f64, len: usize, out_needed: *mut usize) -> BgStatus {
    guard(|| copy_out(&deref(state)?.state.earnings, buf, len, out_needed))
}

/// Copies the message vector (one value per arc) into `buf`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bg_state_alpha(state: *const BgState, buf: *mut f64, len: usize, out_needed: *mut usize) -> BgStatus {
    guard(|| copy_out(&deref(state)?.state.alpha, buf, len, out_needed))
}

/// Runs the verification pipeline with default settings and returns the
/// report as a JSON string, to be released with [`bg_string_free`].
///
/// # Safety
/// `instance` must be valid; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn bg_verify_json(instance: *const BgInstance, out_json: *mut *mut c_char, out_passed: *mut bool) -> BgStatus {
    guard(|| {
        let slot = out(out_json)?;
        *slot = ptr::null_mut();
        let passed = out(out_passed)?;
        let v = verify(&deref(instance)?.inner, &VerifyConfig::default()).map_err(lib_err)?;
        let text = serde_json::to_string(&v.report).map_err(|e| (BgStatus::Internal, e.to_string()))?;
        *passed = v.report.passed;
        *slot = CString::new(text).map_err(|e| (BgStatus::Internal, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn bg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Offer `(w - a_ij)_+ - ½(w - a_ij - a_ji)_+` on one edge.
#[no_mangle]
pub extern "C" fn bg_compute_offer(w: f64, a_ij: f64, a_ji: f64) -> f64 {
    compute_offer(w, a_ij, a_ji)
}
