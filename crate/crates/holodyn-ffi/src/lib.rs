//! C ABI over the holodyn library.
//!
//! Conventions:
//! - Every fallible call returns a `HolodynStatus` code; 0 means success.
//! - On failure the message is retrievable with `holodyn_last_error_message`
//!   (per thread).
//! - Handles returned through out-parameters are opaque and must be released
//!   with the matching `_free` function. Passing NULL where a handle or
//!   out-parameter is expected yields `HOLODYN_STATUS_NULL_ARGUMENT`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::path::Path;

use holodyn::experiment_harness::{run_config, verify_invariants};
use holodyn::holonomy::{noncommutativity, wilson_loop, HolonomyResult};
use holodyn::reservoir_path::{LoopCurve, ReservoirPath};
use holodyn::HolodynError;

/// Status codes mirrored by the CLI exit codes, plus FFI-specific ones.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum HolodynStatus {
    Ok = 0,
    CriterionFailure = 1,
    SchemaViolation = 2,
    InvariantBreach = 3,
    NullArgument = 4,
    InvalidUtf8 = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = msg.into());
}

fn status_of(err: &HolodynError) -> HolodynStatus {
    match err {
        HolodynError::Config(_) | HolodynError::InvalidParameter(_) | HolodynError::Io(_) => {
            HolodynStatus::SchemaViolation
        }
        HolodynError::StabilityGuard { .. } => HolodynStatus::SchemaViolation,
        _ => HolodynStatus::InvariantBreach,
    }
}

/// Opaque holonomy handle: a DFS loop holonomy with its eigenphases.
pub struct HolodynHolonomy {
    inner: HolonomyResult,
}

/// Copy the last error message for the calling thread into `buf` (UTF-8,
/// NUL-terminated, truncated to `len` bytes). Returns the full message
/// length in bytes, excluding the terminator.
#[no_mangle]
pub extern "C" fn holodyn_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, HolodynStatus> {
    if ptr.is_null() {
        set_error("path argument is NULL");
        return Err(HolodynStatus::NullArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path argument is not valid UTF-8");
            Err(HolodynStatus::InvalidUtf8)
        }
    }
}

/// Wilson-loop holonomy of the three-level dark-state scenario.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn holodyn_wilson_loop_dark_state(
    theta: f64,
    kappa: f64,
    steps: usize,
    out: *mut *mut HolodynHolonomy,
) -> HolodynStatus {
    if out.is_null() {
        set_error("out handle is NULL");
        return HolodynStatus::NullArgument;
    }
    let result = ReservoirPath::dark_state(theta, kappa)
        .and_then(|path| wilson_loop(&path, steps, None));
    match result {
        Ok(h) => {
            *out = Box::into_raw(Box::new(HolodynHolonomy { inner: h }));
            HolodynStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Wilson-loop holonomy of the four-level tripod scenario over a circle of
/// constant polar angle `theta`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn holodyn_wilson_loop_tripod_circle(
    theta: f64,
    kappa: f64,
    steps: usize,
    out: *mut *mut HolodynHolonomy,
) -> HolodynStatus {
    if out.is_null() {
        set_error("out handle is NULL");
        return HolodynStatus::NullArgument;
    }
    let result = ReservoirPath::tripod(LoopCurve::Circle { theta }, kappa)
        .and_then(|path| wilson_loop(&path, steps, None));
    match result {
        Ok(h) => {
            *out = Box::into_raw(Box::new(HolodynHolonomy { inner: h }));
            HolodynStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Dimension of the decoherence-free block the holonomy acts on.
///
/// # Safety
/// `handle` must come from a `holodyn_wilson_loop_*` call and not be freed.
#[no_mangle]
pub unsafe extern "C" fn holodyn_holonomy_dim(handle: *const HolodynHolonomy) -> usize {
    if handle.is_null() {
        return 0;
    }
    (*handle).inner.phases.len()
}

/// Copy the ascending eigenphases (radians, in (-pi, pi]) into `out`.
/// `len` must be at least the block dimension.
///
/// # Safety
/// `handle` must be live; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn holodyn_holonomy_phases(
    handle: *const HolodynHolonomy,
    out: *mut f64,
    len: usize,
) -> HolodynStatus {
    if handle.is_null() || out.is_null() {
        set_error("NULL handle or buffer");
        return HolodynStatus::NullArgument;
    }
    let phases = &(*handle).inner.phases;
    if len < phases.len() {
        set_error(format!(
            "buffer holds {len} doubles, need {}",
            phases.len()
        ));
        return HolodynStatus::SchemaViolation;
    }
    std::ptr::copy_nonoverlapping(phases.as_ptr(), out, phases.len());
    HolodynStatus::Ok
}

/// ||U U^dagger - 1|| for the stored holonomy.
///
/// # Safety
/// `handle` must be live.
#[no_mangle]
pub unsafe extern "C" fn holodyn_holonomy_unitarity_defect(
    handle: *const HolodynHolonomy,
) -> f64 {
    if handle.is_null() {
        return f64::NAN;
    }
    (*handle).inner.unitarity_defect
}

/// Release a holonomy handle. NULL is ignored.
///
/// # Safety
/// `handle` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn holodyn_holonomy_free(handle: *mut HolodynHolonomy) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// ||[U_A, U_B]|| for two tripod loops sharing the base point: a circle at
/// `theta` and a petal loop with the given excursions.
///
/// # Safety
/// `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn holodyn_tripod_commutator_norm(
    theta: f64,
    theta_amp: f64,
    phi_amp: f64,
    chi_amp: f64,
    steps: usize,
    out: *mut f64,
) -> HolodynStatus {
    if out.is_null() {
        set_error("out pointer is NULL");
        return HolodynStatus::NullArgument;
    }
    let result = (|| {
        let a = ReservoirPath::tripod(LoopCurve::Circle { theta }, 1.0)?;
        let b = ReservoirPath::tripod(
            LoopCurve::Petal {
                theta0: theta,
                theta_amp,
                phi_amp,
                chi_amp,
            },
            1.0,
        )?;
        noncommutativity(&a, &b, steps)
    })();
    match result {
        Ok(v) => {
            *out = v;
            HolodynStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Run a JSON config end to end (same contract as `holodyn run`). Writes CSVs
/// and a report under `out_dir` (or $HOLODYN_OUT / ./holodyn_out when NULL)
/// and returns the CLI exit code as a status.
///
/// # Safety
/// `config_path` must be a NUL-terminated UTF-8 path; `out_dir` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn holodyn_run_config(
    config_path: *const c_char,
    out_dir: *const c_char,
    jobs: usize,
    seed: u64,
) -> HolodynStatus {
    let cfg = match path_arg(config_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let out = if out_dir.is_null() {
        None
    } else {
        match path_arg(out_dir) {
            Ok(p) => Some(p),
            Err(s) => return s,
        }
    };
    match run_config(cfg, out, jobs, seed) {
         0 => HolodynStatus::Ok,
        1 => {
            set_error("one or more experiment criteria failed");
            HolodynStatus::CriterionFailure
        }
        2 => {
            set_error("config rejected; see stderr diagnostics");
            HolodynStatus::SchemaViolation
        }
        _ => {
            set_error("invariant breach during simulation");
            HolodynStatus::InvariantBreach
        }
    }
}

/// Run the structural invariant suite with the given RNG seed.
#[no_mangle]
pub extern "C" fn holodyn_verify(seed: u64) -> HolodynStatus {
    match verify_invariants(seed) {
        Ok(checks) => {
            if let Some(bad) = checks.iter().find(|chk| !chk.passed) {
                set_error(format!(
                    "{}: value {:.3e} vs {}",
                    bad.name, bad.value, bad.threshold
                ));
                HolodynStatus::CriterionFailure
            } else {
                HolodynStatus::Ok
            }
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}
