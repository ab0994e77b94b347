//! C interface for the soboquad solver: an opaque handle configured
//! through setters, a solve entry point taking a C callback, and result
//! accessors. Every function is panic-safe; failures come back as
//! status codes with a per-handle message.

use nalgebra::DVector;
use soboquad::driver::{run_solver, ModelKind, SolveResult, TerminationReason, TrustRegionConfig};
use soboquad::quadratic::SobolevWeights;
use std::ffi::{c_char, c_void, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SqStatus {
    SqOk = 0,
    /// A required pointer argument was null.
    SqNullArgument = 1,
    /// Configuration rejected (details via sq_solver_error_message).
    SqInvalidConfig = 2,
    /// The solve failed (details via sq_solver_error_message).
    SqSolveFailed = 3,
    /// Results were requested before a successful solve.
    SqNotSolved = 4,
    /// An internal panic was caught at the boundary.
    SqPanic = 5,
}

/// Why the last solve stopped (mirrors the Rust enum; -1 before a solve).
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SqTermination {
    SqNotRun = -1,
    SqRadius = 0,
    SqGradientAndRadius = 1,
    SqBudget = 2,
    SqGeometryFailure = 3,
}

/// Objective callback: receives a read-only coordinate array of length
/// `n` plus the user pointer given to sq_solver_solve, returns f(x).
/// NaN returns are treated as +infinity.
pub type SqObjective =
    Option<extern "C" fn(x: *const f64, n: usize, user_data: *mut c_void) -> f64>;

/// Opaque solver handle. Create with sq_solver_new, free with
/// sq_solver_free. Not thread-safe; use one handle per thread.
pub struct SqSolver {
    n: usize,
    cfg: TrustRegionConfig,
    result: Option<SolveResult>,
    last_error: Option<CString>,
}

fn set_error(s: &mut SqSolver, msg: String) {
    s.last_error = Some(CString::new(msg.replace('\0', "?")).unwrap());
}

/// Creates a solver for an `n`-dimensional objective with default
/// configuration. Returns null when `n` is zero.
#[no_mangle]
pub extern "C" fn sq_solver_new(n: usize) -> *mut SqSolver {
    if n == 0 {
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(SqSolver {
        n,
        cfg: TrustRegionConfig::default(),
        result: None,
        last_error: None,
    }))
}

/// Frees a handle created by sq_solver_new. Null is acceptable.
#[no_mangle]
pub extern "C" fn sq_solver_free(s: *mut SqSolver) {
    if !s.is_null() {
        drop(unsafe { Box::from_raw(s) });
    }
}

unsafe fn live<'a>(s: *mut SqSolver) -> Option<&'a mut SqSolver> {
    s.as_mut()
}

/// Selects the model update rule: 0 = weighted (default), 1 = pure
/// second-derivative change.
#[no_mangle]
pub extern "C" fn sq_solver_set_model(s: *mut SqSolver, frobenius: i32) -> SqStatus {
    let Some(s) = (unsafe { live(s) }) else {
        return SqStatus::SqNullArgument;
    };
    s.cfg.model_kind = if frobenius != 0 {
        ModelKind::Frobenius
    } else {
        ModelKind::H2
    };
    SqStatus::SqOk
}

/// Sets the interpolation-set size; 0 selects the default 2n+1.
#[no_mangle]
pub extern "C" fn sq_solver_set_m(s: *mut SqSolver, m: usize) -> SqStatus {
    let Some(s) = (unsafe { live(s) }) else {
        return SqStatus::SqNullArgument;
    };
    s.cfg.m = m;
    SqStatus::SqOk
}

/// Sets the three norm weights used by the weighted model.
#[no_mangle]
pub extern "C" fn sq_solver_set_weights(
    s: *mut SqSolver,
    c1: f64,
    c2: f64,
    c3: f64,
) -> SqStatus {
    let Some(s) = (unsafe { live(s) }) else {
        return SqStatus::SqNullArgument;
    };
    match SobolevWeights::new(c1, c2, c3) {
        Ok(w) => {
            s.cfg.weights = w;
            SqStatus::SqOk
        }
        Err(e) => {
            set_error(s, e.to_string());
            SqStatus::SqInvalidConfig
        }
    }
}

/// Sets the initial trust-region radius.
#[no_mangle]
pub extern "C" fn sq_solver_set_delta0(s: *mut SqSolver, delta0: f64) -> SqStatus {
    let Some(s) = (unsafe { live(s) }) else {
        return SqStatus::SqNullArgument;
    };
    s.cfg.delta0 = delta0;
    SqStatus::SqOk
}

/// Sets the evaluation budget.
#[no_mangle]
pub extern "C" fn sq_solver_set_budget(s: *mut SqSolver, max_nf: usize) -> SqStatus {
    let Some(s) = (unsafe { live(s) }) else {
        return SqStatus::SqNullArgument;
    };
    s.cfg.max_nf = max_nf;
    SqStatus::SqOk
}

/// Sets the resolution at which the solver stops.
#[no_mangle]
pub extern "C" fn sq_solver_set_resolution(s: *mut SqSolver, eps: f64) -> SqStatus {
    let Some(s) = (unsafe { live(s) }) else {
        return SqStatus::SqNullArgument;
    };
    s.cfg.eps_c = eps;
    SqStatus::SqOk
}

/// Runs the solver from `x0` (length n). Blocks until termination.
#[no_mangle]
pub extern "C" fn sq_solver_solve(
    s: *mut SqSolver,
    objective: SqObjective,
    user_data: *mut c_void,
    x0: *const f64,
) -> SqStatus {
    let Some(s) = (unsafe { live(s) }) else {
        return SqStatus::SqNullArgument;
    };
    let Some(f) = objective else {
        return SqStatus::SqNullArgument;
    };
    if x0.is_null() {
        return SqStatus::SqNullArgument;
    }
    let start = DVector::from_column_slice(unsafe { std::slice::from_raw_parts(x0, s.n) });
    let n = s.n;
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        run_solver(
            |x: &DVector<f64>| {
                let v = f(x.as_ptr(), n, user_data);
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            },
            &start,
            &s.cfg,
        )
    }));
    match outcome {
        Ok(Ok(result)) => {
            s.result = Some(result);
            s.last_error = None;
            SqStatus::SqOk
        }
        Ok(Err(e)) => {
            let invalid = matches!(e, soboquad::Error::InvalidConfig(_));
            set_error(s, e.to_string());
            if invalid {
                SqStatus::SqInvalidConfig
            } else {
                SqStatus::SqSolveFailed
            }
        }
        Err(_) => {
            set_error(s, "internal panic during solve".into());
            SqStatus::SqPanic
        }
    }
}

/// Copies the best point into `x_out` (length n) and its value into
/// `f_out`. Either output may be null to skip it.
#[no_mangle]
pub extern "C" fn sq_solver_best(
    s: *const SqSolver,
    x_out: *mut f64,
    f_out: *mut f64,
) -> SqStatus {
    let Some(s) = (unsafe { s.as_ref() }) else {
        return SqStatus::SqNullArgument;
    };
    let Some(r) = &s.result else {
        return SqStatus::SqNotSolved;
    };
    if !x_out.is_null() {
        unsafe {
            std::ptr::copy_nonoverlapping(r.best_point.as_ptr(), x_out, s.n);
        }
    }
    if !f_out.is_null() {
        unsafe {
            *f_out = r.best_value;
        }
    }
    SqStatus::SqOk
}

/// Number of objective evaluations consumed by the last solve
/// (0 before any solve).
#[no_mangle]
pub extern "C" fn sq_solver_evaluations(s: *const SqSolver) -> usize {
    unsafe { s.as_ref() }
        .and_then(|s| s.result.as_ref())
        .map_or(0, |r| r.nf)
}

/// Why the last solve stopped.
#[no_mangle]
pub extern "C" fn sq_solver_termination(s: *const SqSolver) -> SqTermination {
    let reason = unsafe { s.as_ref() }.and_then(|s| s.result.as_ref().map(|r| r.termination_reason));
    match reason {
        None => SqTermination::SqNotRun,
        Some(TerminationReason::Radius) => SqTermination::SqRadius,
        Some(TerminationReason::GradientAndRadius) => SqTermination::SqGradientAndRadius,
        Some(TerminationReason::Budget) => SqTermination::SqBudget,
        Some(TerminationReason::GeometryFailure) => SqTermination::SqGeometryFailure,
    }
}

/// Length of the running-best history recorded by the last solve.
#[no_mangle]
pub extern "C" fn sq_solver_history_len(s: *const SqSolver) -> usize {
    unsafe { s.as_ref() }
        .and_then(|s| s.result.as_ref())
        .map_or(0, |r| r.history.len())
}

/// Copies up to `cap` history entries into `out`; returns the number
/// copied.
#[no_mangle]
pub extern "C" fn sq_solver_history(s: *const SqSolver, out: *mut f64, cap: usize) -> usize {
    let Some(s) = (unsafe { s.as_ref() }) else {
        return 0;
    };
    let Some(r) = &s.result else {
        return 0;
    };
    if out.is_null() {
        return 0;
    }
    let k = cap.min(r.history.len());
    unsafe {
        std::ptr::copy_nonoverlapping(r.history.as_ptr(), out, k);
    }
    k
}

/// Message for the most recent failure on this handle, or null when the
/// last call succeeded. The pointer stays valid until the next call on
/// the same handle.
#[no_mangle]
pub extern "C" fn sq_solver_error_message(s: *const SqSolver) -> *const c_char {
    unsafe { s.as_ref() }
        .and_then(|s| s.last_error.as_ref())
        .map_or(std::ptr::null(), |c| c.as_ptr())
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn sq_status_message(status: SqStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        SqStatus::SqOk => b"ok\0",
        SqStatus::SqNullArgument => b"required pointer argument was null\0",
        SqStatus::SqInvalidConfig => b"invalid configuration\0",
        SqStatus::SqSolveFailed => b"solve failed\0",
        SqStatus::SqNotSolved => b"no solve has completed on this handle\0",
        SqStatus::SqPanic => b"internal panic caught at the boundary\0",
    };
    msg.as_ptr().cast()
}

#[cfg(test)]
mod tests {
    use super::*;

    extern "C" fn sphere(x: *const f64, n: usize, _user: *mut c_void) -> f64 {
        let s = unsafe { std::slice::from_raw_parts(x, n) };
        s.iter().map(|v| v * v).sum()
    }

    extern "C" fn counting_sphere(x: *const f64, n: usize, user: *mut c_void) -> f64 {
        let count = unsafe { &mut *(user as *mut usize) };
        *count += 1;
        sphere(x, n, std::ptr::null_mut())
    }

    extern "C" fn panicking(_x: *const f64, _n: usize, _user: *mut c_void) -> f64 {
        panic!("boom");
    }

    #[test]
    fn solve_through_the_c_abi() {
        let s = sq_solver_new(3);
        assert!(!s.is_null());
        let x0 = [1.0, -2.0, 0.5];
        let mut count = 0usize;
        let st = sq_solver_solve(
            s,
            Some(counting_sphere),
            &mut count as *mut usize as *mut c_void,
            x0.as_ptr(),
        );
        assert_eq!(st, SqStatus::SqOk);
        let mut best = [0.0; 3];
        let mut f = f64::NAN;
        assert_eq!(sq_solver_best(s, best.as_mut_ptr(), &mut f), SqStatus::SqOk);
        assert!(f < 1e-12, "f = {f}");
        assert!(best.iter().all(|v| v.abs() < 1e-5));
        assert_eq!(sq_solver_evaluations(s), count);
        assert!(count > 0);
        assert_ne!(sq_solver_termination(s), SqTermination::SqNotRun);

        let len = sq_solver_history_len(s);
        assert_eq!(len, count);
        let mut hist = vec![0.0; len];
        assert_eq!(sq_solver_history(s, hist.as_mut_ptr(), len), len);
        assert!(hist.windows(2).all(|w| w[1] <= w[0]));
        sq_solver_free(s);
    }

    #[test]
    fn null_and_ordering_errors_are_reported() {
        assert!(sq_solver_new(0).is_null());
        assert_eq!(
            sq_solver_set_m(std::ptr::null_mut(), 5),
            SqStatus::SqNullArgument
        );

        let s = sq_solver_new(2);
        assert_eq!(
            sq_solver_best(s, std::ptr::null_mut(), std::ptr::null_mut()),
            SqStatus::SqNotSolved
        );
        let x0 = [0.1, 0.2];
        assert_eq!(
            sq_solver_solve(s, None, std::ptr::null_mut(), x0.as_ptr()),
            SqStatus::SqNullArgument
        );
        assert_eq!(
            sq_solver_solve(s, Some(sphere), std::ptr::null_mut(), std::ptr::null()),
            SqStatus::SqNullArgument
        );
        sq_solver_free(s);
        sq_solver_free(std::ptr::null_mut());
    }

    #[test]
    fn invalid_config_sets_message() {
        let s = sq_solver_new(2);
        assert_eq!(sq_solver_set_delta0(s, -1.0), SqStatus::SqOk);
        let x0 = [0.1, 0.2];
        let st = sq_solver_solve(s, Some(sphere), std::ptr::null_mut(), x0.as_ptr());
        assert_eq!(st, SqStatus::SqInvalidConfig);
        let msg = sq_solver_error_message(s);
        assert!(!msg.is_null());
        let text = unsafe { std::ffi::CStr::from_ptr(msg) }.to_str().unwrap();
        assert!(text.contains("delta0"), "message was: {text}");
        sq_solver_free(s);
    }

    #[test]
    fn callback_panic_is_contained() {
        let s = sq_solver_new(2);
        let x0 = [0.1, 0.2];
        let st = sq_solver_solve(s, Some(panicking), std::ptr::null_mut(), x0.as_ptr());
        assert_eq!(st, SqStatus::SqPanic);
        assert_eq!(
            sq_solver_best(s, std::ptr::null_mut(), std::ptr::null_mut()),
            SqStatus::SqNotSolved
        );
        sq_solver_free(s);
    }

    #[test]
    fn weights_are_validated_eagerly() {
        let s = sq_solver_new(2);
        assert_eq!(sq_solver_set_weights(s, -1.0, 0.0, 0.0), SqStatus::SqInvalidConfig);
        assert!(!sq_solver_error_message(s).is_null());
        assert_eq!(sq_solver_set_weights(s, 0.5, 0.25, 0.25), SqStatus::SqOk);
        sq_solver_free(s);
    }

    #[test]
    fn status_messages_are_static_c_strings() {
        for st in [
            SqStatus::SqOk,
            SqStatus::SqNullArgument,
            SqStatus::SqInvalidConfig,
            SqStatus::SqSolveFailed,
            SqStatus::SqNotSolved,
            SqStatus::SqPanic,
        ] {
            let p = sq_status_message(st);
            assert!(!p.is_null());
            let text = unsafe { std::ffi::CStr::from_ptr(p) }.to_str().unwrap();
            assert!(!text.is_empty());
        }
    }
}
