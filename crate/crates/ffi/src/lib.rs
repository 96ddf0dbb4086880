//! C ABI for the backpar toolkit.
//!
//! A problem is created from the same JSON document the CLI consumes and
//! held behind an opaque handle. Every fallible call returns a
//! [`BackparStatus`]; on failure a human-readable message is stored per
//! thread and can be fetched with [`backpar_last_error_message`]. Field
//! buffers are plain `double` arrays with one entry per grid node.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use backpar::carleman;
use backpar::config::{AlphaChoice, RunConfig};
use backpar::recon::{choose_alpha, reconstruct_tikhonov};
use backpar::{forward_solve, sample, semilinear_forward_solve, Error, GridFunction};

/// Outcome of a C-API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackparStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration or an argument failed validation.
    InvalidArgument = 3,
    /// The numerics failed (singular pivot, divergence, non-finite values).
    NumericalFailure = 4,
    /// A structural hypothesis of the stability theory is violated.
    HypothesisFailure = 5,
    /// An output buffer does not match the grid size.
    BufferTooSmall = 6,
}

/// Opaque problem handle: the validated configuration of one run.
pub struct BackparProblem {
    config: RunConfig,
}

/// Reconstruction statistics mirrored to C.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BackparReconStats {
    pub cg_iterations: usize,
    pub final_residual: f64,
    pub alpha_reg: f64,
    pub data_misfit: f64,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> BackparStatus {
    match err.exit_code() {
        2 => BackparStatus::NumericalFailure,
        3 => BackparStatus::HypothesisFailure,
        _ => BackparStatus::InvalidArgument,
    }
}

fn fail(err: &Error) -> BackparStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn backpar_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Version of the underlying crate as a static string.
#[no_mangle]
pub extern "C" fn backpar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds a problem handle from a JSON run configuration (the same format
/// the CLI accepts). On success writes the handle to `out`; free it with
/// [`backpar_problem_free`].
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` must be a valid
/// pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn backpar_problem_from_json(
    json: *const c_char,
    out: *mut *mut BackparProblem,
) -> BackparStatus {
    if json.is_null() || out.is_null() {
        set_error("null pointer argument");
        return BackparStatus::NullPointer;
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("configuration string is not valid UTF-8");
            return BackparStatus::InvalidUtf8;
        }
    };
    match RunConfig::from_json_str(text) {
        Ok(config) => {
            *out = Box::into_raw(Box::new(BackparProblem { config }));
            BackparStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Releases a handle created by [`backpar_problem_from_json`]. A null
/// pointer is ignored.
///
/// # Safety
/// `problem` must be a handle returned by this library that has not been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn backpar_problem_free(problem: *mut BackparProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of grid nodes; field buffers must have exactly this length.
///
/// # Safety
/// `problem` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn backpar_problem_node_count(problem: *const BackparProblem) -> usize {
    if problem.is_null() {
        return 0;
    }
    (*problem).config.problem.grid.n_nodes()
}

unsafe fn copy_out(values: &[f64], out: *mut f64, out_len: usize) -> BackparStatus {
    if out.is_null() {
        set_error("null output buffer");
        return BackparStatus::NullPointer;
    }
    if out_len != values.len() {
        set_error("output buffer length does not match the node count");
        return BackparStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    BackparStatus::Ok
}

unsafe fn field_from(
    problem: &BackparProblem,
    data: *const f64,
    len: usize,
) -> Result<GridFunction, BackparStatus> {
    if data.is_null() {
        set_error("null input buffer");
        return Err(BackparStatus::NullPointer);
    }
    let grid = &problem.config.problem.grid;
    if len != grid.n_nodes() {
        set_error("input buffer length does not match the node count");
        return Err(BackparStatus::BufferTooSmall);
    }
    let values = std::slice::from_raw_parts(data, len).to_vec();
    GridFunction::new(grid.clone(), values).map_err(|e| fail(&e))
}

/// Copies the grid node coordinates into `out`.
///
/// # Safety
/// `problem` must be a live handle; `out` must point to `out_len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn backpar_grid_nodes(
    problem: *const BackparProblem,
    out: *mut f64,
    out_len: usize,
) -> BackparStatus {
    if problem.is_null() {
        set_error("null problem handle");
        return BackparStatus::NullPointer;
    }
    copy_out((*problem).config.problem.grid.nodes(), out, out_len)
}

/// Marches the configured problem from the supplied initial state over
/// `[0, T]` and writes the terminal state to `out_terminal`. Semilinear
/// problems take the Newton path automatically.
///
/// # Safety
/// `problem` must be a live handle; `u0` must point to `u0_len` readable
/// doubles and `out_terminal` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn backpar_forward_solve(
    problem: *const BackparProblem,
    u0: *const f64,
    u0_len: usize,
    out_terminal: *mut f64,
    out_len: usize,
) -> BackparStatus {
    if problem.is_null() {
        set_error("null problem handle");
        return BackparStatus::NullPointer;
    }
    let handle = &*problem;
    let initial = match field_from(handle, u0, u0_len) {
        Ok(f) => f,
        Err(status) => return status,
    };
    let cfg = &handle.config;
    let result = if cfg.problem.is_semilinear() {
        semilinear_forward_solve(&cfg.problem, &initial, 0.0, cfg.problem.horizon, cfg.dt)
    } else {
        forward_solve(
            &cfg.problem,
            &initial,
            0.0,
            cfg.problem.horizon,
            cfg.dt,
            cfg.scheme,
        )
    };
    match result {
        Ok(sol) => copy_out(sol.series.last().values(), out_terminal, out_len),
        Err(e) => fail(&e),
    }
}

/// Reconstructs the state at the configured `t0` from terminal data and
/// writes the estimate to `out_estimate`; `out_stats` (optional) receives
/// the iteration statistics. The regularization weight comes from the
/// configuration (`alpha_reg`, with `"auto"` meaning the a priori floor).
///
/// # Safety
/// `problem` must be a live handle; `data` must point to `data_len`
/// readable doubles, `out_estimate` to `out_len` writable doubles, and
/// `out_stats` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn backpar_reconstruct(
    problem: *const BackparProblem,
    data: *const f64,
    data_len: usize,
    out_estimate: *mut f64,
    out_len: usize,
    out_stats: *mut BackparReconStats,
) -> BackparStatus {
    if problem.is_null() {
        set_error("null problem handle");
        return BackparStatus::NullPointer;
    }
    let handle = &*problem;
    let data = match field_from(handle, data, data_len) {
        Ok(f) => f,
        Err(status) => return status,
    };
    let cfg = &handle.config;
    let alpha = match cfg.alpha_reg {
        AlphaChoice::Fixed(v) => v,
        AlphaChoice::Auto => choose_alpha(0.0, data.l2_norm()),
    };
    match reconstruct_tikhonov(
        &cfg.problem,
        &data,
        cfg.t0,
        cfg.dt,
        alpha,
        cfg.cg_tol,
        cfg.max_iter,
        cfg.scheme,
    ) {
        Ok(result) => {
            let status = copy_out(result.estimate.values(), out_estimate, out_len);
            if status != BackparStatus::Ok {
                return status;
            }
            if !out_stats.is_null() {
                *out_stats = BackparReconStats {
                    cg_iterations: result.cg_iterations,
                    final_residual: result.final_residual,
                    alpha_reg: result.alpha_reg,
                    data_misfit: result.data_misfit,
                    converged: result.converged,
                };
            }
            BackparStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Runs the structural-hypothesis checks and returns the JSON report as a
/// newly allocated string in `out_json`; free it with
/// [`backpar_string_free`]. The status is `HypothesisFailure` when the
/// checks required for this problem fail (the report is still written).
///
/// # Safety
/// `problem` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn backpar_check_assumptions(
    problem: *const BackparProblem,
    out_json: *mut *mut c_char,
) -> BackparStatus {
    if problem.is_null() || out_json.is_null() {
        set_error("null pointer argument");
        return BackparStatus::NullPointer;
    }
    let cfg = &(*problem).config;
    let report = match backpar::assumptions::verify_assumptions(&cfg.problem, &cfg.sampling) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let text = match serde_json::to_string_pretty(&report) {
        Ok(t) => t,
        Err(e) => {
            set_error(&e.to_string());
            return BackparStatus::InvalidArgument;
        }
    };
    match CString::new(text) {
        Ok(s) => {
            *out_json = s.into_raw();
            if report.required_ok(cfg.problem.bc) {
                BackparStatus::Ok
            } else {
                set_error("one or more structural hypotheses fail; see the report");
                BackparStatus::HypothesisFailure
            }
        }
        Err(_) => {
            set_error("report contained an interior NUL byte");
            BackparStatus::InvalidArgument
        }
    }
}

/// Frees a string returned by this library. A null pointer is ignored.
///
/// # Safety
/// `s` must have been returned by this library and not freed already.
#[no_mangle]
pub unsafe extern "C" fn backpar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Samples the configured initial-state expression onto the grid; useful
/// for driving [`backpar_forward_solve`] from the bound language.
///
/// # Safety
/// `problem` must be a live handle; `out` must point to `out_len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn backpar_initial_state(
    problem: *const BackparProblem,
    out: *mut f64,
    out_len: usize,
) -> BackparStatus {
    if problem.is_null() {
        set_error("null problem handle");
        return BackparStatus::NullPointer;
    }
    let cfg = &(*problem).config;
    match sample(&cfg.u0, &cfg.problem.grid, 0.0) {
        Ok(f) => copy_out(f.values(), out, out_len),
        Err(e) => fail(&e),
    }
}

/// Holder exponent `theta(t0, T, lambda)`; writes the value to `out`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn backpar_theta_exponent(
    t0: f64,
    horizon: f64,
    lambda: f64,
    out: *mut f64,
) -> BackparStatus {
    if out.is_null() {
        set_error("null output pointer");
        return BackparStatus::NullPointer;
    }
    match carleman::theta_exponent(t0, horizon, lambda) {
        Ok(v) => {
            *out = v;
            BackparStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Equalizing choice of the large parameter `s` (0 when `m <= d0`).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn backpar_optimal_s(
    m: f64,
    d0: f64,
    t0: f64,
    horizon: f64,
    lambda: f64,
    out: *mut f64,
) -> BackparStatus {
    if out.is_null() {
        set_error("null output pointer");
        return BackparStatus::NullPointer;
    }
    match carleman::optimal_s(m, d0, t0, horizon, lambda) {
        Ok(v) => {
            *out = v;
            BackparStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Two-term Holder bound `C (M^(1-theta) D0^theta + D0)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn backpar_holder_bound(
    d0: f64,
    m: f64,
    t0: f64,
    horizon: f64,
    lambda: f64,
    constant: f64,
    out: *mut f64,
) -> BackparStatus {
    if out.is_null() {
        set_error("null output pointer");
        return BackparStatus::NullPointer;
    }
    match carleman::holder_bound(d0, m, t0, horizon, lambda, constant) {
        Ok(v) => {
            *out = v;
            BackparStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Logarithmic bound `C (log 1/D)^(-alpha)`, requiring `0 < D < 1`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn backpar_log_rate_bound(
    d: f64,
    alpha: f64,
    constant: f64,
    out: *mut f64,
) -> BackparStatus {
    if out.is_null() {
        set_error("null output pointer");
        return BackparStatus::NullPointer;
    }
    match carleman::log_rate_bound(d, alpha, constant) {
        Ok(v) => {
            *out = v;
            BackparStatus::Ok
        }
        Err(e) => fail(&e),
    }
}
