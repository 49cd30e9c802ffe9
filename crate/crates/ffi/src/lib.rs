//! C ABI over `dcafolio`.
//!
//! Instances and solutions are opaque heap handles released with their
//! `*_free` function. Every fallible call returns a status code; on failure
//! the thread-local message from [`df_last_error_message`] says why. Panics
//! never cross the boundary, they surface as [`DF_PANIC`].
//!
//! Asset indices are 0-based here, unlike the command-line output.

use dcafolio::data::{generate_instance, GeneratorConfig};
use dcafolio::dca::{run_dca, DcaError, Escalation, Solution, SolverConfig, Termination};
use dcafolio::exact::{solve_exact_bb, BnbLimits, ExactError, ExactStatus};
use dcafolio::model::{validate_instance, Instance, InstanceParts};
use dcafolio::qp::QpSettings;
use nalgebra::DMatrix;
use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Duration;

// Status codes equal the command-line exit codes, plus one for panics.
pub const DF_OK: c_int = 0;
pub const DF_USAGE: c_int = 1;
pub const DF_DATA: c_int = 2;
pub const DF_INFEASIBLE: c_int = 3;
pub const DF_LIMIT: c_int = 4;
pub const DF_PANIC: c_int = 5;

/// Opaque validated instance.
pub struct DfInstance {
    inner: Instance,
}

/// Opaque certified solution.
pub struct DfSolution {
    inner: Solution,
    iterations: usize,
    /// Exact solves only: `upper - lower` at termination.
    gap: f64,
}

/// DCA parameters. Fill with [`df_dca_options_default`] before changing
/// fields.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DfDcaOptions {
    pub theta: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    /// Nonzero enables θ escalation while `z` is fractional.
    pub escalate: c_int,
    pub qp_tol: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, converting an `Err` or a panic into a status code with a
/// recorded message.
fn guard(f: impl FnOnce() -> Result<c_int, (c_int, String)>) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(code)) => code,
        Ok(Err((code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            DF_PANIC
        }
    }
}

fn dca_code(e: &DcaError) -> c_int {
    match e {
        DcaError::Config(_) => DF_USAGE,
        DcaError::Infeasible(_) => DF_INFEASIBLE,
        DcaError::QpStalled { .. } => DF_LIMIT,
        _ => DF_DATA,
    }
}

fn usage(msg: &str) -> (c_int, String) {
    (DF_USAGE, msg.to_owned())
}

/// Validates and boxes `inst` into `*out`.
fn emit_instance(inst: Instance, out: *mut *mut DfInstance) -> Result<c_int, (c_int, String)> {
    let report = validate_instance(&inst);
    if !report.is_valid() {
        return Err((DF_DATA, format!("invalid instance: {report}")));
    }
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(DfInstance { inner: inst })) };
    Ok(DF_OK)
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn df_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn df_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Reads an instance in the key/value text format.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn df_instance_load(path: *const c_char, out: *mut *mut DfInstance) -> c_int {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(usage("null argument"));
        }
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| usage("path is not UTF-8"))?;
        let inst = Instance::read_from_path(path).map_err(|e| (DF_DATA, e.to_string()))?;
        emit_instance(inst, out)
    })
}

/// Builds an instance from arrays of length `n` (`covariance` is `n × n`
/// row-major). Holdings `P` and benchmark `x̄` are separate arrays.
///
/// # Safety
/// Every array pointer must reference at least the stated number of doubles
/// and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn df_instance_new(
    n: usize,
    card: usize,
    required_return: f64,
    returns: *const f64,
    covariance: *const f64,
    lower: *const f64,
    upper: *const f64,
    buy_cost: *const f64,
    sell_cost: *const f64,
    holdings: *const f64,
    benchmark: *const f64,
    out: *mut *mut DfInstance,
) -> c_int {
    guard(|| {
        let arrays = [returns, covariance, lower, upper, buy_cost, sell_cost, holdings, benchmark];
        if out.is_null() || arrays.iter().any(|p| p.is_null()) {
            return Err(usage("null argument"));
        }
        if n == 0 {
            return Err((DF_DATA, "instance has no assets".to_owned()));
        }
        let cells = n.checked_mul(n).ok_or_else(|| usage("n too large"))?;
        let vec = |p: *const f64, len: usize| unsafe { std::slice::from_raw_parts(p, len) }.to_vec();
        let parts = InstanceParts {
            returns: vec(returns, n),
            covariance: DMatrix::from_row_slice(n, n, &vec(covariance, cells)),
            required_return,
            card,
            lower: vec(lower, n),
            upper: vec(upper, n),
            buy_cost: vec(buy_cost, n),
            sell_cost: vec(sell_cost, n),
            holdings: vec(holdings, n),
            benchmark: vec(benchmark, n),
        };
        let inst = Instance::from_parts(parts).map_err(|e| (DF_DATA, e.to_string()))?;
        emit_instance(inst, out)
    })
}

/// Seeded random instance; `card = 0` picks the default `min(n, 5)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn df_instance_generate(n: usize, seed: u64, card: usize, out: *mut *mut DfInstance) -> c_int {
    guard(|| {
        if out.is_null() {
            return Err(usage("null argument"));
        }
        let cfg = GeneratorConfig {
            card: (card > 0).then_some(card),
            ..GeneratorConfig::default()
        };
        let inst = generate_instance(n, seed, &cfg).map_err(|e| (DF_DATA, e.to_string()))?;
        emit_instance(inst, out)
    })
}

/// Number of assets; 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_instance_n(inst: *const DfInstance) -> usize {
    unsafe { inst.as_ref() }.map_or(0, |i| i.inner.n)
}

/// Cardinality; 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_instance_card(inst: *const DfInstance) -> usize {
    unsafe { inst.as_ref() }.map_or(0, |i| i.inner.card)
}

/// Changes the cardinality; the handle is untouched on failure.
///
/// # Safety
/// `inst` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_instance_set_card(inst: *mut DfInstance, card: usize) -> c_int {
    guard(|| {
        let inst = unsafe { inst.as_mut() }.ok_or_else(|| usage("null argument"))?;
        let next = inst.inner.with_card(card);
        let report = validate_instance(&next);
        if !report.is_valid() {
            return Err((DF_DATA, format!("invalid instance: {report}")));
        }
        inst.inner = next;
        Ok(DF_OK)
    })
}

/// # Safety
/// `inst` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn df_instance_free(inst: *mut DfInstance) {
    if !inst.is_null() {
        drop(unsafe { Box::from_raw(inst) });
    }
}

/// Defaults: θ = 2, ε = 1e-6, 200 iterations, escalation on, QP tolerance 1e-8.
#[no_mangle]
pub extern "C" fn df_dca_options_default() -> DfDcaOptions {
    let d = SolverConfig::default();
    DfDcaOptions {
        theta: d.theta,
        epsilon: d.epsilon,
        max_iter: d.max_iter,
        escalate: c_int::from(d.escalation.enabled),
        qp_tol: d.qp.tol,
    }
}

/// Runs DCA. `options` may be null for defaults. On [`DF_OK`] `*out` holds a
/// solution handle; otherwise it is left untouched.
///
/// # Safety
/// `inst` must be a live handle, `options` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn df_solve_dca(
    inst: *const DfInstance,
    options: *const DfDcaOptions,
    out: *mut *mut DfSolution,
) -> c_int {
    guard(|| {
        let inst = unsafe { inst.as_ref() }.ok_or_else(|| usage("null instance"))?;
        if out.is_null() {
            return Err(usage("null output pointer"));
        }
        let opts = unsafe { options.as_ref() }.copied().unwrap_or_else(|| df_dca_options_default());
        let cfg = SolverConfig {
            theta: opts.theta,
            epsilon: opts.epsilon,
            max_iter: opts.max_iter,
            escalation: Escalation {
                enabled: opts.escalate != 0,
                ..Escalation::default()
            },
            qp: QpSettings {
                tol: opts.qp_tol,
                ..QpSettings::default()
            },
            ..SolverConfig::default()
        };
        let res = run_dca(&inst.inner, &cfg).map_err(|e| (dca_code(&e), e.to_string()))?;
        let Some(sol) = res.solution else {
            let code = match res.termination {
                Termination::SubproblemInfeasible => DF_INFEASIBLE,
                _ => DF_LIMIT,
            };
            return Err((code, res.failure.unwrap_or_else(|| "no solution".to_owned())));
        };
        let handle = DfSolution {
            inner: sol,
            iterations: res.iterations,
            gap: f64::NAN,
        };
        unsafe { *out = Box::into_raw(Box::new(handle)) };
        Ok(DF_OK)
    })
}

/// Exact branch-and-bound. Returns [`DF_OK`] when optimality is proved and
/// [`DF_LIMIT`] when a limit stopped the search; in both cases `*out` holds
/// the best solution found, if any (null otherwise).
///
/// # Safety
/// `inst` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn df_solve_exact(
    inst: *const DfInstance,
    time_limit_seconds: f64,
    max_nodes: usize,
    out: *mut *mut DfSolution,
) -> c_int {
    guard(|| {
        let inst = unsafe { inst.as_ref() }.ok_or_else(|| usage("null instance"))?;
        if out.is_null() {
            return Err(usage("null output pointer"));
        }
        let time_limit =
            Duration::try_from_secs_f64(time_limit_seconds).map_err(|_| usage("time limit must be a non-negative number"))?;
        let limits = BnbLimits {
            max_nodes,
            time_limit,
            ..BnbLimits::default()
        };
        let res = solve_exact_bb(&inst.inner, &limits, &QpSettings::default()).map_err(|e| match e {
            ExactError::Solve(d) => (dca_code(&d), d.to_string()),
            ExactError::Limits(_) => (DF_USAGE, e.to_string()),
            e => (DF_DATA, e.to_string()),
        })?;
        let code = match res.status {
            ExactStatus::ProvedOptimal => DF_OK,
            ExactStatus::Infeasible => return Err((DF_INFEASIBLE, "no feasible support".to_owned())),
            _ => {
                set_error(&format!("search stopped: {}", res.status));
                DF_LIMIT
            }
        };
        unsafe {
            *out = match res.solution {
                Some(sol) => Box::into_raw(Box::new(DfSolution {
                    inner: sol,
                    iterations: res.nodes,
                    gap: res.upper_bound - res.lower_bound,
                })),
                None => std::ptr::null_mut(),
            };
        }
        Ok(code)
    })
}

/// Tracking risk `(x - x̄)ᵗQ(x - x̄)`; NaN for a null handle.
///
/// # Safety
/// `sol` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_solution_objective(sol: *const DfSolution) -> f64 {
    unsafe { sol.as_ref() }.map_or(f64::NAN, |s| s.inner.objective)
}

/// DCA iterations, or branch-and-bound nodes for exact solutions.
///
/// # Safety
/// `sol` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_solution_iterations(sol: *const DfSolution) -> usize {
    unsafe { sol.as_ref() }.map_or(0, |s| s.iterations)
}

/// Final `upper - lower` of an exact solve; NaN for DCA solutions.
///
/// # Safety
/// `sol` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_solution_gap(sol: *const DfSolution) -> f64 {
    unsafe { sol.as_ref() }.map_or(f64::NAN, |s| s.gap)
}

/// Number of assets in the support.
///
/// # Safety
/// `sol` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_solution_support_len(sol: *const DfSolution) -> usize {
    unsafe { sol.as_ref() }.map_or(0, |s| s.inner.support.len())
}

/// Copies up to `cap` ascending 0-based support indices into `buf` and
/// returns the full support length.
///
/// # Safety
/// `sol` must be null or a live handle; `buf` must hold `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn df_solution_support(sol: *const DfSolution, buf: *mut usize, cap: usize) -> usize {
    let Some(s) = (unsafe { sol.as_ref() }) else { return 0 };
    copy_out(&s.inner.support, buf, cap)
}

/// Copies up to `cap` weights `x_j` into `buf` and returns `n`.
///
/// # Safety
/// `sol` must be null or a live handle; `buf` must hold `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn df_solution_weights(sol: *const DfSolution, buf: *mut f64, cap: usize) -> usize {
    let Some(s) = (unsafe { sol.as_ref() }) else { return 0 };
    copy_out(&s.inner.x, buf, cap)
}

fn copy_out<T: Copy>(src: &[T], buf: *mut T, cap: usize) -> usize {
    if !buf.is_null() {
        let k = cap.min(src.len());
        // SAFETY: the caller guarantees `buf` holds `cap >= k` entries.
        unsafe { std::ptr::copy_nonoverlapping(src.as_ptr(), buf, k) };
    }
    src.len()
}

/// # Safety
/// `sol` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn df_solution_free(sol: *mut DfSolution) {
    if !sol.is_null() {
        drop(unsafe { Box::from_raw(sol) });
    }
}
