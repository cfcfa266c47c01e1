//! C ABI over `fracfb`.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `_free` function. Every entry point returns a [`FracfbStatus`];
//! on failure [`fracfb_last_error`] yields a message for the calling thread.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fracfb::config::{position_with_constant, strategy_by_name};
use fracfb::envelope::{dderiv_value, hjb_residual, value_bruteforce, CandidateFamily};
use fracfb::example::value_closed_form_example;
use fracfb::feedback::{run_feedback, Partition};
use fracfb::fractional::{Position, PositionJson};
use fracfb::problem::{GFunction, Problem};
use fracfb::special::{gamma, mittag_leffler};
use fracfb::Error;
use nalgebra::DVector;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FracfbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SolverFailure = 3,
    Unsupported = 4,
    Panic = 5,
}

/// A built-in problem.
pub struct FracfbProblem {
    inner: Problem,
}

/// A position `(t, w)`.
pub struct FracfbPosition {
    inner: Position,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn status_of(e: &Error) -> FracfbStatus {
    if e.is_solver_failure() {
        FracfbStatus::SolverFailure
    } else if matches!(e, Error::Unsupported(_) | Error::EnumerationGuard(_)) {
        FracfbStatus::Unsupported
    } else {
        FracfbStatus::InvalidArgument
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> FracfbStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            FracfbStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            FracfbStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {message}"));
            FracfbStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: the caller guarantees `p` is null or points to a live value
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller guarantees `p` is null or writable
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: non-null and NUL-terminated by contract
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Error::InvalidParameter(format!("{what} is not UTF-8")).into())
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: `p` points to `len` readable doubles by contract
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn matching(problem: &Problem, p: &Position) -> Result<(), Failure> {
    if *p.config() != problem.config {
        return Err(
            Error::InvalidParameter("position was built for a different problem".into()).into(),
        );
    }
    Ok(())
}

/// Builds a built-in problem (`"example-g"`, `"damped"`, `"oscillator"`).
/// `g` selects the example multiplier (`"one"`, `"cos"`, `"poly"`) and may be
/// null.
///
/// # Safety
/// `name` and non-null `g` must be NUL-terminated strings; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fracfb_problem_new(
    name: *const c_char,
    alpha: f64,
    horizon: f64,
    g: *const c_char,
    out_problem: *mut *mut FracfbProblem,
) -> FracfbStatus {
    guard(|| {
        let slot = unsafe { out(out_problem, "out_problem") }?;
        *slot = ptr::null_mut();
        let name = unsafe { text(name, "name") }?;
        let g = if g.is_null() {
            None
        } else {
            Some(unsafe { text(g, "g") }?.parse::<GFunction>()?)
        };
        let inner = Problem::named(name, alpha, horizon, g, None)?;
        *slot = Box::into_raw(Box::new(FracfbProblem { inner }));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from [`fracfb_problem_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fracfb_problem_free(problem: *mut FracfbProblem) {
    if !problem.is_null() {
        // SAFETY: allocated by Box::into_raw in fracfb_problem_new
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// State dimension of the problem.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fracfb_problem_dim(
    problem: *const FracfbProblem,
    out_dim: *mut usize,
) -> FracfbStatus {
    guard(|| {
        let problem = unsafe { deref(problem, "problem") }?;
        *unsafe { out(out_dim, "out_dim") }? = problem.inner.config.dim;
        Ok(())
    })
}

/// Position at time `t` whose history starts at `w0` and has the constant
/// Caputo derivative `caputo` (zero if null) on `cells` equal cells.
///
/// # Safety
/// `w0` and non-null `caputo` must hold `dim` doubles; `out_position` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fracfb_position_new(
    problem: *const FracfbProblem,
    t: f64,
    w0: *const f64,
    caputo: *const f64,
    dim: usize,
    cells: usize,
    out_position: *mut *mut FracfbPosition,
) -> FracfbStatus {
    guard(|| {
        let slot = unsafe { out(out_position, "out_position") }?;
        *slot = ptr::null_mut();
        let problem = unsafe { deref(problem, "problem") }?;
        let config = problem.inner.config;
        if dim != config.dim {
            return Err(Error::DimensionMismatch {
                what: "w0",
                expected: config.dim,
                got: dim,
            }
            .into());
        }
        let w0 = DVector::from_column_slice(unsafe { slice(w0, dim, "w0") }?);
        let c = if caputo.is_null() {
            None
        } else {
            Some(unsafe { slice(caputo, dim, "caputo") }?.to_vec())
        };
        let inner = position_with_constant(config, t, w0, c, cells)?;
        *slot = Box::into_raw(Box::new(FracfbPosition { inner }));
        Ok(())
    })
}

/// Position from its JSON form `{alpha, T, t, w0, step|breaks, caputo}`.
///
/// # Safety
/// `json` must be NUL-terminated; `out_position` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fracfb_position_from_json(
    json: *const c_char,
    out_position: *mut *mut FracfbPosition,
) -> FracfbStatus {
    guard(|| {
        let slot = unsafe { out(out_position, "out_position") }?;
        *slot = ptr::null_mut();
        let parsed: PositionJson =
            serde_json::from_str(unsafe { text(json, "json") }?).map_err(Error::from)?;
        let inner = Position::from_json(&parsed)?;
        *slot = Box::into_raw(Box::new(FracfbPosition { inner }));
        Ok(())
    })
}

/// # Safety
/// `position` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fracfb_position_free(position: *mut FracfbPosition) {
    if !position.is_null() {
        // SAFETY: allocated by Box::into_raw in a constructor above
        drop(unsafe { Box::from_raw(position) });
    }
}

/// Current state `w(t)` written to `out_state` (`dim` doubles).
///
/// # Safety
/// `out_state` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn fracfb_position_state(
    position: *const FracfbPosition,
    out_state: *mut f64,
    dim: usize,
) -> FracfbStatus {
    guard(|| {
        let p = &unsafe { deref(position, "position") }?.inner;
        if dim != p.dim() {
            return Err(Error::DimensionMismatch {
                what: "out_state",
                expected: p.dim(),
                got: dim,
            }
            .into());
        }
        if out_state.is_null() {
            return Err(Failure::Null("out_state"));
        }
        // SAFETY: checked non-null; `dim` doubles by contract
        let dst = unsafe { std::slice::from_raw_parts_mut(out_state, dim) };
        dst.copy_from_slice(p.current().as_slice());
        Ok(())
    })
}

/// Closed-form value of the scalar example.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fracfb_value_closed_form(
    problem: *const FracfbProblem,
    position: *const FracfbPosition,
    out_value: *mut f64,
) -> FracfbStatus {
    guard(|| {
        let problem = &unsafe { deref(problem, "problem") }?.inner;
        let p = &unsafe { deref(position, "position") }?.inner;
        matching(problem, p)?;
        let g = problem
            .g
            .ok_or_else(|| Error::Unsupported(format!("no closed form for `{}`", problem.name)))?;
        *unsafe { out(out_value, "out_value") }? = value_closed_form_example(p, g)?;
        Ok(())
    })
}

/// Minimum cost over piecewise-constant controls with `pieces` pieces.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fracfb_value_bruteforce(
    problem: *const FracfbProblem,
    position: *const FracfbPosition,
    pieces: usize,
    steps: usize,
    out_value: *mut f64,
) -> FracfbStatus {
    guard(|| {
        let problem = &unsafe { deref(problem, "problem") }?.inner;
        let p = &unsafe { deref(position, "position") }?.inner;
        matching(problem, p)?;
        *unsafe { out(out_value, "out_value") }? =
            value_bruteforce(p, problem, pieces, steps)?.value;
        Ok(())
    })
}

/// Envelope directional derivative of order α along `f` over the constant
/// controls of the grid, with the default active-set tolerance.
///
/// # Safety
/// `f` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn fracfb_dderiv(
    problem: *const FracfbProblem,
    position: *const FracfbPosition,
    f: *const f64,
    dim: usize,
    mesh: usize,
    out_value: *mut f64,
) -> FracfbStatus {
    guard(|| {
        let problem = &unsafe { deref(problem, "problem") }?.inner;
        let p = &unsafe { deref(position, "position") }?.inner;
        matching(problem, p)?;
        if dim != p.dim() {
            return Err(Error::DimensionMismatch {
                what: "direction",
                expected: p.dim(),
                got: dim,
            }
            .into());
        }
        let f = DVector::from_column_slice(unsafe { slice(f, dim, "f") }?);
        let family = CandidateFamily::constant_diracs(&problem.controls);
        *unsafe { out(out_value, "out_value") }? =
            dderiv_value(p, &f, &family, problem, None, mesh)?;
        Ok(())
    })
}

/// Residual of the non-smooth HJB equation for the constant-control
/// envelope.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fracfb_hjb_residual(
    problem: *const FracfbProblem,
    position: *const FracfbPosition,
    mesh: usize,
    out_value: *mut f64,
) -> FracfbStatus {
    guard(|| {
        let problem = &unsafe { deref(problem, "problem") }?.inner;
        let p = &unsafe { deref(position, "position") }?.inner;
        matching(problem, p)?;
        let family = CandidateFamily::constant_diracs(&problem.controls);
        *unsafe { out(out_value, "out_value") }? = hjb_residual(p, &family, problem, None, mesh)?;
        Ok(())
    })
}

/// Feedback run on the uniform partition of diameter at most `diam`, with
/// `steps` solver cells in total. `strategy` is `"example"`, `"envelope"` or
/// `"constant:<index>"`. Writes the terminal cost and, if `out_state` is
/// non-null, the terminal state (`dim` doubles).
///
/// # Safety
/// `strategy` must be NUL-terminated; non-null `out_state` must hold `dim`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn fracfb_simulate(
    problem: *const FracfbProblem,
    position: *const FracfbPosition,
    strategy: *const c_char,
    diam: f64,
    steps: usize,
    out_cost: *mut f64,
    out_state: *mut f64,
    dim: usize,
) -> FracfbStatus {
    guard(|| {
        let problem = &unsafe { deref(problem, "problem") }?.inner;
        let p = &unsafe { deref(position, "position") }?.inner;
        matching(problem, p)?;
        let name = unsafe { text(strategy, "strategy") }?;
        let rule = strategy_by_name(name, problem, None, 256)?;
        let partition = Partition::with_diameter(p.t(), p.horizon(), diam)?;
        let spp = steps.div_ceil(partition.pieces()).max(1);
        let report = run_feedback(p, rule.as_ref(), &partition, problem, spp, None)?;
        let terminal = report.terminal();
        if !out_state.is_null() {
            if dim != terminal.len() {
                return Err(Error::DimensionMismatch {
                    what: "out_state",
                    expected: terminal.len(),
                    got: dim,
                }
                .into());
            }
            // SAFETY: non-null; `dim` doubles by contract
            unsafe { std::slice::from_raw_parts_mut(out_state, dim) }
                .copy_from_slice(terminal.as_slice());
        }
        *unsafe { out(out_cost, "out_cost") }? = report.cost;
        Ok(())
    })
}

/// The gamma function.
#[no_mangle]
pub extern "C" fn fracfb_gamma(x: f64) -> f64 {
    catch_unwind(|| gamma(x)).unwrap_or(f64::NAN)
}

/// Mittag-Leffler `E_{α,β}(x)`.
///
/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fracfb_mittag_leffler(
    alpha: f64,
    beta: f64,
    x: f64,
    out_value: *mut f64,
) -> FracfbStatus {
    guard(|| {
        *unsafe { out(out_value, "out_value") }? = mittag_leffler(alpha, beta, x)?;
        Ok(())
    })
}

/// Copies the calling thread's last error message (NUL-terminated,
/// truncated to `len`) into `buf` and returns the length the full message
/// needs including the terminator. Pass a null `buf` to query the length.
///
/// # Safety
/// Non-null `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fracfb_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let message = e.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            // SAFETY: `buf` holds `len` bytes by contract and `n < len`
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len() + 1
    })
}
