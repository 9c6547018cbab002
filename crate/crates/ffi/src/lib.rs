//! C ABI for the seird solver.
//!
//! Configs and trajectories are opaque heap handles released with their
//! `*_free` function. Every fallible call returns a [`SeirdStatus`]; on
//! failure [`seird_last_error_message`] describes the error on the calling
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use seird::cli::{load_config, parse_config, RunConfig};
use seird::diagnostics::verify_bounds;
use seird::model::{compute_bounds, validate_tau, BoundsLedger, ModelParams};
use seird::stepper::{run_simulation, Trajectory, Unknown};
use seird::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeirdStatus {
    Ok = 0,
    /// A null pointer, bad index or undersized buffer was passed.
    InvalidArgument = 1,
    /// The configuration text or file is malformed or inadmissible.
    Config = 2,
    /// A linear or Newton solve failed.
    Solver = 3,
    /// A computed quantity left its proven bounds.
    Invariant = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Selects a field of a trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeirdField {
    N = 0,
    S = 1,
    I = 2,
    H = 3,
    /// Cumulative deceased density.
    D = 4,
}

/// A-priori bounds of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SeirdBounds {
    pub n_up: f64,
    pub s_up: f64,
    pub h_up: f64,
    pub i_up: f64,
    pub n_low: f64,
    pub kappa_low: f64,
    pub kappa_up: f64,
}

/// Volume integrals of every field at one step.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SeirdTotals {
    pub n: f64,
    pub s: f64,
    pub i: f64,
    pub h: f64,
    pub d: f64,
}

/// Opaque parsed configuration.
pub struct SeirdConfig(RunConfig);

/// Opaque completed run.
pub struct SeirdTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> SeirdStatus {
    if err.is_config() {
        SeirdStatus::Config
    } else if err.is_invariant() {
        SeirdStatus::Invariant
    } else {
        SeirdStatus::Solver
    }
}

fn fail(err: Error) -> SeirdStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn invalid(msg: &str) -> SeirdStatus {
    set_error(msg);
    SeirdStatus::InvalidArgument
}

/// Runs `f`, turning a panic into [`SeirdStatus::Panic`].
fn guard(f: impl FnOnce() -> SeirdStatus) -> SeirdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == SeirdStatus::Ok {
                set_error("");
            }
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("panic: {msg}"));
            SeirdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Option<&'a str> {
    if p.is_null() {
        return None;
    }
    CStr::from_ptr(p).to_str().ok()
}

fn bounds_of(b: &BoundsLedger) -> SeirdBounds {
    SeirdBounds {
        n_up: b.n_up,
        s_up: b.s_up,
        h_up: b.h_up,
        i_up: b.i_up,
        n_low: b.n_low,
        kappa_low: b.kappa_low,
        kappa_up: b.kappa_up,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn seird_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn seird_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses configuration text. Raster paths resolve against the working directory.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seird_config_parse(text: *const c_char, out: *mut *mut SeirdConfig) -> SeirdStatus {
    guard(|| {
        if out.is_null() {
            return invalid("out is null");
        }
        *out = ptr::null_mut();
        let Some(text) = str_arg(text) else {
            return invalid("text is null or not UTF-8");
        };
        match parse_config(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(SeirdConfig(cfg)));
                SeirdStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Reads and parses a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seird_config_load(path: *const c_char, out: *mut *mut SeirdConfig) -> SeirdStatus {
    guard(|| {
        if out.is_null() {
            return invalid("out is null");
        }
        *out = ptr::null_mut();
        let Some(path) = str_arg(path) else {
            return invalid("path is null or not UTF-8");
        };
        match load_config(Path::new(path)) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(SeirdConfig(cfg)));
                SeirdStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// # Safety
/// `config` must come from a parse call and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn seird_config_free(config: *mut SeirdConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Writes the canonical text form into `buf` (NUL-terminated) and the
/// required size including the terminator into `needed`. A null `buf`
/// only queries the size.
///
/// # Safety
/// `buf` must hold `len` bytes; `config` and `needed` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seird_config_emit(
    config: *const SeirdConfig,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> SeirdStatus {
    guard(|| {
        let (Some(cfg), false) = (config.as_ref(), needed.is_null()) else {
            return invalid("config or needed is null");
        };
        let text = cfg.0.emit();
        *needed = text.len() + 1;
        if buf.is_null() {
            return SeirdStatus::Ok;
        }
        if len < text.len() + 1 {
            return invalid("buffer too small");
        }
        ptr::copy_nonoverlapping(text.as_ptr(), buf.cast(), text.len());
        *buf.add(text.len()) = 0;
        SeirdStatus::Ok
    })
}

/// Bounds implied by the configured parameters and initial data.
///
/// # Safety
/// `config` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seird_config_bounds(config: *const SeirdConfig, out: *mut SeirdBounds) -> SeirdStatus {
    guard(|| {
        let (Some(cfg), Some(out)) = (config.as_ref(), out.as_mut()) else {
            return invalid("config or out is null");
        };
        let cfg = &cfg.0;
        let result = cfg.mesh().and_then(|mesh| cfg.initial_data(&mesh)).and_then(|data| {
            compute_bounds(&cfg.params, &cfg.nonlinearity(), cfg.horizon, &data.extrema())
        });
        match result {
            Ok(b) => {
                *out = bounds_of(&b);
                SeirdStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// 1 if `tau` is an admissible step for the rates `alpha`, `mu`, else 0.
#[no_mangle]
pub extern "C" fn seird_validate_tau(alpha: f64, mu: f64, tau: f64) -> i32 {
    validate_tau(&ModelParams::normalized(alpha, mu), tau).is_admissible() as i32
}

/// Runs the configured simulation.
///
/// # Safety
/// `config` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seird_run(config: *const SeirdConfig, out: *mut *mut SeirdTrajectory) -> SeirdStatus {
    guard(|| {
        if out.is_null() {
            return invalid("out is null");
        }
        *out = ptr::null_mut();
        let Some(cfg) = config.as_ref() else {
            return invalid("config is null");
        };
        let sim = match cfg.0.simulation() {
            Ok(sim) => sim,
            Err(err) => return fail(err),
        };
        match run_simulation(&sim) {
            Ok(traj) => {
                *out = Box::into_raw(Box::new(SeirdTrajectory(traj)));
                SeirdStatus::Ok
            }
            Err(failure) => fail(failure.error),
        }
    })
}

/// # Safety
/// `traj` must come from [`seird_run`] and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn seird_trajectory_free(traj: *mut SeirdTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of time steps; the trajectory holds `steps + 1` states. 0 for null.
///
/// # Safety
/// `traj` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn seird_trajectory_num_steps(traj: *const SeirdTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.steps())
}

/// Number of mesh cells. 0 for null.
///
/// # Safety
/// `traj` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn seird_trajectory_num_cells(traj: *const SeirdTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.mesh.cell_count())
}

/// Copies one field at `step` into `out`, which holds `len` doubles.
///
/// # Safety
/// `traj` must be valid and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn seird_trajectory_copy_field(
    traj: *const SeirdTrajectory,
    step: usize,
    field: SeirdField,
    out: *mut f64,
    len: usize,
) -> SeirdStatus {
    guard(|| {
        let Some(t) = traj.as_ref() else {
            return invalid("trajectory is null");
        };
        let t = &t.0;
        if step > t.steps() {
            return invalid("step out of range");
        }
        if out.is_null() || len < t.mesh.cell_count() {
            return invalid("output buffer is null or too small");
        }
        let values = match field {
            SeirdField::N => t.states[step].field(Unknown::N),
            SeirdField::S => t.states[step].field(Unknown::S),
            SeirdField::I => t.states[step].field(Unknown::I),
            SeirdField::H => t.states[step].field(Unknown::H),
            SeirdField::D => &t.deceased[step],
        }
        .values();
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
        SeirdStatus::Ok
    })
}

/// Volume integrals of all fields at `step`.
///
/// # Safety
/// `traj` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seird_trajectory_totals(
    traj: *const SeirdTrajectory,
    step: usize,
    out: *mut SeirdTotals,
) -> SeirdStatus {
    guard(|| {
        let (Some(t), Some(out)) = (traj.as_ref(), out.as_mut()) else {
            return invalid("trajectory or out is null");
        };
        let t = &t.0;
        if step > t.steps() {
            return invalid("step out of range");
        }
        let st = &t.states[step];
        let m = &t.mesh;
        *out = SeirdTotals {
            n: st.n.integral(m),
            s: st.s.integral(m),
            i: st.i.integral(m),
            h: st.h.integral(m),
            d: t.deceased[step].integral(m),
        };
        SeirdStatus::Ok
    })
}

/// The bounds ledger the run was checked against.
///
/// # Safety
/// `traj` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seird_trajectory_bounds(traj: *const SeirdTrajectory, out: *mut SeirdBounds) -> SeirdStatus {
    guard(|| {
        let (Some(t), Some(out)) = (traj.as_ref(), out.as_mut()) else {
            return invalid("trajectory or out is null");
        };
        *out = bounds_of(&t.0.ledger);
        SeirdStatus::Ok
    })
}

/// Re-checks every state against the ledger and stores the violation count.
/// Returns [`SeirdStatus::Invariant`] when any bound is violated.
///
/// # Safety
/// `traj` and `violations` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seird_trajectory_verify_bounds(
    traj: *const SeirdTrajectory,
    violations: *mut usize,
) -> SeirdStatus {
    guard(|| {
        let (Some(t), Some(count)) = (traj.as_ref(), violations.as_mut()) else {
            return invalid("trajectory or violations is null");
        };
        let found = verify_bounds(&t.0, &t.0.ledger);
        *count = found.len();
        match found.first() {
            None => SeirdStatus::Ok,
            Some(v) => {
                set_error(format!("{} bound violations, first: {v}", found.len()));
                SeirdStatus::Invariant
            }
        }
    })
}
