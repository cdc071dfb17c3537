//! C ABI over the `phasehyst` solver.
//!
//! Objects are opaque handles created by `ph_*` constructors and released with the
//! matching `ph_*_free`. Every call returns a [`PhStatus`]; on failure the message
//! is available from [`ph_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use phasehyst::config::RunConfig;
use phasehyst::dynamics::{self, DynamicsError, ModelConfig, SystemState, Trajectory};
use phasehyst::periodic::{self, PeriodicError, PeriodicReport, SolverOptions};
use phasehyst::spatial::Field;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Numerical = 3,
    NotConverged = 4,
    InvalidArgument = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A validated model configuration.
pub struct PhConfig {
    model: ModelConfig,
    initial: SystemState,
    options: SolverOptions,
}

/// States at every time level of one integration.
pub struct PhTrajectory {
    traj: Trajectory,
}

/// Outcome of a periodic-solution search.
pub struct PhPeriodic {
    report: PeriodicReport,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: PhStatus, msg: impl Into<String>) -> PhStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> PhStatus) -> PhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(PhStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn dynamics_status(e: &DynamicsError) -> PhStatus {
    fail(PhStatus::Numerical, e.to_string())
}

/// Copies `s` plus a NUL terminator into `buf`. `BufferTooSmall` leaves the
/// required size (terminator included) in `*needed` when it is non-null.
unsafe fn write_str(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> PhStatus {
    let n = s.len() + 1;
    if !needed.is_null() {
        *needed = n;
    }
    if buf.is_null() {
        return if len == 0 { PhStatus::BufferTooSmall } else { fail(PhStatus::NullPointer, "buf is null") };
    }
    if len < n {
        return fail(PhStatus::BufferTooSmall, format!("buffer holds {len} bytes, {n} needed"));
    }
    ptr::copy_nonoverlapping(s.as_ptr() as *const c_char, buf, s.len());
    *buf.add(s.len()) = 0;
    PhStatus::Ok
}

unsafe fn read_state(cfg: &PhConfig, u0: *const f64, v0: *const f64) -> SystemState {
    let n = cfg.model.grid().n_interior();
    let field = |p: *const f64, fallback: &Field| {
        if p.is_null() {
            fallback.clone()
        } else {
            Field::from_vec(std::slice::from_raw_parts(p, n).to_vec())
        }
    };
    SystemState {
        t: 0.0,
        u: field(u0, &cfg.initial.u),
        v: field(v0, &cfg.initial.v),
    }
}

unsafe fn write_state(state: &SystemState, u: *mut f64, v: *mut f64) {
    if !u.is_null() {
        ptr::copy_nonoverlapping(state.u.as_ptr(), u, state.u.len());
    }
    if !v.is_null() {
        ptr::copy_nonoverlapping(state.v.as_ptr(), v, state.v.len());
    }
}

/// Parses and validates a JSON run configuration (NUL-terminated UTF-8).
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ph_config_from_json(json: *const c_char, out: *mut *mut PhConfig) -> PhStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(PhStatus::NullPointer, "json or out is null");
        }
        *out = ptr::null_mut();
        let src = match CStr::from_ptr(json).to_str() {
            Ok(s) => s,
            Err(e) => return fail(PhStatus::InvalidArgument, format!("config is not UTF-8: {e}")),
        };
        let run = match RunConfig::from_json_str(src) {
            Ok(r) => r,
            Err(e) => return fail(PhStatus::Config, e.to_string()),
        };
        build_config(&run, out)
    })
}

/// The reference configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ph_config_canonical(out: *mut *mut PhConfig) -> PhStatus {
    guard(|| {
        if out.is_null() {
            return fail(PhStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        build_config(&RunConfig::canonical(), out)
    })
}

unsafe fn build_config(run: &RunConfig, out: *mut *mut PhConfig) -> PhStatus {
    let model = match run.model() {
        Ok(m) => m,
        Err(e) => return fail(PhStatus::Config, e.to_string()),
    };
    let initial = run.initial_state(&model);
    let options = run.solver_options();
    *out = Box::into_raw(Box::new(PhConfig { model, initial, options }));
    PhStatus::Ok
}

/// # Safety
/// `cfg` must come from a `ph_config_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ph_config_free(cfg: *mut PhConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Writes the 16-character configuration digest.
///
/// # Safety
/// `cfg` must be a live handle; `buf` must hold `len` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn ph_config_digest(
    cfg: *const PhConfig,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> PhStatus {
    guard(|| match cfg.as_ref() {
        None => fail(PhStatus::NullPointer, "cfg is null"),
        Some(c) => write_str(c.model.digest(), buf, len, needed),
    })
}

/// Number of interior grid nodes, 0 for a null handle.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ph_config_n_interior(cfg: *const PhConfig) -> usize {
    cfg.as_ref().map_or(0, |c| c.model.grid().n_interior())
}

/// Time steps per period, 0 for a null handle.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ph_config_steps(cfg: *const PhConfig) -> usize {
    cfg.as_ref().map_or(0, |c| c.model.steps())
}

/// The dissipativity margin `kappa / C_P - L_*`; NaN for a null handle.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ph_config_c0(cfg: *const PhConfig) -> f64 {
    cfg.as_ref().map_or(f64::NAN, |c| c.model.c0())
}

/// Integrates one period. Null `u0` or `v0` take the configured initial state;
/// otherwise they hold `ph_config_n_interior` values each.
///
/// # Safety
/// Pointers must be valid for the sizes above; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ph_integrate(
    cfg: *const PhConfig,
    u0: *const f64,
    v0: *const f64,
    out: *mut *mut PhTrajectory,
) -> PhStatus {
    guard(|| {
        let Some(c) = cfg.as_ref() else {
            return fail(PhStatus::NullPointer, "cfg is null");
        };
        if out.is_null() {
            return fail(PhStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let z0 = read_state(c, u0, v0);
        match dynamics::integrate(&z0, &c.model) {
            Ok(traj) => {
                *out = Box::into_raw(Box::new(PhTrajectory { traj }));
                PhStatus::Ok
            }
            Err(e) => dynamics_status(&e),
        }
    })
}

/// Number of stored time levels (steps + 1), 0 for a null handle.
///
/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ph_trajectory_len(traj: *const PhTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.traj.len())
}

/// Copies time level `k` into `t`, `u` and `v`; any of them may be null.
///
/// # Safety
/// `u` and `v` must hold `ph_config_n_interior` values when non-null.
#[no_mangle]
pub unsafe extern "C" fn ph_trajectory_state(
    traj: *const PhTrajectory,
    k: usize,
    t: *mut f64,
    u: *mut f64,
    v: *mut f64,
) -> PhStatus {
    guard(|| {
        let Some(tr) = traj.as_ref() else {
            return fail(PhStatus::NullPointer, "traj is null");
        };
        let Some(s) = tr.traj.states.get(k) else {
            return fail(PhStatus::InvalidArgument, format!("index {k} out of range 0..{}", tr.traj.len()));
        };
        if !t.is_null() {
            *t = s.t;
        }
        write_state(s, u, v);
        PhStatus::Ok
    })
}

/// # Safety
/// `traj` must come from `ph_integrate` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ph_trajectory_free(traj: *mut PhTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Searches for a `T`-periodic state. Null `u0`, `v0` start from the configured
/// initial state; `tol <= 0`, `max_iter == 0` and `anderson_window < 0` take the
/// configured solver settings. `*out` is also set on `NotConverged`.
///
/// # Safety
/// Pointers must be valid as for [`ph_integrate`].
#[no_mangle]
pub unsafe extern "C" fn ph_find_periodic(
    cfg: *const PhConfig,
    u0: *const f64,
    v0: *const f64,
    tol: f64,
    max_iter: usize,
    anderson_window: i32,
    out: *mut *mut PhPeriodic,
) -> PhStatus {
    guard(|| {
        let Some(c) = cfg.as_ref() else {
            return fail(PhStatus::NullPointer, "cfg is null");
        };
        if out.is_null() {
            return fail(PhStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        if tol.is_nan() {
            return fail(PhStatus::InvalidArgument, "tol is NaN");
        }
        let mut opts = c.options;
        if tol > 0.0 {
            opts.tol = tol;
        }
        if max_iter > 0 {
            opts.max_iter = max_iter;
        }
        if anderson_window >= 0 {
            opts.anderson_window = anderson_window as usize;
        }
        let z0 = read_state(c, u0, v0);
        match periodic::find_periodic(&c.model, &z0, &opts) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(PhPeriodic { report }));
                PhStatus::Ok
            }
            Err(PeriodicError::NotConverged(report)) => {
                let msg = PeriodicError::NotConverged(report.clone()).to_string();
                *out = Box::into_raw(Box::new(PhPeriodic { report: *report }));
                fail(PhStatus::NotConverged, msg)
            }
            Err(PeriodicError::Dynamics(e)) => dynamics_status(&e),
            Err(e @ PeriodicError::Input(_)) => fail(PhStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Period-map evaluations used, 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ph_periodic_iterations(p: *const PhPeriodic) -> usize {
    p.as_ref().map_or(0, |p| p.report.iterations)
}

/// Last `|z(T) - z(0)|`, NaN for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ph_periodic_residual(p: *const PhPeriodic) -> f64 {
    p.as_ref().map_or(f64::NAN, |p| p.report.final_residual())
}

/// 1 when the tolerance was reached.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ph_periodic_converged(p: *const PhPeriodic) -> i32 {
    p.as_ref().map_or(0, |p| p.report.converged as i32)
}

/// Copies the periodic state; `u` and `v` hold `ph_config_n_interior` values.
///
/// # Safety
/// `p` must be a live handle; `u`, `v` may be null.
#[no_mangle]
pub unsafe extern "C" fn ph_periodic_final_state(p: *const PhPeriodic, u: *mut f64, v: *mut f64) -> PhStatus {
    guard(|| match p.as_ref() {
        None => fail(PhStatus::NullPointer, "p is null"),
        Some(p) => {
            write_state(&p.report.final_state, u, v);
            PhStatus::Ok
        }
    })
}

/// The full report as JSON.
///
/// # Safety
/// As for [`ph_config_digest`].
#[no_mangle]
pub unsafe extern "C" fn ph_periodic_report_json(
    p: *const PhPeriodic,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> PhStatus {
    guard(|| {
        let Some(p) = p.as_ref() else {
            return fail(PhStatus::NullPointer, "p is null");
        };
        match serde_json::to_string(&p.report) {
            Ok(s) => write_str(&s, buf, len, needed),
            Err(e) => fail(PhStatus::Numerical, e.to_string()),
        }
    })
}

/// # Safety
/// `p` must come from `ph_find_periodic` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ph_periodic_free(p: *mut PhPeriodic) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Copies the message of the last failed call on this thread.
///
/// # Safety
/// As for [`ph_config_digest`].
#[no_mangle]
pub unsafe extern "C" fn ph_last_error_message(buf: *mut c_char, len: usize, needed: *mut usize) -> PhStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    write_str(&msg, buf, len, needed)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ph_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
