//! C ABI for the dcsim simulator.
//!
//! Objects are opaque handles created by `dcsim_*_new`/`dcsim_run*` and
//! released with the matching `*_free`. Every fallible call returns a
//! [`DcsimStatus`]; on failure, [`dcsim_last_error`] describes the cause until
//! the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use dcsim::config::{load_config, Overrides};
use dcsim::experiment::{run_experiment, ExperimentPlan, PointResult};
use dcsim::network::{run_once, RunOptions};
use dcsim::sim::run_seed;
use dcsim::{Mode, RunMetrics, SimError, SimTime, SimulationParams};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DcsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Parse = 4,
    Scenario = 5,
    Conservation = 6,
    Io = 7,
    UnknownMetric = 8,
    Internal = 9,
}

/// Mobility scheme.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DcsimMode {
    Dc = 0,
    Hh = 1,
}

impl From<DcsimMode> for Mode {
    fn from(m: DcsimMode) -> Self {
        match m {
            DcsimMode::Dc => Mode::Dc,
            DcsimMode::Hh => Mode::Hh,
        }
    }
}

/// Simulation parameters.
pub struct DcsimParams {
    inner: SimulationParams,
}

/// Metrics of one completed run.
pub struct DcsimRun {
    metrics: RunMetrics,
}

/// Aggregated metrics of an experiment (one configuration, one or two modes).
pub struct DcsimExperiment {
    result: PointResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DcsimStatus, msg: impl Into<String>) -> DcsimStatus {
    set_error(msg);
    status
}

fn from_sim_error(e: SimError) -> DcsimStatus {
    let status = match e {
        SimError::Config { .. } => DcsimStatus::Config,
        SimError::Parse { .. } => DcsimStatus::Parse,
        SimError::Scenario(_) => DcsimStatus::Scenario,
        SimError::Conservation(_) => DcsimStatus::Conservation,
        SimError::Io(_) => DcsimStatus::Io,
        _ => DcsimStatus::Internal,
    };
    fail(status, e.to_string())
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn opt_path(s: *const c_char) -> Result<Option<PathBuf>, DcsimStatus> {
    if s.is_null() {
        return Ok(None);
    }
    match CStr::from_ptr(s).to_str() {
        Ok(text) => Ok(Some(PathBuf::from(text))),
        Err(_) => Err(fail(DcsimStatus::InvalidArgument, "path is not valid UTF-8")),
    }
}

/// # Safety
/// `params` must be null or a live handle.
unsafe fn update(params: *mut DcsimParams, f: impl FnOnce(&mut SimulationParams)) -> DcsimStatus {
    let Some(p) = params.as_mut() else {
        return fail(DcsimStatus::NullPointer, "params handle is null");
    };
    let mut next = p.inner.clone();
    f(&mut next);
    match next.validate() {
        Ok(()) => {
            p.inner = next;
            DcsimStatus::Ok
        }
        Err(e) => from_sim_error(e),
    }
}

/// Message of the last failing call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dcsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dcsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default parameters. Never null.
#[no_mangle]
pub extern "C" fn dcsim_params_new() -> *mut DcsimParams {
    Box::into_raw(Box::new(DcsimParams {
        inner: SimulationParams::default(),
    }))
}

/// Loads parameters from a TOML configuration file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcsim_params_load(path: *const c_char, out: *mut *mut DcsimParams) -> DcsimStatus {
    if out.is_null() {
        return fail(DcsimStatus::NullPointer, "out is null");
    }
    *out = ptr::null_mut();
    let path = match opt_path(path) {
        Ok(Some(p)) => p,
        Ok(None) => return fail(DcsimStatus::NullPointer, "path is null"),
        Err(s) => return s,
    };
    match load_config(Some(Path::new(&path)), &Overrides::default()) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(DcsimParams { inner }));
            DcsimStatus::Ok
        }
        Err(e) => from_sim_error(e),
    }
}

/// # Safety
/// `params` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dcsim_params_free(params: *mut DcsimParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// # Safety
/// `params` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dcsim_params_set_mode(params: *mut DcsimParams, mode: DcsimMode) -> DcsimStatus {
    update(params, |p| p.mode = mode.into())
}

/// # Safety
/// `params` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dcsim_params_set_seed(params: *mut DcsimParams, seed: u64) -> DcsimStatus {
    update(params, |p| p.master_seed = seed)
}

/// # Safety
/// `params` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dcsim_params_set_runs(params: *mut DcsimParams, runs: u32) -> DcsimStatus {
    update(params, |p| p.n_runs = runs)
}

/// # Safety
/// `params` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dcsim_params_set_x2_latency_ms(params: *mut DcsimParams, ms: f64) -> DcsimStatus {
    if !ms.is_finite() || ms < 0.0 {
        return fail(DcsimStatus::InvalidArgument, format!("x2 latency must be >= 0, got {ms}"));
    }
    update(params, |p| p.d_x2 = SimTime::from_ms_f64(ms))
}

/// # Safety
/// `params` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dcsim_params_set_ue_speed(params: *mut DcsimParams, speed: f64) -> DcsimStatus {
    update(params, |p| p.ue_speed = speed)
}

/// Run length in seconds; 0 restores the default (time to cover the UE path).
///
/// # Safety
/// `params` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dcsim_params_set_duration_s(params: *mut DcsimParams, secs: f64) -> DcsimStatus {
    if !secs.is_finite() || secs < 0.0 {
        return fail(DcsimStatus::InvalidArgument, format!("duration must be >= 0, got {secs}"));
    }
    update(params, |p| {
        p.duration = (secs > 0.0).then(|| SimTime::from_secs_f64(secs));
    })
}

/// Runs replication `run_index` (seeded from the master seed) in the
/// parameters' mode.
///
/// # Safety
/// `params` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcsim_run(params: *const DcsimParams, run_index: u32, out: *mut *mut DcsimRun) -> DcsimStatus {
    if out.is_null() {
        return fail(DcsimStatus::NullPointer, "out is null");
    }
    *out = ptr::null_mut();
    let Some(p) = params.as_ref() else {
        return fail(DcsimStatus::NullPointer, "params handle is null");
    };
    let seed = run_seed(p.inner.master_seed, u64::from(run_index));
    match run_once(&p.inner, seed, run_index, RunOptions::default()) {
        Ok(output) => {
            *out = Box::into_raw(Box::new(DcsimRun {
                metrics: output.metrics,
            }));
            DcsimStatus::Ok
        }
        Err(e) => from_sim_error(e),
    }
}

/// Reads a scalar metric by name (e.g. `mean_latency_ms`).
///
/// # Safety
/// `run` must be a live handle, `name` a valid NUL-terminated string and
/// `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcsim_run_metric(run: *const DcsimRun, name: *const c_char, value: *mut f64) -> DcsimStatus {
    let (Some(r), false, false) = (run.as_ref(), name.is_null(), value.is_null()) else {
        return fail(DcsimStatus::NullPointer, "null argument");
    };
    let name = CStr::from_ptr(name).to_string_lossy();
    match r.metrics.scalars().into_iter().find(|(n, _)| *n == name) {
        Some((_, v)) => {
            *value = v;
            DcsimStatus::Ok
        }
        None => fail(DcsimStatus::UnknownMetric, format!("unknown metric {name}")),
    }
}

/// # Safety
/// `run` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dcsim_run_free(run: *mut DcsimRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Runs all replications of the configuration, in both modes when `paired`
/// is nonzero, writing per-run files under `out_dir` unless it is null.
///
/// # Safety
/// `params` must be a live handle, `out_dir` null or a valid NUL-terminated
/// string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcsim_experiment_run(
    params: *const DcsimParams,
    paired: i32,
    out_dir: *const c_char,
    out: *mut *mut DcsimExperiment,
) -> DcsimStatus {
    if out.is_null() {
        return fail(DcsimStatus::NullPointer, "out is null");
    }
    *out = ptr::null_mut();
    let Some(p) = params.as_ref() else {
        return fail(DcsimStatus::NullPointer, "params handle is null");
    };
    let dir = match opt_path(out_dir) {
        Ok(d) => d,
        Err(s) => return s,
    };
    let mut plan = ExperimentPlan::single("default", p.inner.clone(), paired != 0);
    plan.out_dir = dir;
    match run_experiment(&plan) {
        Ok(mut points) => match points.pop() {
            Some(result) => {
                *out = Box::into_raw(Box::new(DcsimExperiment { result }));
                DcsimStatus::Ok
            }
            None => fail(DcsimStatus::Internal, "experiment produced no result"),
        },
        Err(e) => from_sim_error(e),
    }
}

/// Mean and sample standard deviation of a metric over the runs of `mode`.
/// Either output pointer may be null.
///
/// # Safety
/// `exp` must be a live handle, `name` a valid NUL-terminated string, and
/// `mean`/`stddev` null or valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dcsim_experiment_metric(
    exp: *const DcsimExperiment,
    mode: DcsimMode,
    name: *const c_char,
    mean: *mut f64,
    stddev: *mut f64,
) -> DcsimStatus {
    let (Some(e), false) = (exp.as_ref(), name.is_null()) else {
        return fail(DcsimStatus::NullPointer, "null argument");
    };
    let Some(m) = e.result.mode(mode.into()) else {
        return fail(DcsimStatus::InvalidArgument, "mode was not part of the experiment");
    };
    let name = CStr::from_ptr(name).to_string_lossy();
    let Some(field) = m.aggregate.get(&name) else {
        return fail(DcsimStatus::UnknownMetric, format!("unknown metric {name}"));
    };
    if let Some(out) = mean.as_mut() {
        *out = field.mean;
    }
    if let Some(out) = stddev.as_mut() {
        *out = field.stddev;
    }
    DcsimStatus::Ok
}

/// Number of runs per mode in the experiment, or 0 for a null handle.
///
/// # Safety
/// `exp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dcsim_experiment_runs(exp: *const DcsimExperiment) -> u32 {
    exp.as_ref()
        .and_then(|e| e.result.modes.first())
        .map_or(0, |m| m.runs.len() as u32)
}

/// # Safety
/// `exp` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dcsim_experiment_free(exp: *mut DcsimExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}
