//! C ABI for the ellipsoidal attitude estimator.
//!
//! Objects cross the boundary as opaque handles created by `*_new` /
//! `*_load` functions and released by the matching `*_free`. Every fallible
//! call returns an [`EllattStatus`]; the message of the most recent failure
//! on the calling thread is available from [`ellatt_last_error`].
//!
//! Matrices are passed as row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ellipsoidal_attitude::dynamics::{InertiaModel, Lgvi, PotentialModel};
use ellipsoidal_attitude::ellipsoid::StateEllipsoid;
use ellipsoidal_attitude::estimator::{Estimator, FilterConfig};
use ellipsoidal_attitude::measurement::DirectionMeasurement;
use ellipsoidal_attitude::scenario::{
    emit_trace, load_config, paper_sec5, parse_config, run_scenario, ScenarioConfig, ScenarioError, TraceFormat,
    TraceRecord,
};
use ellipsoidal_attitude::so3::{exp_so3, log_so3, RotationMatrix};
use ellipsoidal_attitude::Error;
use nalgebra::{Matrix3, Matrix6, Vector3};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EllattStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    NumericalError = 4,
    IoError = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Gravity model selector for [`ellatt_filter_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EllattPotential {
    FreeBody = 0,
    GravityGradient = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EllattFormat {
    Csv = 0,
    Json = 1,
}

/// Opaque validated scenario.
pub struct EllattScenario(ScenarioConfig);

/// Opaque list of trace records.
pub struct EllattTrace(Vec<TraceRecord>);

/// Opaque running filter: estimator plus the current ellipsoid and time.
pub struct EllattFilter {
    estimator: Estimator,
    state: StateEllipsoid,
    time: f64,
}

/// One trace row. Missing values are `-1` for `dir_idx` and NaN for floats.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllattRecord {
    pub k: u64,
    pub t: f64,
    pub att_err_deg: f64,
    pub rate_err: f64,
    pub trace_p: f64,
    pub membership: bool,
    pub dir_idx: i64,
    pub theta0: f64,
    pub r_star: f64,
    pub beta_flag: bool,
    pub truth_attitude: [f64; 9],
    pub truth_rate: [f64; 3],
    pub est_attitude: [f64; 9],
    pub est_rate: [f64; 3],
}

/// Outcome of one [`ellatt_filter_step`]. `r_star` and `beta` are NaN when
/// the intersection was empty.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllattStepReport {
    pub time: f64,
    pub theta0: f64,
    pub theta_degenerate: bool,
    pub r_star: f64,
    pub beta: f64,
    pub fusion_inconsistent: bool,
    pub fusion_applied: bool,
    pub trace_predicted: f64,
    pub trace_posterior: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: EllattStatus, msg: impl Into<String>) -> EllattStatus {
    set_last_error(msg);
    status
}

fn from_error(e: &Error) -> EllattStatus {
    let status = match e {
        Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. }
        | Error::NotUnit { .. }
        | Error::NotARotation { .. }
        | Error::NotSkewSymmetric { .. }
        | Error::NoiseTooLarge { .. } => EllattStatus::InvalidArgument,
        _ => EllattStatus::NumericalError,
    };
    fail(status, e.to_string())
}

fn from_scenario_error(e: &ScenarioError) -> EllattStatus {
    let status = match e {
        ScenarioError::Io { .. } => EllattStatus::IoError,
        ScenarioError::Parse(_) | ScenarioError::Invalid { .. } => EllattStatus::ConfigError,
        ScenarioError::Numerical(_) => EllattStatus::NumericalError,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning a panic into [`EllattStatus::Panic`].
fn guard(f: impl FnOnce() -> EllattStatus) -> EllattStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(EllattStatus::Panic, "internal panic"),
    }
}

unsafe fn c_str<'a>(p: *const c_char) -> Result<&'a str, EllattStatus> {
    if p.is_null() {
        return Err(fail(EllattStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(EllattStatus::InvalidArgument, "string is not valid UTF-8"))
}

unsafe fn read<const N: usize>(p: *const f64) -> Result<[f64; N], EllattStatus> {
    if p.is_null() {
        return Err(fail(EllattStatus::NullPointer, "null array"));
    }
    let mut out = [0.0; N];
    ptr::copy_nonoverlapping(p, out.as_mut_ptr(), N);
    Ok(out)
}

unsafe fn write<const N: usize>(p: *mut f64, values: &[f64; N]) -> Result<(), EllattStatus> {
    if p.is_null() {
        return Err(fail(EllattStatus::NullPointer, "null output array"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), p, N);
    Ok(())
}

fn row_major3(m: &Matrix3<f64>) -> [f64; 9] {
    std::array::from_fn(|i| m[(i / 3, i % 3)])
}

fn row_major6(m: &Matrix6<f64>) -> [f64; 36] {
    std::array::from_fn(|i| m[(i / 6, i % 6)])
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failure on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ellatt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ellatt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `R = exp(hat(v))`.
///
/// # Safety
/// `v` must point to 3 doubles and `r_out` to 9 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ellatt_so3_exp(v: *const f64, r_out: *mut f64) -> EllattStatus {
    guard(|| {
        let v = Vector3::from(try_status!(read::<3>(v)));
        try_status!(write(r_out, &row_major3(exp_so3(&v).matrix())));
        EllattStatus::Ok
    })
}

/// `v = vee(log R)` for a rotation with angle below π.
///
/// # Safety
/// `r` must point to 9 doubles and `v_out` to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ellatt_so3_log(r: *const f64, v_out: *mut f64) -> EllattStatus {
    guard(|| {
        let m = try_status!(read::<9>(r));
        let rot = match RotationMatrix::from_matrix(Matrix3::from_row_slice(&m)) {
            Ok(r) => r,
            Err(e) => return from_error(&e),
        };
        match log_so3(&rot) {
            Ok(v) => {
                try_status!(write(v_out, &[v.x, v.y, v.z]));
                EllattStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

fn box_scenario(cfg: ScenarioConfig, out: *mut *mut EllattScenario) -> EllattStatus {
    unsafe { *out = Box::into_raw(Box::new(EllattScenario(cfg))) };
    EllattStatus::Ok
}

/// The bundled spacecraft scenario.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn ellatt_scenario_paper(out: *mut *mut EllattScenario) -> EllattStatus {
    guard(|| {
        if out.is_null() {
            return fail(EllattStatus::NullPointer, "null output handle");
        }
        box_scenario(paper_sec5(), out)
    })
}

/// Parses a scenario from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ellatt_scenario_from_json(json: *const c_char, out: *mut *mut EllattScenario) -> EllattStatus {
    guard(|| {
        if out.is_null() {
            return fail(EllattStatus::NullPointer, "null output handle");
        }
        let text = try_status!(c_str(json));
        match parse_config(text) {
            Ok(cfg) => box_scenario(cfg, out),
            Err(e) => from_scenario_error(&e),
        }
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ellatt_scenario_load(path: *const c_char, out: *mut *mut EllattScenario) -> EllattStatus {
    guard(|| {
        if out.is_null() {
            return fail(EllattStatus::NullPointer, "null output handle");
        }
        let path = try_status!(c_str(path));
        match load_config(Path::new(path)) {
            Ok(cfg) => box_scenario(cfg, out),
            Err(e) => from_scenario_error(&e),
        }
    })
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ellatt_scenario_set_seed(scenario: *mut EllattScenario, seed: u64) -> EllattStatus {
    match scenario.as_mut() {
        Some(s) => {
            s.0.seed = seed;
            EllattStatus::Ok
        }
        None => fail(EllattStatus::NullPointer, "null scenario"),
    }
}

/// Runs the closed loop and returns the trace as a new handle.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ellatt_scenario_run(scenario: *const EllattScenario, out: *mut *mut EllattTrace) -> EllattStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(EllattStatus::NullPointer, "null scenario");
        };
        if out.is_null() {
            return fail(EllattStatus::NullPointer, "null output handle");
        }
        match run_scenario(&s.0) {
            Ok(records) => {
                *out = Box::into_raw(Box::new(EllattTrace(records)));
                EllattStatus::Ok
            }
            Err(e) => from_scenario_error(&e),
        }
    })
}

/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ellatt_scenario_free(scenario: *mut EllattScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of records, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ellatt_trace_len(trace: *const EllattTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.len())
}

/// Copies record `index` into `out`.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ellatt_trace_record(trace: *const EllattTrace, index: usize, out: *mut EllattRecord) -> EllattStatus {
    let Some(t) = trace.as_ref() else {
        return fail(EllattStatus::NullPointer, "null trace");
    };
    let Some(out) = out.as_mut() else {
        return fail(EllattStatus::NullPointer, "null output record");
    };
    let Some(r) = t.0.get(index) else {
        return fail(EllattStatus::OutOfRange, format!("record {index} of {}", t.0.len()));
    };
    *out = EllattRecord {
        k: r.k as u64,
        t: r.t,
        att_err_deg: r.att_err_deg,
        rate_err: r.rate_err,
        trace_p: r.trace_p,
        membership: r.membership,
        dir_idx: r.dir_idx.map_or(-1, |d| d as i64),
        theta0: r.theta0.unwrap_or(f64::NAN),
        r_star: r.r_star.unwrap_or(f64::NAN),
        beta_flag: r.beta_flag,
        truth_attitude: r.truth_attitude,
        truth_rate: r.truth_rate,
        est_attitude: r.est_attitude,
        est_rate: r.est_rate,
    };
    EllattStatus::Ok
}

/// Writes the trace as CSV or JSON.
///
/// # Safety
/// `trace` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ellatt_trace_write(trace: *const EllattTrace, path: *const c_char, format: EllattFormat) -> EllattStatus {
    guard(|| {
        let Some(t) = trace.as_ref() else {
            return fail(EllattStatus::NullPointer, "null trace");
        };
        let path = try_status!(c_str(path));
        let format = match format {
            EllattFormat::Csv => TraceFormat::Csv,
            EllattFormat::Json => TraceFormat::Json,
        };
        match emit_trace(&t.0, Path::new(path), format) {
            Ok(()) => EllattStatus::Ok,
            Err(e) => from_scenario_error(&e),
        }
    })
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ellatt_trace_free(trace: *mut EllattTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Creates a filter from an initial ellipsoid.
///
/// `inertia` holds the 3 principal moments, `attitude` a row-major rotation,
/// `rate` the center angular velocity and `shape` the row-major 6×6 matrix.
///
/// # Safety
/// Array pointers must reference the stated number of doubles and `out` a
/// valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ellatt_filter_new(
    inertia: *const f64,
    potential: EllattPotential,
    step: f64,
    steps_between_measurements: usize,
    attitude: *const f64,
    rate: *const f64,
    shape: *const f64,
    time: f64,
    out: *mut *mut EllattFilter,
) -> EllattStatus {
    guard(|| {
        if out.is_null() {
            return fail(EllattStatus::NullPointer, "null output handle");
        }
        let j = try_status!(read::<3>(inertia));
        let r = try_status!(read::<9>(attitude));
        let w = try_status!(read::<3>(rate));
        let p = try_status!(read::<36>(shape));
        let potential = match potential {
            EllattPotential::FreeBody => PotentialModel::FreeBody,
            EllattPotential::GravityGradient => PotentialModel::GravityGradient,
        };
        if !time.is_finite() {
            return fail(EllattStatus::InvalidArgument, "time must be finite");
        }
        let built = (|| -> Result<EllattFilter, Error> {
            let inertia = InertiaModel::diagonal(j[0], j[1], j[2])?;
            let integrator = Lgvi::new(step, inertia, potential)?;
            let estimator = Estimator::new(integrator, FilterConfig::new(step, steps_between_measurements)?)?;
            let attitude = RotationMatrix::from_matrix(Matrix3::from_row_slice(&r))?;
            let state = StateEllipsoid::new(attitude, Vector3::from(w), Matrix6::from_row_slice(&p))?;
            Ok(EllattFilter { estimator, state, time })
        })();
        match built {
            Ok(f) => {
                *out = Box::into_raw(Box::new(f));
                EllattStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Propagates to the next measurement instant and fuses one direction
/// measurement: `reference` is the known inertial direction, `measured` its
/// observation in the body frame and `noise` the row-major bound `S`.
///
/// # Safety
/// `filter` must be a live handle; array pointers must reference the stated
/// number of doubles; `report` may be null.
#[no_mangle]
pub unsafe extern "C" fn ellatt_filter_step(
    filter: *mut EllattFilter,
    reference: *const f64,
    measured: *const f64,
    noise: *const f64,
    report: *mut EllattStepReport,
) -> EllattStatus {
    guard(|| {
        let Some(f) = filter.as_mut() else {
            return fail(EllattStatus::NullPointer, "null filter");
        };
        let e = Vector3::from(try_status!(read::<3>(reference)));
        let b = Vector3::from(try_status!(read::<3>(measured)));
        let s = Matrix3::from_row_slice(&try_status!(read::<9>(noise)));
        let meas = match DirectionMeasurement::new(e, b, s) {
            Ok(m) => m,
            Err(err) => return from_error(&err),
        };
        match f.estimator.filter_step(&f.state, f.time, &meas) {
            Ok((posterior, r)) => {
                f.state = posterior;
                f.time = r.time;
                if let Some(out) = report.as_mut() {
                    *out = EllattStepReport {
                        time: r.time,
                        theta0: r.theta0,
                        theta_degenerate: r.theta_degenerate,
                        r_star: r.r_star.unwrap_or(f64::NAN),
                        beta: r.beta.unwrap_or(f64::NAN),
                        fusion_inconsistent: r.fusion_inconsistent,
                        fusion_applied: r.fusion_applied,
                        trace_predicted: r.trace_predicted,
                        trace_posterior: r.trace_posterior,
                    };
                }
                EllattStatus::Ok
            }
            Err(err) => from_error(&err),
        }
    })
}

/// Copies the current ellipsoid out. Any output pointer may be null.
///
/// # Safety
/// `filter` must be a live handle; non-null outputs must hold 9, 3, 36 and
/// 1 doubles respectively.
#[no_mangle]
pub unsafe extern "C" fn ellatt_filter_state(
    filter: *const EllattFilter,
    attitude: *mut f64,
    rate: *mut f64,
    shape: *mut f64,
    time: *mut f64,
) -> EllattStatus {
    let Some(f) = filter.as_ref() else {
        return fail(EllattStatus::NullPointer, "null filter");
    };
    if !attitude.is_null() {
        try_status!(write(attitude, &row_major3(f.state.attitude.matrix())));
    }
    if !rate.is_null() {
        try_status!(write(rate, &f.state.angular_velocity.into()));
    }
    if !shape.is_null() {
        try_status!(write(shape, &row_major6(&f.state.shape)));
    }
    if let Some(t) = time.as_mut() {
        *t = f.time;
    }
    EllattStatus::Ok
}

/// # Safety
/// `filter` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ellatt_filter_free(filter: *mut EllattFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}
