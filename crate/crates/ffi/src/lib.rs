// SPDX-License-Identifier: Apache-2.0

//! C ABI over the vfteleop simulator, geometry and metrics.
//!
//! Every fallible call returns a `VftStatus`; on failure the message is kept
//! per thread and read with `vft_last_error`. Objects are opaque handles owned
//! by the caller and released with their `_free` function. Arrays are flat
//! `double` buffers: points are xyz triples, matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nalgebra::Vector3;
use vfteleop::geometry::{nearest_point, DesiredPath};
use vfteleop::harness::Scenario;
use vfteleop::metrics::{sal, trajectory_error, trial_metrics, TrialRecord};
use vfteleop::operators::{run_trial, Mode};
use vfteleop::sim::{forward_kinematics, gravity_torque, mass_matrix, RobotModel};
use vfteleop::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VftStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    SimulationFault = 4,
    Geometry = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
}

/// Rigid-body arm model.
pub struct VftRobot(RobotModel);

/// Desired path: points with surface normals.
pub struct VftPath(DesiredPath);

/// Loaded experiment scenario.
pub struct VftScenario(Scenario);

/// One recorded trial.
pub struct VftRecord {
    record: TrialRecord,
    gt: Vec<Vector3<f64>>,
    closed: bool,
}

/// Per-trial scores.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VftTrialMetrics {
    pub sal: f64,
    pub mean_error_mm: f64,
    pub error_sd_mm: f64,
    pub contact_losses: usize,
    pub duration: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> VftStatus {
    match e {
        Error::Dimension { .. } => VftStatus::Dimension,
        Error::SimulationFault { .. } => VftStatus::SimulationFault,
        Error::DegenerateFrame
        | Error::AmbiguousAxis { .. }
        | Error::NoNormal(_)
        | Error::RejectedClick { .. }
        | Error::IkFailure { .. } => VftStatus::Geometry,
        Error::Io(_) => VftStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) | Error::Protocol(_) => VftStatus::Parse,
        _ => VftStatus::InvalidArgument,
    }
}

struct Fail(VftStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(VftStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VftStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VftStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VftStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or valid for `n` reads.
unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// # Safety
/// `p` is null or valid for `n` writes.
unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

/// # Safety
/// `p` is null or a live handle.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(VftStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// # Safety
/// `out` is null or valid for one write.
unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn vec3s(flat: &[f64]) -> Vec<Vector3<f64>> {
    flat.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()
}

/// Copies the calling thread's last error message into `buf` (truncated, always
/// NUL-terminated when `len > 0`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` is null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn vft_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// The built-in 7-DOF arm.
///
/// # Safety
/// `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vft_robot_default(out: *mut *mut VftRobot) -> VftStatus {
    guard(|| put(out, VftRobot(RobotModel::default_arm())))
}

/// Loads an arm description from a TOML file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vft_robot_load(path: *const c_char, out: *mut *mut VftRobot) -> VftStatus {
    guard(|| {
        let model = RobotModel::load(Path::new(text(path, "path")?))?;
        put(out, VftRobot(model))
    })
}

/// # Safety
/// `robot` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vft_robot_free(robot: *mut VftRobot) {
    if !robot.is_null() {
        drop(Box::from_raw(robot));
    }
}

/// Joint count, or 0 for a null handle.
///
/// # Safety
/// `robot` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vft_robot_dof(robot: *const VftRobot) -> usize {
    robot.as_ref().map_or(0, |r| r.0.dof())
}

/// Gravity torque at `q` (`n` = dof) into `tau` (`n`).
///
/// # Safety
/// `q` and `tau` are valid for `n` elements.
#[no_mangle]
pub unsafe extern "C" fn vft_robot_gravity_torque(robot: *const VftRobot, q: *const f64, n: usize, tau: *mut f64) -> VftStatus {
    guard(|| {
        let r = handle(robot, "robot")?;
        let g = gravity_torque(&r.0, slice(q, n, "q")?)?;
        slice_mut(tau, n, "tau")?.copy_from_slice(&g);
        Ok(())
    })
}

/// Joint-space mass matrix at `q` into `m` (`n`×`n`, row-major).
///
/// # Safety
/// `q` is valid for `n` elements and `m` for `n * n`.
#[no_mangle]
pub unsafe extern "C" fn vft_robot_mass_matrix(robot: *const VftRobot, q: *const f64, n: usize, m: *mut f64) -> VftStatus {
    guard(|| {
        let r = handle(robot, "robot")?;
        let mm = mass_matrix(&r.0, slice(q, n, "q")?)?;
        let out = slice_mut(m, n * n, "m")?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = mm[(i, j)];
            }
        }
        Ok(())
    })
}

/// Tool position (3) and rotation (9, row-major) at `q`.
///
/// # Safety
/// `q` is valid for `n` elements, `position` for 3 and `rotation` for 9.
#[no_mangle]
pub unsafe extern "C" fn vft_robot_forward_kinematics(
    robot: *const VftRobot,
    q: *const f64,
    n: usize,
    position: *mut f64,
    rotation: *mut f64,
) -> VftStatus {
    guard(|| {
        let r = handle(robot, "robot")?;
        let pose = forward_kinematics(&r.0, slice(q, n, "q")?)?;
        slice_mut(position, 3, "position")?.copy_from_slice(pose.position.as_slice());
        let rot = slice_mut(rotation, 9, "rotation")?;
        let m = pose.rotation.matrix();
        for i in 0..3 {
            for j in 0..3 {
                rot[3 * i + j] = m[(i, j)];
            }
        }
        Ok(())
    })
}

/// Path from `n` points and unit normals (xyz triples).
///
/// # Safety
/// `points` and `normals` are valid for `3 * n` elements; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn vft_path_new(
    points: *const f64,
    normals: *const f64,
    n: usize,
    closed: bool,
    out: *mut *mut VftPath,
) -> VftStatus {
    guard(|| {
        let p = vec3s(slice(points, 3 * n, "points")?);
        let nn = vec3s(slice(normals, 3 * n, "normals")?);
        put(out, VftPath(DesiredPath::new(p, nn, closed)?))
    })
}

/// # Safety
/// `path` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vft_path_free(path: *mut VftPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Polyline length in meters, or NaN for a null handle.
///
/// # Safety
/// `path` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vft_path_length(path: *const VftPath) -> f64 {
    path.as_ref().map_or(f64::NAN, |p| p.0.length())
}

/// Nearest path point to `x` (3) into `point` (3) and its index.
///
/// # Safety
/// `x` and `point` are valid for 3 elements; `index` for one write.
#[no_mangle]
pub unsafe extern "C" fn vft_path_nearest_point(path: *const VftPath, x: *const f64, point: *mut f64, index: *mut usize) -> VftStatus {
    guard(|| {
        let p = handle(path, "path")?;
        let x = slice(x, 3, "x")?;
        let c = nearest_point(&p.0, &Vector3::new(x[0], x[1], x[2]))?;
        slice_mut(point, 3, "point")?.copy_from_slice(c.x_d.as_slice());
        *slice_mut(index, 1, "index")?.first_mut().expect("one element") = c.index;
        Ok(())
    })
}

/// Spectral arc length of a speed profile sampled at `dt`, cutoff `omega_c` rad/s.
///
/// # Safety
/// `speed` is valid for `n` elements; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn vft_sal(speed: *const f64, n: usize, dt: f64, omega_c: f64, out: *mut f64) -> VftStatus {
    guard(|| {
        let v = sal(slice(speed, n, "speed")?, dt, omega_c)?;
        slice_mut(out, 1, "out")?[0] = v;
        Ok(())
    })
}

/// Mean and standard deviation (mm) of the distance from the in-contact
/// samples of `x` (`n` xyz triples, `contact` flags) to `path`.
///
/// # Safety
/// `x` is valid for `3 * n` elements and `contact` for `n`; `mean_mm` and
/// `sd_mm` for one write each.
#[no_mangle]
pub unsafe extern "C" fn vft_trajectory_error(
    x: *const f64,
    contact: *const bool,
    n: usize,
    path: *const VftPath,
    mean_mm: *mut f64,
    sd_mm: *mut f64,
) -> VftStatus {
    guard(|| {
        let p = handle(path, "path")?;
        let xs = vec3s(slice(x, 3 * n, "x")?);
        let stats = trajectory_error(&xs, slice(contact, n, "contact")?, p.0.points(), p.0.is_closed())?;
        slice_mut(mean_mm, 1, "mean_mm")?[0] = stats.mean_mm;
        slice_mut(sd_mm, 1, "sd_mm")?[0] = stats.sd_mm;
        Ok(())
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vft_scenario_load(path: *const c_char, out: *mut *mut VftScenario) -> VftStatus {
    guard(|| {
        let sc = Scenario::load(Path::new(text(path, "path")?))?;
        put(out, VftScenario(sc))
    })
}

/// # Safety
/// `scenario` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vft_scenario_free(scenario: *mut VftScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs one trial. `mode` is "uni", "bi", "uni_vf" or "bi_vf".
///
/// # Safety
/// `scenario` is a live handle, `mode` a NUL-terminated string and `out` valid
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn vft_run_trial(
    scenario: *const VftScenario,
    mode: *const c_char,
    seed: u64,
    out: *mut *mut VftRecord,
) -> VftStatus {
    guard(|| {
        let sc = handle(scenario, "scenario")?;
        let mode: Mode = text(mode, "mode")?.parse()?;
        let record = run_trial(&sc.0.task, mode, seed)?;
        let gt = &sc.0.task.ground_truth;
        put(out, VftRecord { record, gt: gt.points().to_vec(), closed: gt.is_closed() })
    })
}

/// # Safety
/// `record` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vft_record_free(record: *mut VftRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Number of recorded samples, or 0 for a null handle.
///
/// # Safety
/// `record` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vft_record_len(record: *const VftRecord) -> usize {
    record.as_ref().map_or(0, |r| r.record.samples.len())
}

/// Scores the trial against its scenario's ground-truth path.
///
/// # Safety
/// `record` is a live handle; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vft_record_metrics(record: *const VftRecord, out: *mut VftTrialMetrics) -> VftStatus {
    guard(|| {
        let r = handle(record, "record")?;
        let m = trial_metrics(&r.record, &r.gt, r.closed)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = VftTrialMetrics {
            sal: m.sal,
            mean_error_mm: m.mean_error_mm,
            error_sd_mm: m.error_sd_mm,
            contact_losses: m.contact_losses,
            duration: m.duration,
        };
        Ok(())
    })
}

/// Writes the samples as CSV.
///
/// # Safety
/// `record` is a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vft_record_write_csv(record: *const VftRecord, path: *const c_char) -> VftStatus {
    guard(|| {
        let r = handle(record, "record")?;
        let file = std::fs::File::create(text(path, "path")?).map_err(Error::from)?;
        r.record.write_csv(std::io::BufWriter::new(file))?;
        Ok(())
    })
}
