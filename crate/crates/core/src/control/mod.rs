// SPDX-License-Identifier: Apache-2.0

//! Virtual-fixture controller for the remote arm.
//!
//! All task-space quantities are in the robot base frame. Each function returns
//! the force actually applied to the tool, with the sign chosen so the fixture
//! restores the tool onto the path:
//!
//! | controller  | scalar                                      | applied      |
//! |-------------|---------------------------------------------|--------------|
//! | path        | F_s = K_pp (d.s) + K_dp (xd.s)              | -F_s s       |
//! | normal      | F_n = max(0, K_pn (d.n) + K_dn (xd.n) + F_0) | -F_n n       |
//! | tangential  | F_t = K_pt (xd.t - v_d) + K_dt (xdd.t)      | -F_t t       |
//!
//! with d = x - x_d.

pub mod gains;

use nalgebra::{DVector, Rotation3, UnitQuaternion, Vector3};

pub use gains::{BilateralGains, GainSet, NormalGains, OrientationGains, PathGains, TangentialGains};

use crate::error::{Error, Result};
use crate::geometry::{constraint_at, desired_orientation, nearest_index, ConstraintResult, DesiredPath, PathFrame};
use crate::sim::{forward_kinematics, gravity_torque, jacobian, JointState, RobotModel};

/// Default cutoff of the acceleration low-pass filter, Hz.
pub const ACCEL_CUTOFF_HZ: f64 = 20.0;

/// Scalar controller output and the force it applies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisForce {
    pub scalar: f64,
    pub force: Vector3<f64>,
}

pub fn path_force(d: &Vector3<f64>, xd: &Vector3<f64>, frame: &PathFrame, g: &PathGains) -> AxisForce {
    let scalar = g.kp * d.dot(&frame.s_hat) + g.kd * xd.dot(&frame.s_hat);
    AxisForce { scalar, force: -scalar * frame.s_hat }
}

pub fn normal_force(d: &Vector3<f64>, xd: &Vector3<f64>, frame: &PathFrame, g: &NormalGains) -> AxisForce {
    let scalar = (g.kp * d.dot(&frame.n_hat) + g.kd * xd.dot(&frame.n_hat) + g.f0).max(0.0);
    AxisForce { scalar, force: -scalar * frame.n_hat }
}

pub fn tangential_force(xd: &Vector3<f64>, xdd: &Vector3<f64>, frame: &PathFrame, g: &TangentialGains) -> AxisForce {
    let scalar = g.kp * (xd.dot(&frame.t_hat) - g.vd) + g.kd * xdd.dot(&frame.t_hat);
    AxisForce { scalar, force: -scalar * frame.t_hat }
}

/// Axis-angle error of `o_d oᵀ`, base frame.
pub fn orientation_error(o: &Rotation3<f64>, o_d: &Rotation3<f64>) -> Result<Vector3<f64>> {
    // Via the quaternion: the matrix trace of a rounded product can exceed 3.
    let rel = UnitQuaternion::from_rotation_matrix(&(o_d * o.transpose()));
    let angle = rel.angle();
    if angle >= std::f64::consts::PI - 1e-6 {
        return Err(Error::AmbiguousAxis { angle });
    }
    Ok(rel.scaled_axis())
}

/// Restoring torque (base frame). Gains act in the tool frame, so a zero zz
/// entry leaves spin about the tool axis free.
pub fn orientation_torque(o: &Rotation3<f64>, o_d: &Rotation3<f64>, omega: &Vector3<f64>, g: &OrientationGains) -> Result<Vector3<f64>> {
    let err = orientation_error(o, o_d)?;
    let err_tool = o.transpose() * err;
    let omega_tool = o.transpose() * omega;
    Ok(o * (g.kp * err_tool - g.kd * omega_tool))
}

/// τ_l = K_pl (q_r − q_l) + K_dl (q̇_r − q̇_l). The remote arm receives −τ_l.
/// Joints beyond the local side's DOF get zero.
pub fn bilateral_torque(q_r: &[f64], qd_r: &[f64], q_l: &[f64], qd_l: &[f64], g: &BilateralGains) -> Result<Vec<f64>> {
    Error::check_len("remote joint rates", q_r.len(), qd_r.len())?;
    Error::check_len("local joint rates", q_l.len(), qd_l.len())?;
    if q_l.len() > q_r.len() {
        return Err(Error::Dimension { what: "local joints", expected: q_r.len(), got: q_l.len() });
    }
    if g.kp.len() < q_l.len() || g.kd.len() < q_l.len() {
        return Err(Error::Dimension { what: "bilateral gains", expected: q_l.len(), got: g.kp.len().min(g.kd.len()) });
    }
    Ok((0..q_r.len()).map(|i| if i < q_l.len() { g.kp[i] * (q_r[i] - q_l[i]) + g.kd[i] * (qd_r[i] - qd_l[i]) } else { 0.0 }).collect())
}

/// Per-arm controller memory.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlState {
    pub vf_enabled: bool,
    dt: f64,
    cutoff_hz: f64,
    prev_velocity: Option<Vector3<f64>>,
    accel: Vector3<f64>,
    last_index: Option<usize>,
    last_frame: Option<PathFrame>,
}

impl ControlState {
    pub fn new(dt: f64, cutoff_hz: f64, vf_enabled: bool) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("control period", format!("must be > 0, got {dt}")));
        }
        if !(cutoff_hz > 0.0 && cutoff_hz.is_finite()) {
            return Err(Error::invalid("filter cutoff", format!("must be > 0, got {cutoff_hz}")));
        }
        Ok(Self { vf_enabled, dt, cutoff_hz, prev_velocity: None, accel: Vector3::zeros(), last_index: None, last_frame: None })
    }

    pub fn reset(&mut self) {
        self.prev_velocity = None;
        self.accel = Vector3::zeros();
        self.last_index = None;
        self.last_frame = None;
    }

    /// Filtered tool acceleration; zero until two velocity samples have been seen.
    pub fn acceleration(&self) -> Vector3<f64> {
        self.accel
    }

    pub fn last_index(&self) -> Option<usize> {
        self.last_index
    }

    /// Feed one tool-velocity sample through the backward difference and low-pass.
    pub fn update_velocity(&mut self, v: &Vector3<f64>) {
        if let Some(prev) = self.prev_velocity {
            let raw = (v - prev) / self.dt;
            let tau = 1.0 / (2.0 * std::f64::consts::PI * self.cutoff_hz);
            let alpha = self.dt / (self.dt + tau);
            self.accel += alpha * (raw - self.accel);
        }
        self.prev_velocity = Some(*v);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VfWarning {
    /// Frame at this path index was degenerate; the previous frame was held.
    DegenerateFrame { index: usize, held: bool },
    /// Orientation error was near π; orientation torque skipped this step.
    AmbiguousOrientation { angle: f64 },
}

/// One control step's output with its parts, for logging and tests.
#[derive(Clone, Debug, PartialEq)]
pub struct VfOutput {
    pub tau: Vec<f64>,
    pub tau_g: Vec<f64>,
    pub constraint: Option<ConstraintResult>,
    pub path: Option<AxisForce>,
    pub normal: Option<AxisForce>,
    pub tangential: Option<AxisForce>,
    pub orientation: Vector3<f64>,
    pub warnings: Vec<VfWarning>,
}

/// τ = τ_g + Jvᵀ(F_path + F_normal + F_tangential) + Jωᵀ τ_o + τ_l.
/// With VF disabled this is τ_g + τ_l.
pub fn vf_step(
    model: &RobotModel,
    state: &JointState,
    path: &DesiredPath,
    gains: &GainSet,
    ctl: &mut ControlState,
    tau_l: &[f64],
) -> Result<VfOutput> {
    let n = model.dof();
    model.check_dof("joint positions", state.q.len())?;
    Error::check_len("bilateral torque", n, tau_l.len())?;
    let tau_g = gravity_torque(model, &state.q)?;
    let jac = jacobian(model, &state.q)?;
    let twist = &jac * DVector::from_column_slice(&state.qd);
    let v = Vector3::new(twist[0], twist[1], twist[2]);
    let omega = Vector3::new(twist[3], twist[4], twist[5]);
    ctl.update_velocity(&v);

    let mut out = VfOutput {
        tau: tau_g.iter().zip(tau_l).map(|(g, l)| g + l).collect(),
        tau_g,
        constraint: None,
        path: None,
        normal: None,
        tangential: None,
        orientation: Vector3::zeros(),
        warnings: Vec::new(),
    };
    if !ctl.vf_enabled {
        return Ok(out);
    }

    let pose = forward_kinematics(model, &state.q)?;
    let x = pose.position;
    let index = nearest_index(path, &x);
    let constraint = match constraint_at(path, index, &x) {
        Ok(c) => c,
        Err(Error::DegenerateFrame) => {
            let held = ctl.last_frame;
            out.warnings.push(VfWarning::DegenerateFrame { index, held: held.is_some() });
            log::warn!("degenerate path frame at index {index}; holding previous frame");
            let Some(frame) = held else {
                return Ok(out);
            };
            let x_d = path.points()[index];
            ConstraintResult { x_d, index, frame, d: x - x_d }
        }
        Err(e) => return Err(e),
    };
    ctl.last_index = Some(constraint.index);
    ctl.last_frame = Some(constraint.frame);

    let frame = &constraint.frame;
    let fp = path_force(&constraint.d, &v, frame, &gains.path);
    let fn_ = normal_force(&constraint.d, &v, frame, &gains.normal);
    let ft = tangential_force(&v, &ctl.acceleration(), frame, &gains.tangential);
    let torque = match orientation_torque(&pose.rotation, &desired_orientation(frame), &omega, &gains.orientation) {
        Ok(t) => t,
        Err(Error::AmbiguousAxis { angle }) => {
            out.warnings.push(VfWarning::AmbiguousOrientation { angle });
            Vector3::zeros()
        }
        Err(e) => return Err(e),
    };
    let force = fp.force + fn_.force + ft.force;
    let wrench = nalgebra::Vector6::new(force.x, force.y, force.z, torque.x, torque.y, torque.z);
    let tau_vf = jac.transpose() * wrench;
    for (t, extra) in out.tau.iter_mut().zip(tau_vf.iter()) {
        *t += extra;
    }
    out.constraint = Some(constraint);
    out.path = Some(fp);
    out.normal = Some(fn_);
    out.tangential = Some(ft);
    out.orientation = torque;
    Ok(out)
}
