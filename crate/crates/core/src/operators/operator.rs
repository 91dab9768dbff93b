// SPDX-License-Identifier: Apache-2.0

//! Scripted stand-ins for the human operator.
//!
//! The gamepad operator drives along the path and corrects toward it with a
//! saturated proportional force, perceiving the tool with a reaction
//! delay, and adds band-limited tremor. Without the fixture the operator also
//! has to press on the surface, and that press force drifts. The master-arm
//! operator replays an inverse-kinematics trajectory along the path, pressed a
//! few millimeters into the surface, delayed and with hand tremor. The tremor
//! is drawn in the path frame and mapped to the master joints through the
//! damped pseudo-inverse, so the felt surface keeps normal wander small.

use std::collections::VecDeque;

use nalgebra::{DVector, Rotation3, UnitQuaternion, Vector3};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ik::{solve_ik, IkOptions};
use super::noise::BandLimitedNoise;
use crate::error::{Error, Result};
use crate::geometry::{constraint_at, desired_orientation, nearest_index, point_at_arc_length, project_onto_polyline, DesiredPath};
use crate::sim::{forward_kinematics, jacobian, JointState, RobotModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorModel {
    /// Pursuit lookahead along the path, m; the drive force is gain · lookahead.
    pub lookahead: f64,
    /// Pursuit gain, N/m.
    pub gain: f64,
    /// Gamepad saturation, N.
    pub max_force: f64,
    /// Press force commanded when no fixture regulates contact, N.
    pub press_force: f64,
    /// Relative standard deviation of the press force drift.
    pub press_drift: f64,
    pub press_drift_bandwidth_hz: f64,
    /// Gamepad force tremor along the lateral and path axes of the surface
    /// tangent plane, N.
    pub tremor_sigma: [f64; 2],
    pub tremor_bandwidth_hz: f64,
    /// Reaction delay, s.
    pub delay: f64,
    /// Master-arm hand tremor along the lateral, normal and path axes, m.
    pub hand_tremor_sigma: [f64; 3],
    pub hand_tremor_bandwidth_hz: f64,
    /// Fraction of the master-to-remote joint offset the operator's arm
    /// yields to under force feedback, in [0, 1).
    pub arm_yield: f64,
    /// Master-arm traverse speed along the path, m/s.
    pub speed: f64,
    /// How far below the surface the master-arm trajectory runs, m.
    pub press_depth: f64,
    /// Time to descend from the start pose onto the path, s.
    pub approach_time: f64,
    /// Spacing of clicked points along the path, m.
    pub click_spacing: f64,
    /// Click placement error, pixels (standard deviation per axis).
    pub click_jitter_px: f64,
}

impl Default for OperatorModel {
    fn default() -> Self {
        Self {
            lookahead: 0.1,
            gain: 25.0,
            max_force: 20.0,
            press_force: 4.0,
            press_drift: 0.6,
            press_drift_bandwidth_hz: 0.5,
            tremor_sigma: [1.0, 0.1],
            tremor_bandwidth_hz: 0.5,
            delay: 0.15,
            hand_tremor_sigma: [0.013, 0.0005, 0.003],
            hand_tremor_bandwidth_hz: 0.5,
            arm_yield: 0.5,
            speed: 0.02,
            press_depth: 0.004,
            approach_time: 1.0,
            click_spacing: 0.015,
            click_jitter_px: 1.5,
        }
    }
}

impl OperatorModel {
    /// Same operator without tremor, drift, delay or click error.
    pub fn noiseless(&self) -> Self {
        Self { press_drift: 0.0, tremor_sigma: [0.0; 2], delay: 0.0, hand_tremor_sigma: [0.0; 3], click_jitter_px: 0.0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |what: &str, v: f64, positive: bool| {
            let ok = v.is_finite() && if positive { v > 0.0 } else { v >= 0.0 };
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(format!("operator.{what}"), format!("out of range: {v}")))
            }
        };
        check("lookahead", self.lookahead, true)?;
        check("gain", self.gain, false)?;
        check("max_force", self.max_force, false)?;
        check("press_force", self.press_force, false)?;
        check("press_drift", self.press_drift, false)?;
        check("press_drift_bandwidth_hz", self.press_drift_bandwidth_hz, true)?;
        for &v in &self.tremor_sigma {
            check("tremor_sigma", v, false)?;
        }
        check("tremor_bandwidth_hz", self.tremor_bandwidth_hz, true)?;
        check("delay", self.delay, false)?;
        for &v in &self.hand_tremor_sigma {
            check("hand_tremor_sigma", v, false)?;
        }
        check("hand_tremor_bandwidth_hz", self.hand_tremor_bandwidth_hz, true)?;
        if !(0.0..1.0).contains(&self.arm_yield) {
            return Err(Error::invalid("operator.arm_yield", format!("out of range: {}", self.arm_yield)));
        }
        check("speed", self.speed, true)?;
        check("press_depth", self.press_depth, false)?;
        check("approach_time", self.approach_time, false)?;
        check("click_spacing", self.click_spacing, true)?;
        check("click_jitter_px", self.click_jitter_px, false)?;
        Ok(())
    }
}

/// Fixed-length delay line at the control rate.
#[derive(Clone, Debug)]
struct Delay<T: Clone> {
    buf: VecDeque<T>,
    len: usize,
}

impl<T: Clone> Delay<T> {
    fn new(delay: f64, dt: f64) -> Self {
        let len = (delay / dt).round() as usize;
        Self { buf: VecDeque::with_capacity(len + 1), len }
    }

    /// Push the current value and get the one `len` steps old (the oldest
    /// available until the line fills).
    fn push(&mut self, v: T) -> T {
        self.buf.push_back(v);
        if self.buf.len() > self.len + 1 {
            self.buf.pop_front();
        }
        self.buf.front().expect("non-empty").clone()
    }
}

/// Output of the gamepad operator for one control period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GamepadCommand {
    /// Task-space force, N.
    pub force: Vector3<f64>,
    /// Tool angular-rate command, rad/s.
    pub wrist: Vector3<f64>,
}

/// Pursuit force: a drive of `gain · lookahead` along the local path
/// tangent, tapering over the last `lookahead` of an open path, plus a
/// correction of `gain` toward the nearest path point. Restricted to the
/// surface tangent plane and clamped to `max_force`. On a straight path this
/// equals pulling toward the point `lookahead` ahead.
pub fn pursuit_force(op: &OperatorModel, x: &Vector3<f64>, path: &DesiredPath) -> Vector3<f64> {
    let pts = path.points();
    let proj = project_onto_polyline(pts, path.is_closed(), x);
    let a = pts[proj.segment];
    let b = pts[(proj.segment + 1) % pts.len()];
    let tangent = (b - a).try_normalize(0.0).unwrap_or_else(Vector3::zeros);
    let ahead = if path.is_closed() { op.lookahead } else { op.lookahead.min(path.length() - proj.arc_length).max(0.0) };
    let normal = path.normals()[nearest_index(path, &proj.point)];
    let mut f = op.gain * (tangent * ahead + proj.point - x);
    f -= normal * f.dot(&normal);
    clamp_norm(f, op.max_force)
}

fn clamp_norm(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Gamepad operator: delayed pursuit plus tremor, pressing only when
/// `presses` is set (no fixture).
#[derive(Clone, Debug)]
pub struct UniOperator {
    op: OperatorModel,
    presses: bool,
    delay: Delay<Vector3<f64>>,
    tremor: BandLimitedNoise,
    drift: BandLimitedNoise,
}

impl UniOperator {
    pub fn new(op: &OperatorModel, presses: bool, dt: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        op.validate()?;
        let fork = |stream: u64, rng: &ChaCha8Rng| {
            let mut r = rng.clone();
            r.set_stream(stream);
            r
        };
        Ok(Self {
            op: op.clone(),
            presses,
            delay: Delay::new(op.delay, dt),
            tremor: BandLimitedNoise::new(2, 1.0, op.tremor_bandwidth_hz, dt, fork(1, rng))?,
            drift: BandLimitedNoise::new(1, op.press_drift, op.press_drift_bandwidth_hz, dt, fork(2, rng))?,
        })
    }

    /// One control period: `x` is the current tool position, `path` the
    /// pattern the operator is tracing.
    pub fn command(&mut self, x: &Vector3<f64>, path: &DesiredPath) -> GamepadCommand {
        let seen = self.delay.push(*x);
        self.tremor.advance();
        self.drift.advance();
        let mut f = pursuit_force(&self.op, &seen, path);
        let index = nearest_index(path, &seen);
        let normal = path.normals()[index];
        if self.presses {
            f -= normal * self.op.press_force * (1.0 + self.drift.value(0));
        }
        if let Ok(c) = constraint_at(path, index, &seen) {
            let [lateral, along] = self.op.tremor_sigma;
            f += c.frame.s_hat * (lateral * self.tremor.value(0)) + c.frame.t_hat * (along * self.tremor.value(1));
        }
        GamepadCommand { force: clamp_norm(f, self.op.max_force), wrist: Vector3::zeros() }
    }
}

/// Cartesian impedance behind the gamepad: force pass-through with linear
/// damping, an orientation hold whose reference integrates the wrist command,
/// and joint damping for the redundant direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GamepadGains {
    /// N s/m
    pub damping: f64,
    /// N m/rad
    pub orientation_kp: f64,
    /// N m s/rad
    pub orientation_kd: f64,
    /// N m s/rad
    pub joint_damping: f64,
}

impl Default for GamepadGains {
    fn default() -> Self {
        Self { damping: 40.0, orientation_kp: 5.0, orientation_kd: 0.3, joint_damping: 0.5 }
    }
}

#[derive(Clone, Debug)]
pub struct GamepadController {
    gains: GamepadGains,
    reference: Rotation3<f64>,
}

impl GamepadController {
    pub fn new(gains: GamepadGains, initial: Rotation3<f64>) -> Self {
        Self { gains, reference: initial }
    }

    pub fn gains(&self) -> &GamepadGains {
        &self.gains
    }

    pub fn reference(&self) -> &Rotation3<f64> {
        &self.reference
    }

    /// Joint torque (without gravity) realizing `cmd` at `state`.
    pub fn torque(&mut self, model: &RobotModel, state: &JointState, cmd: &GamepadCommand, dt: f64) -> Result<Vec<f64>> {
        self.reference = Rotation3::new(cmd.wrist * dt) * self.reference;
        let pose = forward_kinematics(model, &state.q)?;
        let jac = jacobian(model, &state.q)?;
        let twist = &jac * DVector::from_column_slice(&state.qd);
        let v = twist.fixed_rows::<3>(0).into_owned();
        let w = twist.fixed_rows::<3>(3).into_owned();
        let err = UnitQuaternion::from_rotation_matrix(&(self.reference * pose.rotation.transpose())).scaled_axis();
        let f = cmd.force - v * self.gains.damping;
        let m = err * self.gains.orientation_kp - w * self.gains.orientation_kd;
        let wrench = nalgebra::Vector6::new(f.x, f.y, f.z, m.x, m.y, m.z);
        let tau = jac.transpose() * wrench;
        Ok(tau.iter().zip(&state.qd).map(|(t, qd)| t - self.gains.joint_damping * qd).collect())
    }
}

/// Joint trajectory sampled uniformly in time, linearly interpolated and held
/// at the last sample.
#[derive(Clone, Debug, PartialEq)]
pub struct IdealTrajectory {
    pub dt: f64,
    pub q: Vec<Vec<f64>>,
}

impl IdealTrajectory {
    pub fn duration(&self) -> f64 {
        (self.q.len() - 1) as f64 * self.dt
    }

    /// (q, q̇) at time `t`; q̇ is the slope of the active segment.
    pub fn at(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let last = self.q.len() - 1;
        let u = (t.max(0.0) / self.dt).min(last as f64);
        let k = (u.floor() as usize).min(last.saturating_sub(1));
        if last == 0 || t >= self.duration() {
            return (self.q[last].clone(), vec![0.0; self.q[last].len()]);
        }
        let a = u - k as f64;
        let q = self.q[k].iter().zip(&self.q[k + 1]).map(|(x, y)| x + (y - x) * a).collect();
        let qd = self.q[k].iter().zip(&self.q[k + 1]).map(|(x, y)| (y - x) / self.dt).collect();
        (q, qd)
    }
}

/// Pose on the path at arc length `s`, offset `depth` into the surface, with
/// the fixture's desired orientation.
pub fn path_pose(path: &DesiredPath, s: f64, depth: f64) -> Result<(Vector3<f64>, Rotation3<f64>)> {
    let p = point_at_arc_length(path.points(), path.is_closed(), s);
    let c = constraint_at(path, nearest_index(path, &p), &p)?;
    Ok((p - c.frame.n_hat * depth, desired_orientation(&c.frame)))
}

/// Plans the master-arm trajectory: descend from `start_q` over
/// `approach_time`, then traverse the path at `speed`, `press_depth` into the
/// surface. Sampled at `sample_dt`.
pub fn plan_ideal(model: &RobotModel, path: &DesiredPath, start_q: &[f64], op: &OperatorModel, sample_dt: f64) -> Result<IdealTrajectory> {
    let start = forward_kinematics(model, start_q)?;
    let (first, rot0) = path_pose(path, 0.0, op.press_depth)?;
    let total = path.length();
    let travel = total / op.speed;
    let n = ((op.approach_time + travel) / sample_dt).ceil() as usize;
    let opts = IkOptions::default();
    let mut q = Vec::with_capacity(n + 1);
    let mut prev = start_q.to_vec();
    for k in 0..=n {
        let t = k as f64 * sample_dt;
        let (p, r) = if t < op.approach_time {
            let a = t / op.approach_time;
            let slerp = UnitQuaternion::from_rotation_matrix(&start.rotation).slerp(&UnitQuaternion::from_rotation_matrix(&rot0), a);
            (start.position + (first - start.position) * a, slerp.to_rotation_matrix())
        } else {
            path_pose(path, ((t - op.approach_time) * op.speed).min(total), op.press_depth)?
        };
        let sol = solve_ik(model, &p, &r, &prev, &opts).map_err(|e| match e {
            Error::IkFailure { residual, q, .. } => Error::IkFailure { sample: k, residual, q },
            e => e,
        })?;
        prev = sol.clone();
        q.push(sol);
    }
    Ok(IdealTrajectory { dt: sample_dt, q })
}

/// Damping of the pseudo-inverse that maps hand tremor to joint space, m.
const TREMOR_DAMPING: f64 = 0.01;

/// Master-arm operator: delayed ideal trajectory plus hand tremor.
#[derive(Clone, Debug)]
pub struct BiOperator {
    delay: f64,
    sigma: [f64; 3],
    yield_: f64,
    fade_in: f64,
    tremor: BandLimitedNoise,
}

impl BiOperator {
    pub fn new(op: &OperatorModel, dt: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        op.validate()?;
        let mut r = rng.clone();
        r.set_stream(3);
        Ok(Self {
            delay: op.delay,
            sigma: op.hand_tremor_sigma,
            yield_: op.arm_yield,
            fade_in: op.approach_time,
            tremor: BandLimitedNoise::new(3, 1.0, op.hand_tremor_bandwidth_hz, dt, r)?,
        })
    }

    /// Local arm state at `t` given the remote state; call once per control
    /// period. The tremor frame is taken at the path point nearest the ideal
    /// tool position.
    pub fn local_state(
        &mut self,
        model: &RobotModel,
        path: &DesiredPath,
        ideal: &IdealTrajectory,
        remote: &JointState,
        t: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mut q, mut qd) = self.hand_target(model, path, ideal, t)?;
        for i in 0..q.len().min(remote.q.len()) {
            q[i] += self.yield_ * (remote.q[i] - q[i]);
            qd[i] += self.yield_ * (remote.qd[i] - qd[i]);
        }
        Ok((q, qd))
    }

    fn hand_target(&mut self, model: &RobotModel, path: &DesiredPath, ideal: &IdealTrajectory, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.tremor.advance();
        let t = t - self.delay;
        let (mut q, mut qd) = ideal.at(t);
        if self.sigma.iter().all(|&s| s == 0.0) {
            return Ok((q, qd));
        }
        // Tremor fades in over the approach so the master starts on the remote.
        let (ramp, ramp_rate) = if self.fade_in > 0.0 && t < self.fade_in {
            let u = t.max(0.0) / self.fade_in;
            (u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u) / self.fade_in)
        } else {
            (1.0, 0.0)
        };
        let x = forward_kinematics(model, &q)?.position;
        let f = constraint_at(path, nearest_index(path, &x), &x)?.frame;
        let axes = [f.s_hat, f.n_hat, f.t_hat];
        let mut dx = Vector3::zeros();
        let mut dv = Vector3::zeros();
        for (i, axis) in axes.iter().enumerate() {
            dx += axis * (self.sigma[i] * ramp * self.tremor.value(i));
            dv += axis * (self.sigma[i] * (ramp * self.tremor.rate(i) + ramp_rate * self.tremor.value(i)));
        }
        let jv = jacobian(model, &q)?.fixed_rows::<3>(0).into_owned();
        let jjt = &jv * jv.transpose() + nalgebra::Matrix3::identity() * TREMOR_DAMPING.powi(2);
        let inv = jjt.try_inverse().ok_or_else(|| Error::invalid("master tremor", "singular Jacobian"))?;
        let map = jv.transpose() * inv;
        let (dq, dqd) = (&map * dx, &map * dv);
        for i in 0..q.len() {
            q[i] += dq[i];
            qd[i] += dqd[i];
        }
        Ok((q, qd))
    }
}
