// SPDX-License-Identifier: Apache-2.0

//! Closed-loop trials: operator, fixture controller and plant at 1 kHz.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ik::{solve_ik, IkOptions};
use super::mode::Mode;
use super::operator::{
    path_pose, plan_ideal, BiOperator, GamepadCommand, GamepadController, GamepadGains, IdealTrajectory, OperatorModel, UniOperator,
};
use crate::control::{bilateral_torque, vf_step, ControlState, GainSet, VfOutput, ACCEL_CUTOFF_HZ};
use crate::error::{Error, Result};
use crate::geometry::{nearest_index, point_at_arc_length, project_onto_polyline, DesiredPath};
use crate::metrics::{Sample, TrialMeta, TrialRecord, TrialStatus, RECORD_RATE_HZ};
use crate::perception::{pixel_path_to_3d, synth_cloud, CameraModel, ClickPathOptions, Scene};
use crate::sim::{forward_kinematics, step, turntable_step, ContactParams, ContactSample, JointState, RobotModel, SimConfig, SurfaceModel};

/// Where the fixture's path comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum VfPathSource {
    GroundTruth,
    Fixed(DesiredPath),
    /// Operator clicks along the pattern in a synthetic depth image.
    Clicks(ClickSetup),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClickSetup {
    pub camera: CameraModel,
    pub scene: Scene,
    /// Depth noise of the synthetic sensor, m.
    pub depth_noise: f64,
    pub options: ClickPathOptions,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EndCondition {
    /// Progress along the ground truth within `tolerance` of its end (one lap
    /// for closed paths), m.
    PathEnd { tolerance: f64 },
    /// Accumulated turntable rotation, rad.
    TurntableAngle { angle: f64 },
}

/// Everything a trial needs besides mode and seed.
#[derive(Clone, Debug)]
pub struct Task {
    pub name: String,
    pub model: RobotModel,
    pub surface: SurfaceModel,
    pub contact: ContactParams,
    pub sim: SimConfig,
    pub gains: GainSet,
    pub gamepad: GamepadGains,
    pub operator: OperatorModel,
    pub ground_truth: DesiredPath,
    pub vf_path: VfPathSource,
    pub start_q: Vec<f64>,
    pub end: EndCondition,
    /// s
    pub timeout: f64,
    /// Master-arm trajectory; planned by [`Task::prepare`].
    pub ideal: Option<IdealTrajectory>,
}

/// Rest pose with the tool `height` above the start of `path`, aligned with
/// the fixture's desired orientation there.
pub fn start_above_path(model: &RobotModel, path: &DesiredPath, height: f64, seed_q: &[f64]) -> Result<Vec<f64>> {
    let (p, r) = path_pose(path, 0.0, -height)?;
    solve_ik(model, &p, &r, seed_q, &IkOptions::default())
}

/// Elbow-up, tool-down seed for the bundled arm.
pub const SEED_POSE: [f64; 7] = [0.0, 0.6, 0.0, 1.6, 0.0, 0.9, 0.0];

impl Task {
    /// Validates the task and plans the master-arm trajectory.
    pub fn prepare(&mut self) -> Result<()> {
        self.surface.validate()?;
        self.contact.validate()?;
        self.sim.validate()?;
        self.gains.validate()?;
        self.operator.validate()?;
        self.model.check_dof("start pose", self.start_q.len())?;
        if !(self.timeout > 0.0) {
            return Err(Error::invalid("timeout", "must be positive"));
        }
        self.ideal = Some(plan_ideal(&self.model, &self.ground_truth, &self.start_q, &self.operator, 0.02)?);
        Ok(())
    }

    /// The fixture path for one trial; click paths depend on the seed.
    pub fn vf_path_for(&self, seed: u64) -> Result<DesiredPath> {
        match &self.vf_path {
            VfPathSource::GroundTruth => Ok(self.ground_truth.clone()),
            VfPathSource::Fixed(p) => Ok(p.clone()),
            VfPathSource::Clicks(c) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(4);
                let cloud = synth_cloud(&c.scene, &c.camera, c.depth_noise, seed)?;
                let clicks =
                    simulated_clicks(&self.ground_truth, &c.camera, self.operator.click_spacing, self.operator.click_jitter_px, &mut rng)?;
                let out = pixel_path_to_3d(&clicks, &cloud, &c.camera, &c.options)?;
                Ok(out.path)
            }
        }
    }
}

/// Pixels an operator would click tracing `gt` every `spacing` meters.
pub fn simulated_clicks(
    gt: &DesiredPath,
    camera: &CameraModel,
    spacing: f64,
    jitter_px: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, f64)>> {
    let total = gt.length();
    let n = ((total / spacing).ceil() as usize).max(1);
    let count = n + 1;
    let jitter = Normal::new(0.0, jitter_px).map_err(|e| Error::invalid("click jitter", e.to_string()))?;
    (0..count)
        .map(|k| {
            let p = point_at_arc_length(gt.points(), gt.is_closed(), total * k as f64 / n as f64);
            let (u, v) =
                camera.project_robot_point(&p).ok_or_else(|| Error::invalid("clicks", format!("path point {p:?} is behind the camera")))?;
            let (du, dv) = if jitter_px > 0.0 { (jitter.sample(rng), jitter.sample(rng)) } else { (0.0, 0.0) };
            Ok((u + du, v + dv))
        })
        .collect()
}

/// What the operator feeds the remote arm in one control period.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorInput {
    None,
    Gamepad(GamepadCommand),
    Master { q: Vec<f64>, qd: Vec<f64> },
}

/// One control period's result.
#[derive(Clone, Debug)]
pub struct LoopStep {
    /// Contact and tool state at the start of the period.
    pub sample: ContactSample,
    pub vf: VfOutput,
}

/// The remote side: plant, fixture controller and gamepad impedance.
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    pub model: RobotModel,
    pub surface: SurfaceModel,
    pub contact: ContactParams,
    pub sim: SimConfig,
    pub gains: GainSet,
    pub vf_path: DesiredPath,
    pub ctl: ControlState,
    pub gamepad: GamepadController,
    pub state: JointState,
    pub steps: usize,
    turntable_travel: f64,
}

impl ClosedLoop {
    pub fn new(task: &Task, vf_path: DesiredPath, vf_enabled: bool) -> Result<Self> {
        let start = forward_kinematics(&task.model, &task.start_q)?;
        Ok(Self {
            model: task.model.clone(),
            surface: task.surface.clone(),
            contact: task.contact,
            sim: task.sim.clone(),
            gains: task.gains.clone(),
            vf_path,
            ctl: ControlState::new(task.sim.dt, ACCEL_CUTOFF_HZ, vf_enabled)?,
            gamepad: GamepadController::new(task.gamepad.clone(), start.rotation),
            state: JointState::at_rest(task.start_q.clone()),
            steps: 0,
            turntable_travel: 0.0,
        })
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.sim.dt
    }

    pub fn tool_position(&self) -> Result<Vector3<f64>> {
        Ok(forward_kinematics(&self.model, &self.state.q)?.position)
    }

    /// Total turntable rotation so far, rad.
    pub fn turntable_travel(&self) -> f64 {
        self.turntable_travel
    }

    /// Restart from `q` at rest with a fresh orientation reference.
    pub fn reset(&mut self, q: Vec<f64>) -> Result<()> {
        let pose = forward_kinematics(&self.model, &q)?;
        self.gamepad = GamepadController::new(self.gamepad.gains().clone(), pose.rotation);
        self.state = JointState::at_rest(q);
        self.ctl.reset();
        self.steps = 0;
        self.turntable_travel = 0.0;
        if let SurfaceModel::Turntable(t) = &mut self.surface {
            t.angle = 0.0;
            t.omega = 0.0;
        }
        Ok(())
    }

    /// Advance one period. Faults carry the global step index.
    pub fn step(&mut self, input: &OperatorInput) -> Result<LoopStep> {
        let n = self.model.dof();
        let (tau_l, extra) = match input {
            OperatorInput::None => (vec![0.0; n], None),
            OperatorInput::Gamepad(cmd) => (vec![0.0; n], Some(self.gamepad.torque(&self.model, &self.state, cmd, self.sim.dt)?)),
            OperatorInput::Master { q, qd } => {
                let t = bilateral_torque(&self.state.q, &self.state.qd, q, qd, &self.gains.bilateral)?;
                (t.into_iter().map(|x| -x).collect(), None)
            }
        };
        let vf = vf_step(&self.model, &self.state, &self.vf_path, &self.gains, &mut self.ctl, &tau_l)?;
        let mut tau = vf.tau.clone();
        if let Some(extra) = extra {
            for (t, e) in tau.iter_mut().zip(extra) {
                *t += e;
            }
        }
        let (next, sample) = step(&self.model, &self.state, &tau, &self.surface, &self.contact, &self.sim).map_err(|e| match e {
            Error::SimulationFault { diagnostic, .. } => Error::SimulationFault { step: self.steps as u64, diagnostic },
            e => e,
        })?;
        if let SurfaceModel::Turntable(t) = &self.surface {
            let before = t.angle;
            turntable_step(&mut self.surface, &(-sample.contact.force), &sample.tool.position, self.sim.dt)?;
            if let SurfaceModel::Turntable(t) = &self.surface {
                let mut d = t.angle - before;
                if d > std::f64::consts::PI {
                    d -= std::f64::consts::TAU;
                } else if d < -std::f64::consts::PI {
                    d += std::f64::consts::TAU;
                }
                self.turntable_travel += d;
            }
        }
        self.state = next;
        self.steps += 1;
        Ok(LoopStep { sample, vf })
    }
}

/// Unwrapped progress along a (possibly closed) polyline.
#[derive(Clone, Debug, Default)]
pub(crate) struct Progress {
    last: Option<f64>,
    total: f64,
}

impl Progress {
    pub(crate) fn update(&mut self, path: &DesiredPath, x: &Vector3<f64>) -> f64 {
        let s = project_onto_polyline(path.points(), path.is_closed(), x).arc_length;
        match self.last {
            None => self.total = s,
            Some(prev) => {
                let mut d = s - prev;
                if path.is_closed() {
                    let l = path.length();
                    if d > l / 2.0 {
                        d -= l;
                    } else if d < -l / 2.0 {
                        d += l;
                    }
                }
                self.total += d;
            }
        }
        self.last = Some(s);
        self.total
    }
}

/// Runs one trial. Setup problems (bad task, unreachable path, unusable
/// clicks) are errors; a simulation fault ends the trial with a `Faulted`
/// status and the samples recorded so far.
pub fn run_trial(task: &Task, mode: Mode, seed: u64) -> Result<TrialRecord> {
    let vf_path = if mode.vf() { task.vf_path_for(seed)? } else { task.ground_truth.clone() };
    let mut sim = ClosedLoop::new(task, vf_path, mode.vf())?;
    let dt = task.sim.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planned;
    let ideal = match &task.ideal {
        Some(i) => i,
        None => {
            planned = plan_ideal(&task.model, &task.ground_truth, &task.start_q, &task.operator, 0.02)?;
            &planned
        }
    };
    let mut uni = UniOperator::new(&task.operator, !mode.vf(), dt, &mut rng)?;
    let mut bi = BiOperator::new(&task.operator, dt, &mut rng)?;
    let record_every = ((1.0 / RECORD_RATE_HZ) / dt).round().max(1.0) as usize;
    let max_steps = (task.timeout / dt).round() as usize;
    let gt = &task.ground_truth;
    let mut progress = Progress::default();
    let mut touched = false;
    let mut samples = Vec::with_capacity(max_steps / record_every + 1);
    let mut status = TrialStatus::Timeout;

    while sim.steps < max_steps {
        let t = sim.time();
        let x = sim.tool_position()?;
        let input = if mode.bilateral() {
            let (q, qd) = bi.local_state(&task.model, gt, ideal, &sim.state, t)?;
            OperatorInput::Master { q, qd }
        } else {
            OperatorInput::Gamepad(uni.command(&x, gt))
        };
        let q_now = sim.state.q.clone();
        let k = sim.steps;
        let out = match sim.step(&input) {
            Ok(o) => o,
            Err(Error::SimulationFault { step, diagnostic }) => {
                status = TrialStatus::Faulted { step, diagnostic };
                break;
            }
            Err(e) => return Err(e),
        };
        touched |= out.sample.in_contact();
        if k % record_every == 0 {
            let x = out.sample.tool.position;
            samples.push(Sample {
                t,
                q: q_now,
                x,
                f_n: out.sample.normal_force(),
                in_contact: out.sample.in_contact(),
                index: nearest_index(gt, &x),
            });
            let s = progress.update(gt, &x);
            let done = match task.end {
                EndCondition::PathEnd { tolerance } => touched && s >= gt.length() - tolerance,
                EndCondition::TurntableAngle { angle } => sim.turntable_travel().abs() >= angle,
            };
            if done {
                status = TrialStatus::Completed;
                break;
            }
        }
    }
    let duration = samples.last().map_or(0.0, |s| s.t);
    Ok(TrialRecord { meta: TrialMeta { mode, scenario: task.name.clone(), seed, status, duration }, samples })
}
