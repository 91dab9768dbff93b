// SPDX-License-Identifier: Apache-2.0

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::contact::{contact_force, Contact, ContactParams, SurfaceModel};
use super::dynamics::{bias_torque, mass_matrix};
use super::kinematics::{jacobian_from_frames, link_frames, Pose};
use super::model::{JointState, RobotModel};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    SemiImplicitEuler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// s
    pub dt: f64,
    pub integrator: Integrator,
    /// Viscous friction at every joint, N m s/rad.
    pub joint_damping: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 1e-3, integrator: Integrator::SemiImplicitEuler, joint_damping: 0.1 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(Error::invalid("sim config", format!("dt must be in (0, 0.01], got {}", self.dt)));
        }
        if !(self.joint_damping >= 0.0) {
            return Err(Error::invalid("sim config", "joint damping must be non-negative"));
        }
        Ok(())
    }
}

/// What the tool tip experienced during one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactSample {
    pub tool: Pose,
    pub tool_velocity: Vector3<f64>,
    pub contact: Contact,
}

impl ContactSample {
    pub fn normal_force(&self) -> f64 {
        self.contact.normal_force
    }

    pub fn in_contact(&self) -> bool {
        self.contact.in_contact
    }
}

/// Advance the plant by one `cfg.dt` under command torque `tau`.
///
/// Contact is evaluated at the pre-step state and applied at the tool tip.
pub fn step(
    model: &RobotModel,
    state: &JointState,
    tau: &[f64],
    surface: &SurfaceModel,
    params: &ContactParams,
    cfg: &SimConfig,
) -> Result<(JointState, ContactSample)> {
    let n = model.dof();
    model.check_dof("q", state.q.len())?;
    model.check_dof("qd", state.qd.len())?;
    model.check_dof("tau", tau.len())?;

    let frames = link_frames(model, &state.q)?;
    let tip = frames[n - 1] * model.tool();
    let tip_pos = tip.translation.vector;
    let jac = jacobian_from_frames(model, &frames, &tip_pos);
    let qd = DVector::from_column_slice(&state.qd);
    let twist = &jac * &qd;
    let tip_vel = Vector3::new(twist[0], twist[1], twist[2]);

    let contact = contact_force(surface, &tip_pos, &tip_vel, params);

    let mass = mass_matrix(model, &state.q)?;
    let bias = DVector::from_vec(bias_torque(model, &state.q, &state.qd)?);
    let ext = jac.fixed_rows::<3>(0).transpose() * contact.force;
    let rhs = DVector::from_column_slice(tau) + ext - bias - &qd * cfg.joint_damping;

    let chol =
        mass.cholesky().ok_or_else(|| Error::SimulationFault { step: 0, diagnostic: "mass matrix is not positive definite".into() })?;
    let qdd = chol.solve(&rhs);

    let mut next = state.clone();
    for i in 0..n {
        next.qd[i] += qdd[i] * cfg.dt;
        next.q[i] += next.qd[i] * cfg.dt;
    }
    if !next.is_finite() {
        return Err(Error::SimulationFault {
            step: 0,
            diagnostic: format!("non-finite state after step: q = {:?}, qd = {:?}", next.q, next.qd),
        });
    }
    let sample = ContactSample { tool: Pose::from(tip), tool_velocity: tip_vel, contact };
    Ok((next, sample))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::dynamics::gravity_torque;
    use crate::sim::model::Link;
    use nalgebra::{Isometry3, Matrix3, Translation3, UnitQuaternion};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn far_plane() -> SurfaceModel {
        SurfaceModel::plane(Vector3::new(0.0, 0.0, -10.0), Vector3::z()).unwrap()
    }

    fn pendulum() -> RobotModel {
        let link = Link {
            name: "p".into(),
            parent_transform: Isometry3::identity(),
            axis: -Vector3::y_axis(),
            mass: 1.0,
            com: Vector3::new(0.5, 0.0, 0.0),
            inertia: Matrix3::from_diagonal(&Vector3::new(1e-3, 1e-3, 1e-3)),
        };
        RobotModel::new(
            vec![link],
            Isometry3::from_parts(Translation3::new(0.5, 0.0, 0.0), UnitQuaternion::identity()),
            Vector3::new(0.0, 0.0, -9.81),
        )
        .unwrap()
    }

    fn kinetic(model: &RobotModel, s: &JointState) -> f64 {
        let m = mass_matrix(model, &s.q).unwrap();
        let v = DVector::from_column_slice(&s.qd);
        0.5 * v.dot(&(&m * &v))
    }

    #[test]
    fn exact_gravity_compensation_holds_still() {
        let model = RobotModel::default_arm();
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let q: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut s = JointState::at_rest(q.clone());
            for _ in 0..1000 {
                let tau = gravity_torque(&model, &s.q).unwrap();
                s = step(&model, &s, &tau, &far_plane(), &ContactParams::default(), &cfg).unwrap().0;
            }
            let drift = s.q.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(drift < 1e-6, "drift {drift}");
        }
    }

    #[test]
    fn single_step_under_compensation_is_exact() {
        let model = RobotModel::default_arm();
        let s = JointState::at_rest(vec![0.2, 0.9, -0.4, 1.3, 0.3, 0.5, -0.1]);
        let tau = gravity_torque(&model, &s.q).unwrap();
        let (next, sample) = step(&model, &s, &tau, &far_plane(), &ContactParams::default(), &SimConfig::default()).unwrap();
        for (a, b) in next.q.iter().zip(&s.q) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(!sample.in_contact());
    }

    #[test]
    fn free_motion_conserves_kinetic_energy() {
        let model = RobotModel::default_arm().with_gravity(Vector3::zeros());
        let cfg = SimConfig { joint_damping: 0.0, ..SimConfig::default() };
        // Joint rates at teleoperation scale (tool speed on the order of 0.1 m/s);
        // semi-implicit Euler loses energy in proportion to dt times speed.
        let qd = vec![0.075, -0.05, 0.1, 0.025, -0.125, 0.075, 0.05];
        let mut s = JointState::new(vec![0.1, 0.8, 0.0, 1.2, 0.0, 0.6, 0.0], qd).unwrap();
        let tip_speed = (crate::sim::jacobian(&model, &s.q).unwrap() * DVector::from_column_slice(&s.qd)).fixed_rows::<3>(0).norm();
        assert!(tip_speed > 0.05 && tip_speed < 0.2, "tip speed {tip_speed}");
        let e0 = kinetic(&model, &s);
        let zero = [0.0; 7];
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            s = step(&model, &s, &zero, &far_plane(), &ContactParams::default(), &cfg).unwrap().0;
            worst = worst.max((kinetic(&model, &s) - e0).abs() / e0);
        }
        assert!(worst < 1e-3, "relative kinetic-energy drift {worst}");
    }

    fn pendulum_period(dt: f64) -> f64 {
        let model = pendulum();
        let cfg = SimConfig { dt, joint_damping: 0.0, ..SimConfig::default() };
        let mut s = JointState::at_rest(vec![0.0]);
        let mut t = 0.0;
        let mut crossings = Vec::new();
        let mut prev = s.qd[0];
        while crossings.len() < 3 && t < 10.0 {
            s = step(&model, &s, &[0.0], &far_plane(), &ContactParams::default(), &cfg).unwrap().0;
            t += dt;
            // Turning points: qd changes sign.
            if prev < 0.0 && s.qd[0] >= 0.0 || prev > 0.0 && s.qd[0] <= 0.0 {
                crossings.push(t);
            }
            prev = s.qd[0];
        }
        2.0 * (crossings[2] - crossings[1])
    }

    #[test]
    fn pendulum_period_matches_fine_reference() {
        let coarse = pendulum_period(1e-3);
        let fine = pendulum_period(1e-5);
        assert!((coarse - fine).abs() / fine < 0.01, "{coarse} vs {fine}");
    }

    #[test]
    fn identical_inputs_are_bit_identical() {
        let model = RobotModel::default_arm();
        let s = JointState::new(vec![0.1; 7], vec![0.2; 7]).unwrap();
        let tau = vec![0.5; 7];
        let a = step(&model, &s, &tau, &far_plane(), &ContactParams::default(), &SimConfig::default()).unwrap();
        let b = step(&model, &s, &tau, &far_plane(), &ContactParams::default(), &SimConfig::default()).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn blow_up_is_reported_as_fault() {
        let model = RobotModel::default_arm();
        let s = JointState::at_rest(vec![0.1; 7]);
        let tau = vec![f64::INFINITY; 7];
        assert!(matches!(
            step(&model, &s, &tau, &far_plane(), &ContactParams::default(), &SimConfig::default()),
            Err(Error::SimulationFault { .. })
        ));
    }

    #[test]
    fn config_bounds() {
        assert!(SimConfig { dt: 0.02, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { dt: 0.0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig::default().validate().is_ok());
    }
}
