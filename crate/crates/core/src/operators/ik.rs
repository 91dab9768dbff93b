// SPDX-License-Identifier: Apache-2.0

//! Damped least-squares inverse kinematics.

use nalgebra::{DMatrix, DVector, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::sim::{forward_kinematics, jacobian, RobotModel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkOptions {
    pub max_iterations: usize,
    /// Damping λ in Jᵀ(JJᵀ + λ²I)⁻¹.
    pub damping: f64,
    /// Converged when position error (m) and rotation error (rad) are both below this.
    pub tolerance: f64,
    /// Largest joint step per iteration, rad.
    pub max_step: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self { max_iterations: 500, damping: 0.02, tolerance: 1e-7, max_step: 0.2 }
    }
}

fn pose_error(model: &RobotModel, q: &[f64], p: &Vector3<f64>, r: &Rotation3<f64>) -> Result<DVector<f64>> {
    let pose = forward_kinematics(model, q)?;
    let ep = p - pose.position;
    let er = UnitQuaternion::from_rotation_matrix(&(r * pose.rotation.transpose())).scaled_axis();
    Ok(DVector::from_column_slice(&[ep.x, ep.y, ep.z, er.x, er.y, er.z]))
}

/// Joint angles placing the tool at (`p`, `r`), starting from `q0`.
pub fn solve_ik(model: &RobotModel, p: &Vector3<f64>, r: &Rotation3<f64>, q0: &[f64], opts: &IkOptions) -> Result<Vec<f64>> {
    model.check_dof("ik seed", q0.len())?;
    let mut q = q0.to_vec();
    let lambda2 = opts.damping * opts.damping;
    let mut e = pose_error(model, &q, p, r)?;
    for _ in 0..opts.max_iterations {
        if e.fixed_rows::<3>(0).norm() < opts.tolerance && e.fixed_rows::<3>(3).norm() < opts.tolerance {
            return Ok(q);
        }
        let j = DMatrix::from_iterator(6, q.len(), jacobian(model, &q)?.iter().copied());
        let jjt = &j * j.transpose() + DMatrix::identity(6, 6) * lambda2;
        let y = jjt.cholesky().expect("damped JJᵀ is positive definite").solve(&e);
        let mut dq = j.transpose() * y;
        let norm = dq.norm();
        if norm > opts.max_step {
            dq *= opts.max_step / norm;
        }
        for (qi, d) in q.iter_mut().zip(dq.iter()) {
            *qi += d;
        }
        e = pose_error(model, &q, p, r)?;
    }
    if e.fixed_rows::<3>(0).norm() < opts.tolerance && e.fixed_rows::<3>(3).norm() < opts.tolerance {
        return Ok(q);
    }
    Err(Error::IkFailure { sample: 0, residual: e.norm(), q })
}
