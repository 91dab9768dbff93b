// SPDX-License-Identifier: Apache-2.0

//! Recursive Newton–Euler inverse dynamics and the quantities derived from it.

use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector3};

use super::model::RobotModel;
use crate::error::Result;

/// Joint torques for (q, qd, qdd) under the model's gravity.
pub fn inverse_dynamics(model: &RobotModel, q: &[f64], qd: &[f64], qdd: &[f64]) -> Result<Vec<f64>> {
    model.check_dof("q", q.len())?;
    model.check_dof("qd", qd.len())?;
    model.check_dof("qdd", qdd.len())?;
    Ok(rnea(model, q, qd, qdd, &model.gravity()))
}

/// Generalized gravity load g(q): inverse dynamics at rest.
pub fn gravity_torque(model: &RobotModel, q: &[f64]) -> Result<Vec<f64>> {
    model.check_dof("q", q.len())?;
    let zero = vec![0.0; q.len()];
    Ok(rnea(model, q, &zero, &zero, &model.gravity()))
}

/// Joint-space inertia matrix, assembled column by column from inverse dynamics
/// with unit acceleration, zero velocity and zero gravity.
pub fn mass_matrix(model: &RobotModel, q: &[f64]) -> Result<DMatrix<f64>> {
    model.check_dof("q", q.len())?;
    let n = q.len();
    let zero = vec![0.0; n];
    let mut unit = vec![0.0; n];
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        unit[j] = 1.0;
        let col = rnea(model, q, &zero, &unit, &Vector3::zeros());
        m.set_column(j, &DVector::from_vec(col));
        unit[j] = 0.0;
    }
    Ok(m)
}

/// Coriolis, centrifugal and gravity terms C(q, qd) qd + g(q).
pub fn bias_torque(model: &RobotModel, q: &[f64], qd: &[f64]) -> Result<Vec<f64>> {
    model.check_dof("q", q.len())?;
    model.check_dof("qd", qd.len())?;
    let zero = vec![0.0; q.len()];
    Ok(rnea(model, q, qd, &zero, &model.gravity()))
}

fn rnea(model: &RobotModel, q: &[f64], qd: &[f64], qdd: &[f64], gravity: &Vector3<f64>) -> Vec<f64> {
    let links = model.links();
    let n = links.len();

    // Per link, expressed in its own frame.
    let mut rot = Vec::with_capacity(n); // parent -> link rotation
    let mut omega = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut force = Vec::with_capacity(n);
    let mut moment = Vec::with_capacity(n);

    let mut w_prev = Vector3::zeros();
    let mut dw_prev = Vector3::zeros();
    // A fictitious upward acceleration of the base stands in for gravity.
    let mut a_prev = -gravity;

    for (i, link) in links.iter().enumerate() {
        let r: Matrix3<f64> =
            (link.parent_transform.rotation * UnitQuaternion::from_axis_angle(&link.axis, q[i])).to_rotation_matrix().into_inner();
        let rt = r.transpose();
        let p = link.parent_transform.translation.vector;
        let z = link.axis.into_inner();

        let w_in = rt * w_prev;
        let w = w_in + z * qd[i];
        let dw = rt * dw_prev + w_in.cross(&(z * qd[i])) + z * qdd[i];
        let a = rt * (a_prev + dw_prev.cross(&p) + w_prev.cross(&w_prev.cross(&p)));
        let a_c = a + dw.cross(&link.com) + w.cross(&w.cross(&link.com));

        force.push(a_c * link.mass);
        moment.push(link.inertia * dw + w.cross(&(link.inertia * w)));
        rot.push(r);
        omega.push(w);
        alpha.push(dw);

        w_prev = w;
        dw_prev = dw;
        a_prev = a;
    }

    let mut tau = vec![0.0; n];
    let mut f_next = Vector3::zeros();
    let mut n_next = Vector3::zeros();
    for i in (0..n).rev() {
        let link = &links[i];
        let (f_child, n_child, p_child) = if i + 1 < n {
            let r = rot[i + 1];
            (r * f_next, r * n_next, links[i + 1].parent_transform.translation.vector)
        } else {
            (Vector3::zeros(), Vector3::zeros(), Vector3::zeros())
        };
        let f = force[i] + f_child;
        let nm = moment[i] + n_child + link.com.cross(&force[i]) + p_child.cross(&f_child);
        tau[i] = nm.dot(&link.axis);
        f_next = f;
        n_next = nm;
    }
    tau
}
