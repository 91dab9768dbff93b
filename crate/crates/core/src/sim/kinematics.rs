// SPDX-License-Identifier: Apache-2.0

use nalgebra::{Isometry3, Matrix6xX, Rotation3, UnitQuaternion, Vector3};

use super::model::RobotModel;
use crate::error::Result;

/// Tool-tip pose in the base frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: Rotation3<f64>,
}

impl From<Isometry3<f64>> for Pose {
    fn from(iso: Isometry3<f64>) -> Self {
        Self { position: iso.translation.vector, rotation: iso.rotation.to_rotation_matrix() }
    }
}

/// Base-frame transforms of every link frame (after the joint rotation).
pub fn link_frames(model: &RobotModel, q: &[f64]) -> Result<Vec<Isometry3<f64>>> {
    model.check_dof("q", q.len())?;
    let mut frames = Vec::with_capacity(q.len());
    let mut acc = Isometry3::identity();
    for (link, &qi) in model.links().iter().zip(q) {
        acc = acc * link.parent_transform * UnitQuaternion::from_axis_angle(&link.axis, qi);
        frames.push(acc);
    }
    Ok(frames)
}

pub fn forward_kinematics(model: &RobotModel, q: &[f64]) -> Result<Pose> {
    let frames = link_frames(model, q)?;
    let last = frames.last().copied().unwrap_or_else(Isometry3::identity);
    let mut pose = Pose::from(last * model.tool());
    // Re-orthonormalize; repeated quaternion products drift by a few ulps.
    pose.rotation.renormalize();
    Ok(pose)
}

/// 6×N geometric Jacobian at the tool tip: linear rows first, then angular.
pub fn jacobian(model: &RobotModel, q: &[f64]) -> Result<Matrix6xX<f64>> {
    let frames = link_frames(model, q)?;
    let tip = (frames[frames.len() - 1] * model.tool()).translation.vector;
    Ok(jacobian_from_frames(model, &frames, &tip))
}

pub(crate) fn jacobian_from_frames(model: &RobotModel, frames: &[Isometry3<f64>], tip: &Vector3<f64>) -> Matrix6xX<f64> {
    let mut j = Matrix6xX::zeros(frames.len());
    for (i, (frame, link)) in frames.iter().zip(model.links()).enumerate() {
        // The joint axis is invariant under its own rotation, so the link frame serves.
        let axis = frame.rotation * link.axis.into_inner();
        let origin = frame.translation.vector;
        let lin = axis.cross(&(tip - origin));
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&axis);
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::model::Link;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix3, Translation3};
    use std::f64::consts::FRAC_PI_2;

    fn single_link(l: f64) -> RobotModel {
        let link = Link {
            name: "l".into(),
            parent_transform: Isometry3::identity(),
            axis: Vector3::z_axis(),
            mass: 1.0,
            com: Vector3::new(l / 2.0, 0.0, 0.0),
            inertia: Matrix3::identity() * 0.01,
        };
        RobotModel::new(
            vec![link],
            Isometry3::from_parts(Translation3::new(l, 0.0, 0.0), UnitQuaternion::identity()),
            Vector3::new(0.0, 0.0, -9.81),
        )
        .unwrap()
    }

    #[test]
    fn zero_configuration_is_product_of_fixed_transforms() {
        let model = RobotModel::default_arm();
        let pose = forward_kinematics(&model, &[0.0; 7]).unwrap();
        let mut expect = Isometry3::identity();
        for link in model.links() {
            expect *= link.parent_transform;
        }
        expect *= model.tool();
        assert_abs_diff_eq!(pose.position, expect.translation.vector, epsilon = 1e-12);
        assert_abs_diff_eq!(pose.rotation.matrix(), expect.rotation.to_rotation_matrix().matrix(), epsilon = 1e-12);
    }

    #[test]
    fn planar_link_rotated_quarter_turn() {
        let pose = forward_kinematics(&single_link(0.7), &[FRAC_PI_2]).unwrap();
        assert_abs_diff_eq!(pose.position, Vector3::new(0.0, 0.7, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn planar_jacobian_at_zero() {
        let j = jacobian(&single_link(0.7), &[0.0]).unwrap();
        assert_abs_diff_eq!(j.column(0).fixed_rows::<3>(0).into_owned(), Vector3::new(0.0, 0.7, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(j.column(0).fixed_rows::<3>(3).into_owned(), Vector3::z(), epsilon = 1e-12);
    }

    #[test]
    fn joint_axis_through_tool_has_no_linear_part() {
        // The last joint of the default arm spins about the tool axis.
        let model = RobotModel::default_arm();
        let q = [0.3, 0.7, -0.2, 1.4, 0.1, 0.9, 0.5];
        let j = jacobian(&model, &q).unwrap();
        assert!(j.column(6).fixed_rows::<3>(0).norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model = RobotModel::default_arm();
        assert!(forward_kinematics(&model, &[0.0; 6]).is_err());
        assert!(jacobian(&model, &[0.0; 8]).is_err());
    }

    #[test]
    fn rotation_is_proper() {
        let model = RobotModel::default_arm();
        let pose = forward_kinematics(&model, &[0.4, -1.1, 2.0, 0.3, -0.8, 1.2, 3.0]).unwrap();
        let r = pose.rotation.matrix();
        assert_abs_diff_eq!(r.transpose() * r, Matrix3::identity(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-12);
    }

    /// Homogeneous 4×4 chain product with Rodrigues rotations, independent of
    /// the isometry code path.
    fn oracle_tip(model: &RobotModel, q: &[f64]) -> nalgebra::Matrix4<f64> {
        let rodrigues = |k: Vector3<f64>, th: f64| {
            let kx = k.cross_matrix();
            Matrix3::identity() + kx * th.sin() + kx * kx * (1.0 - th.cos())
        };
        let mut t = nalgebra::Matrix4::<f64>::identity();
        for (link, &qi) in model.links().iter().zip(q) {
            t *= link.parent_transform.to_homogeneous();
            let mut rot = nalgebra::Matrix4::<f64>::identity();
            rot.fixed_view_mut::<3, 3>(0, 0).copy_from(&rodrigues(link.axis.into_inner(), qi));
            t *= rot;
        }
        t * model.tool().to_homogeneous()
    }

    fn random_three_link(rng: &mut rand_chacha::ChaCha8Rng) -> RobotModel {
        use crate::sim::model::Link;
        use nalgebra::Unit;
        use rand::RngExt;
        let links = (0..3)
            .map(|i| Link {
                name: format!("l{i}"),
                parent_transform: Isometry3::from_parts(
                    Translation3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(0.0..0.5)),
                    UnitQuaternion::from_euler_angles(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ),
                ),
                axis: Unit::new_normalize(Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.1..1.0),
                )),
                mass: 1.0,
                com: Vector3::zeros(),
                inertia: Matrix3::identity() * 0.01,
            })
            .collect();
        RobotModel::new(links, Isometry3::translation(0.05, 0.0, 0.1), Vector3::new(0.0, 0.0, -9.81)).unwrap()
    }

    #[test]
    fn matches_chain_product_oracle() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let model = random_three_link(&mut rng);
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-3.1..3.1)).collect();
            let pose = forward_kinematics(&model, &q).unwrap();
            let t = oracle_tip(&model, &q);
            assert_abs_diff_eq!(pose.position, t.fixed_view::<3, 1>(0, 3).into_owned(), epsilon = 1e-12);
            assert_abs_diff_eq!(*pose.rotation.matrix(), t.fixed_view::<3, 3>(0, 0).into_owned(), epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_rows_match_central_differences() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let model = RobotModel::default_arm();
        for _ in 0..20 {
            let q: Vec<f64> = (0..7).map(|_| rng.random_range(-3.0..3.0)).collect();
            let j = jacobian(&model, &q).unwrap();
            for i in 0..7 {
                let h = 1e-6;
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                let dx =
                    (forward_kinematics(&model, &qp).unwrap().position - forward_kinematics(&model, &qm).unwrap().position) / (2.0 * h);
                assert_abs_diff_eq!(j.fixed_view::<3, 1>(0, i).into_owned(), dx, epsilon = 1e-6);
            }
        }
    }
}
