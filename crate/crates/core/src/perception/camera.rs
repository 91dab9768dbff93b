// SPDX-License-Identifier: Apache-2.0

use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics plus the camera-to-robot extrinsic transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub cam_to_robot: Isometry3<f64>,
}

impl CameraModel {
    /// 640×480 depth camera with Kinect-like intrinsics.
    pub fn kinect(cam_to_robot: Isometry3<f64>) -> Self {
        Self { fx: 525.0, fy: 525.0, cx: 319.5, cy: 239.5, width: 640, height: 480, cam_to_robot }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera", "focal lengths and image size must be positive"));
        }
        let r = self.cam_to_robot.rotation.to_rotation_matrix();
        let err = (r.matrix().transpose() * r.matrix() - nalgebra::Matrix3::identity()).amax();
        if err > 1e-9 {
            return Err(Error::invalid("camera", "extrinsic rotation is not orthonormal"));
        }
        Ok(())
    }

    /// Viewing ray through pixel (u, v), scaled so its z component is 1.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Pixel coordinates of a camera-frame point, if it lies in front of the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        (p.z > 0.0).then(|| (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn project_robot_point(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        let cam = self.cam_to_robot.inverse_transform_point(&Point3::from(*p)).coords;
        self.project(&cam)
    }

    pub fn to_robot_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (self.cam_to_robot * Point3::from(*p)).coords
    }

    pub fn to_robot_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.cam_to_robot.rotation * v
    }

    pub fn in_bounds(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }
}
