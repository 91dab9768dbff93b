// SPDX-License-Identifier: Apache-2.0

//! Image clicks to a robot-frame desired path.

use nalgebra::Vector3;

use super::camera::CameraModel;
use super::cloud::OrganizedPointCloud;
use super::normals::normals_integral;
use crate::error::{Error, Result};
use crate::geometry::{resample_polyline, DesiredPath};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClickPathOptions {
    /// Arc-length spacing of the output path, m.
    pub spacing: f64,
    /// Half-size of the integral-normal smoothing window, pixels.
    pub normal_window: usize,
    /// Search radius for a valid pixel around an invalid click, pixels.
    pub click_radius: usize,
}

impl Default for ClickPathOptions {
    fn default() -> Self {
        Self { spacing: 0.002, normal_window: 4, click_radius: 5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClickPath {
    pub path: DesiredPath,
    /// Indices of clicks that had no valid cloud point nearby and were skipped.
    pub rejected: Vec<usize>,
}

pub fn pixel_path_to_3d(
    clicks: &[(f64, f64)],
    cloud: &OrganizedPointCloud,
    camera: &CameraModel,
    opts: &ClickPathOptions,
) -> Result<ClickPath> {
    if clicks.len() < 2 {
        return Err(Error::invalid("clicks", "at least two clicks are required"));
    }
    if !(opts.spacing > 0.0) {
        return Err(Error::invalid("clicks", "spacing must be positive"));
    }
    let mut anchors: Vec<Vector3<f64>> = Vec::with_capacity(clicks.len());
    let mut rejected = Vec::new();
    for (i, &(u, v)) in clicks.iter().enumerate() {
        let hit = (u.is_finite() && v.is_finite() && camera.in_bounds(u, v))
            .then(|| cloud.nearest_valid_pixel(u, v, opts.click_radius))
            .flatten();
        match hit {
            Some((pu, pv)) => {
                let p = cloud.get(pu, pv).expect("valid pixel");
                if anchors.last() != Some(&p) {
                    anchors.push(p);
                }
            }
            None => {
                log::warn!("click {i} at ({u:.1}, {v:.1}) has no valid cloud point within {} px", opts.click_radius);
                rejected.push(i);
            }
        }
    }
    if anchors.len() < 2 {
        if let Some(&index) = rejected.first() {
            let (u, v) = clicks[index];
            return Err(Error::RejectedClick { index, u, v, radius: opts.click_radius });
        }
        return Err(Error::invalid("clicks", "fewer than two distinct usable clicks"));
    }

    let points_cam = resample_polyline(&anchors, opts.spacing);
    let normal_map = normals_integral(cloud, opts.normal_window)?;
    let normal_at = |p: &Vector3<f64>| -> Option<Vector3<f64>> {
        let (u, v) = camera.project(p)?;
        let r = opts.click_radius as i64;
        let (cu, cv) = (u.round() as i64, v.round() as i64);
        let mut best: Option<(i64, Vector3<f64>)> = None;
        for dv in -r..=r {
            for du in -r..=r {
                let (x, y) = (cu + du, cv + dv);
                if x < 0 || y < 0 || x as usize >= cloud.width() || y as usize >= cloud.height() {
                    continue;
                }
                if let Some(n) = normal_map[cloud.index(x as usize, y as usize)] {
                    let d2 = du * du + dv * dv;
                    if best.is_none_or(|(b, _)| d2 < b) {
                        best = Some((d2, n));
                    }
                }
            }
        }
        best.map(|b| b.1)
    };
    let mut normals: Vec<Option<Vector3<f64>>> = points_cam.iter().map(normal_at).collect();
    // Fill holes from the nearest neighbor along the path.
    let known: Vec<usize> = (0..normals.len()).filter(|&i| normals[i].is_some()).collect();
    if known.is_empty() {
        return Err(Error::NoNormal("no surface normal available along the clicked path"));
    }
    for i in 0..normals.len() {
        if normals[i].is_none() {
            let j = *known.iter().min_by_key(|&&k| k.abs_diff(i)).expect("non-empty");
            normals[i] = normals[j];
        }
    }

    let points = points_cam.iter().map(|p| camera.to_robot_point(p)).collect();
    let normals = normals.into_iter().map(|n| camera.to_robot_vector(&n.expect("filled")).normalize()).collect();
    Ok(ClickPath { path: DesiredPath::new(points, normals, false)?, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::synth::{synth_cloud, Scene};
    use nalgebra::{Isometry3, Translation3, UnitQuaternion};
    use std::f64::consts::PI;

    fn overhead_camera() -> CameraModel {
        // 1 m above a table at z = 0, looking straight down.
        let rot = UnitQuaternion::from_euler_angles(PI, 0.0, 0.0);
        CameraModel::kinect(Isometry3::from_parts(Translation3::new(0.55, 0.0, 1.0), rot))
    }

    fn table() -> Scene {
        Scene::Plane { point: Vector3::zeros(), normal: Vector3::z() }
    }

    #[test]
    fn tabletop_line_is_straight_with_table_normal() {
        let cam = overhead_camera();
        let cloud = synth_cloud(&table(), &cam, 0.0, 0).unwrap();
        let a = cam.project_robot_point(&Vector3::new(0.45, -0.05, 0.0)).unwrap();
        let b = cam.project_robot_point(&Vector3::new(0.65, 0.05, 0.0)).unwrap();
        let out = pixel_path_to_3d(&[a, b], &cloud, &cam, &ClickPathOptions::default()).unwrap();
        assert!(out.rejected.is_empty());
        let pts = out.path.points();
        let dir = (pts[pts.len() - 1] - pts[0]).normalize();
        for (p, n) in pts.iter().zip(out.path.normals()) {
            assert!(p.z.abs() < 1e-9);
            assert!((p - pts[0]).cross(&dir).norm() < 1e-9);
            assert!((n - Vector3::z()).norm() < 1e-9);
        }
        for w in pts.windows(2) {
            let d = (w[1] - w[0]).norm();
            assert!((d - 0.002).abs() <= 0.2 * 0.002, "spacing {d}");
        }
    }

    #[test]
    fn identity_extrinsics_keep_camera_coordinates() {
        let cam = CameraModel::kinect(Isometry3::identity());
        let scene = Scene::Plane { point: Vector3::new(0.0, 0.0, 1.0), normal: Vector3::z() };
        let cloud = synth_cloud(&scene, &cam, 0.0, 0).unwrap();
        let out = pixel_path_to_3d(&[(100.0, 100.0), (300.0, 200.0)], &cloud, &cam, &ClickPathOptions::default()).unwrap();
        let first = out.path.points()[0];
        assert!((first - cloud.get(100, 100).unwrap()).norm() < 1e-12);
        assert!((out.path.normals()[0] - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-9);
    }

    #[test]
    fn great_circle_clicks_stay_on_ball() {
        let cam = overhead_camera();
        let center = Vector3::new(0.55, 0.0, 0.1);
        let radius = 0.1;
        let cloud = synth_cloud(&Scene::Sphere { center, radius }, &cam, 0.0, 0).unwrap();
        // Arc over the top of the ball in the x-z plane, clicked every 0.1 rad.
        let clicks: Vec<(f64, f64)> = (-8..=8)
            .map(|k| {
                let a = 0.1 * k as f64;
                let p = center + Vector3::new(a.sin(), 0.0, a.cos()) * radius;
                cam.project_robot_point(&p).unwrap()
            })
            .collect();
        let out = pixel_path_to_3d(&clicks, &cloud, &cam, &ClickPathOptions::default()).unwrap();
        for p in out.path.points() {
            let off = ((p - center).norm() - radius).abs();
            assert!(off < 0.002, "{off}");
        }
        // Normals point out of the ball.
        for (p, n) in out.path.points().iter().zip(out.path.normals()) {
            assert!(n.dot(&(p - center).normalize()) > 0.95);
        }
    }

    #[test]
    fn clicks_off_the_object_are_rejected_by_index() {
        let cam = overhead_camera();
        let center = Vector3::new(0.55, 0.0, 0.1);
        let cloud = synth_cloud(&Scene::Sphere { center, radius: 0.1 }, &cam, 0.0, 0).unwrap();
        let on = cam.project_robot_point(&(center + Vector3::new(0.0, 0.0, 0.1))).unwrap();
        let on2 = cam.project_robot_point(&(center + Vector3::new(0.05, 0.0, 0.0866))).unwrap();
        let out = pixel_path_to_3d(&[on, (2.0, 2.0), on2], &cloud, &cam, &ClickPathOptions::default()).unwrap();
        assert_eq!(out.rejected, vec![1]);
        let err = pixel_path_to_3d(&[on, (2.0, 2.0)], &cloud, &cam, &ClickPathOptions::default()).unwrap_err();
        assert!(matches!(err, Error::RejectedClick { index: 1, .. }));
        assert!(pixel_path_to_3d(&[on], &cloud, &cam, &ClickPathOptions::default()).is_err());
    }
}
