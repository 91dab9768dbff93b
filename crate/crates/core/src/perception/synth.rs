// SPDX-License-Identifier: Apache-2.0

//! Ray-cast test scenes through a pinhole camera.

use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::camera::CameraModel;
use super::cloud::OrganizedPointCloud;
use crate::error::{Error, Result};

/// Analytic scene in the robot frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scene {
    Plane {
        point: Vector3<f64>,
        normal: Vector3<f64>,
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    /// A table plane with a raised disk (the turntable top) lying on it.
    TableWithTurntable {
        table_point: Vector3<f64>,
        table_normal: Vector3<f64>,
        disk_center: Vector3<f64>,
        disk_radius: f64,
    },
}

fn hit_plane(o: &Vector3<f64>, d: &Vector3<f64>, point: &Vector3<f64>, normal: &Vector3<f64>) -> Option<f64> {
    let denom = d.dot(normal);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = (point - o).dot(normal) / denom;
    (t > 0.0).then_some(t)
}

fn hit_sphere(o: &Vector3<f64>, d: &Vector3<f64>, c: &Vector3<f64>, r: f64) -> Option<f64> {
    let oc = o - c;
    let a = d.norm_squared();
    let b = oc.dot(d);
    let disc = b * b - a * (oc.norm_squared() - r * r);
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    [(-b - sq) / a, (-b + sq) / a].into_iter().find(|&t| t > 0.0)
}

impl Scene {
    /// Ray parameter of the first hit along `o + t d`.
    pub fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        match self {
            Scene::Plane { point, normal } => hit_plane(o, d, point, normal),
            Scene::Sphere { center, radius } => hit_sphere(o, d, center, *radius),
            Scene::TableWithTurntable { table_point, table_normal, disk_center, disk_radius } => {
                let n = table_normal.normalize();
                let disk = hit_plane(o, d, disk_center, &n).filter(|&t| (o + d * t - disk_center).norm() <= *disk_radius);
                disk.or_else(|| hit_plane(o, d, table_point, &n))
            }
        }
    }
}

/// Render `scene` into an organized cloud (camera frame) with Gaussian depth noise.
pub fn synth_cloud(scene: &Scene, camera: &CameraModel, noise_sigma: f64, seed: u64) -> Result<OrganizedPointCloud> {
    camera.validate()?;
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid("noise sigma", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = camera.cam_to_robot.translation.vector;
    let (w, h) = (camera.width, camera.height);
    let mut points = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let ray = camera.ray(u as f64, v as f64);
            let dir = camera.cam_to_robot.rotation * ray;
            match scene.intersect(&origin, &dir) {
                Some(t) => {
                    let hit = origin + dir * t;
                    let cam = camera.cam_to_robot.inverse_transform_point(&Point3::from(hit)).coords;
                    let z = cam.z + if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    points.push(ray * z);
                    valid.push(z > 0.0);
                }
                None => {
                    points.push(Vector3::zeros());
                    valid.push(false);
                }
            }
        }
    }
    OrganizedPointCloud::new(w, h, points, valid)
}
