// SPDX-License-Identifier: Apache-2.0

//! Surface normals on organized clouds: per-point covariance (plane fit) and the
//! averaged-gradient method on six integral images.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::cloud::OrganizedPointCloud;
use super::integral::IntegralImage;
use crate::error::{Error, Result};

/// Minimum λ₁/λ₀ ratio for a neighborhood to count as a surface patch.
const MIN_EIGEN_RATIO: f64 = 10.0;
/// Largest pixel window searched for radius neighborhoods.
const MAX_SEARCH_RADIUS_PX: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Neighborhood {
    /// The k nearest valid pixels by 3D distance (the query point included).
    Knn(usize),
    /// All valid points within this 3D radius, meters.
    Radius(f64),
}

/// Normal with its covariance eigenvalues (ascending).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceNormal {
    pub normal: Vector3<f64>,
    pub eigenvalues: [f64; 3],
}

/// Orient `n` toward a camera sitting at the origin.
#[inline]
fn face_camera(n: Vector3<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    if n.dot(&-p) < 0.0 {
        -n
    } else {
        n
    }
}

fn neighborhood(cloud: &OrganizedPointCloud, u: usize, v: usize, p: &Vector3<f64>, nb: Neighborhood) -> Vec<Vector3<f64>> {
    let ring = |r: usize| {
        let (u0, v0) = (u.saturating_sub(r), v.saturating_sub(r));
        let (u1, v1) = ((u + r).min(cloud.width() - 1), (v + r).min(cloud.height() - 1));
        (v0..=v1).flat_map(move |y| (u0..=u1).map(move |x| (x, y))).filter(move |&(x, y)| x.abs_diff(u) == r || y.abs_diff(v) == r)
    };
    match nb {
        Neighborhood::Knn(k) => {
            // Grow the window until it holds k candidates plus one extra ring, so
            // the k nearest in 3D are not cut off by the square window.
            let mut cand: Vec<(f64, Vector3<f64>)> = vec![(0.0, *p)];
            let mut r = 0;
            let mut extra = 0;
            while r < MAX_SEARCH_RADIUS_PX && extra < 2 {
                r += 1;
                for (x, y) in ring(r) {
                    if let Some(q) = cloud.get(x, y) {
                        cand.push(((q - p).norm_squared(), q));
                    }
                }
                if cand.len() >= k {
                    extra += 1;
                }
            }
            cand.sort_by(|a, b| a.0.total_cmp(&b.0));
            cand.truncate(k);
            cand.into_iter().map(|c| c.1).collect()
        }
        Neighborhood::Radius(radius) => {
            let r2 = radius * radius;
            let mut out = vec![*p];
            for r in 1..=MAX_SEARCH_RADIUS_PX {
                let mut hit = false;
                for (x, y) in ring(r) {
                    if let Some(q) = cloud.get(x, y) {
                        if (q - p).norm_squared() <= r2 {
                            out.push(q);
                            hit = true;
                        }
                    }
                }
                if !hit {
                    break;
                }
            }
            out
        }
    }
}

/// Plane-fit normal at pixel (u, v): eigenvector of the smallest eigenvalue of
/// the neighborhood covariance, oriented toward the camera.
pub fn normals_covariance(cloud: &OrganizedPointCloud, u: usize, v: usize, nb: Neighborhood) -> Result<CovarianceNormal> {
    let p = cloud.get(u, v).ok_or(Error::NoNormal("target pixel is invalid"))?;
    let pts = neighborhood(cloud, u, v, &p, nb);
    if pts.len() < 3 {
        return Err(Error::NoNormal("fewer than 3 valid neighbors"));
    }
    let mean = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let cov = pts.iter().map(|q| (q - mean) * (q - mean).transpose()).sum::<Matrix3<f64>>() / pts.len() as f64;
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lambda = order.map(|i| eig.eigenvalues[i].max(0.0));
    if lambda[1] <= 1e-12 * lambda[2] || lambda[1] < MIN_EIGEN_RATIO * lambda[0] {
        return Err(Error::NoNormal("degenerate neighborhood"));
    }
    let n = eig.eigenvectors.column(order[0]).normalize();
    Ok(CovarianceNormal { normal: face_camera(n, &p), eigenvalues: lambda })
}

/// Six integral images over the x/y/z channels of the horizontal and vertical
/// gradient maps, plus validity counts for each map.
struct GradientIntegrals {
    horizontal: [IntegralImage; 3],
    vertical: [IntegralImage; 3],
    h_count: IntegralImage,
    v_count: IntegralImage,
}

/// Per-pixel gradient along one image axis: central difference where both
/// neighbors are valid, one-sided at borders or next to holes.
fn gradient_map(cloud: &OrganizedPointCloud, horizontal: bool) -> (Vec<Vector3<f64>>, Vec<f64>) {
    let (w, h) = (cloud.width(), cloud.height());
    let mut grad = vec![Vector3::zeros(); w * h];
    let mut count = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let Some(p) = cloud.get(u, v) else { continue };
            let (prev, next) = if horizontal {
                (u.checked_sub(1).and_then(|x| cloud.get(x, v)), cloud.get(u + 1, v))
            } else {
                (v.checked_sub(1).and_then(|y| cloud.get(u, y)), cloud.get(u, v + 1))
            };
            let g = match (prev, next) {
                (Some(a), Some(b)) => (b - a) / 2.0,
                (None, Some(b)) => b - p,
                (Some(a), None) => p - a,
                (None, None) => continue,
            };
            let i = v * w + u;
            grad[i] = g;
            count[i] = 1.0;
        }
    }
    (grad, count)
}

impl GradientIntegrals {
    fn new(cloud: &OrganizedPointCloud) -> Self {
        let (w, h) = (cloud.width(), cloud.height());
        let build = |horizontal: bool| {
            let (g, c) = gradient_map(cloud, horizontal);
            let channel = |k: usize| IntegralImage::new(w, h, &g.iter().map(|v| v[k]).collect::<Vec<_>>());
            ([channel(0), channel(1), channel(2)], IntegralImage::new(w, h, &c))
        };
        let (horizontal, h_count) = build(true);
        let (vertical, v_count) = build(false);
        Self { horizontal, vertical, h_count, v_count }
    }

    fn mean(images: &[IntegralImage; 3], count: &IntegralImage, r: (usize, usize, usize, usize)) -> Option<Vector3<f64>> {
        let n = count.rect_sum(r.0, r.1, r.2, r.3);
        (n > 0.0).then(|| {
            Vector3::new(
                images[0].rect_sum(r.0, r.1, r.2, r.3),
                images[1].rect_sum(r.0, r.1, r.2, r.3),
                images[2].rect_sum(r.0, r.1, r.2, r.3),
            ) / n
        })
    }
}

/// Averaged-gradient normals for every pixel with a `(2w+1)²` smoothing window.
/// Entries are `None` where the pixel is invalid or no normal can be formed.
pub fn normals_integral(cloud: &OrganizedPointCloud, window: usize) -> Result<Vec<Option<Vector3<f64>>>> {
    if window < 1 {
        return Err(Error::invalid("integral normals", "window half-size must be at least 1"));
    }
    let gi = GradientIntegrals::new(cloud);
    let (w, h) = (cloud.width(), cloud.height());
    let normals = (0..h)
        .into_par_iter()
        .flat_map_iter(|v| {
            let gi = &gi;
            (0..w).map(move |u| {
                let p = cloud.get(u, v)?;
                let rect = (u.saturating_sub(window), v.saturating_sub(window), u + window + 1, v + window + 1);
                let gu = GradientIntegrals::mean(&gi.horizontal, &gi.h_count, rect)?;
                let gv = GradientIntegrals::mean(&gi.vertical, &gi.v_count, rect)?;
                let n = gu.cross(&gv);
                let len = n.norm();
                (len > 1e-300 && len.is_finite()).then(|| face_camera(n / len, &p))
            })
        })
        .collect();
    Ok(normals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::camera::CameraModel;
    use crate::perception::synth::{synth_cloud, Scene};
    use nalgebra::{Isometry3, Vector3};

    fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        a.normalize().dot(&b.normalize()).clamp(-1.0, 1.0).acos().to_degrees()
    }

    fn small_camera() -> CameraModel {
        let mut cam = CameraModel::kinect(Isometry3::identity());
        cam.width = 160;
        cam.height = 120;
        cam.cx = 79.5;
        cam.cy = 59.5;
        cam
    }

    fn plane_at(z: f64, noise: f64, seed: u64) -> OrganizedPointCloud {
        let scene = Scene::Plane { point: Vector3::new(0.0, 0.0, z), normal: Vector3::new(0.0, 0.0, -1.0) };
        synth_cloud(&scene, &small_camera(), noise, seed).unwrap()
    }

    #[test]
    fn exact_plane_covariance() {
        let cloud = plane_at(5.0, 0.0, 0);
        let r = normals_covariance(&cloud, 80, 60, Neighborhood::Knn(20)).unwrap();
        assert!(angle_deg(&r.normal, &Vector3::new(0.0, 0.0, -1.0)) < 1e-6);
        assert!(r.eigenvalues[0] < 1e-12);
        let r = normals_covariance(&cloud, 10, 10, Neighborhood::Radius(0.05)).unwrap();
        assert!(angle_deg(&r.normal, &Vector3::new(0.0, 0.0, -1.0)) < 1e-6);
    }

    #[test]
    fn integral_agrees_with_covariance_on_planes() {
        let cloud = plane_at(5.0, 0.0, 0);
        for w in [1, 2, 4] {
            let normals = normals_integral(&cloud, w).unwrap();
            for &(u, v) in &[(0, 0), (80, 60), (159, 119), (3, 100)] {
                let a = normals[cloud.index(u, v)].unwrap();
                let b = normals_covariance(&cloud, u, v, Neighborhood::Knn(20)).unwrap().normal;
                assert!((a - b).norm() < 1e-6, "w={w} at ({u},{v}): {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn tilted_plane_normal() {
        let n = Vector3::new(0.3, -0.2, -1.0).normalize();
        let scene = Scene::Plane { point: Vector3::new(0.0, 0.0, 1.2), normal: n };
        let cloud = synth_cloud(&scene, &small_camera(), 0.0, 0).unwrap();
        let normals = normals_integral(&cloud, 4).unwrap();
        let cov = normals_covariance(&cloud, 40, 30, Neighborhood::Knn(50)).unwrap();
        assert!(angle_deg(&normals[cloud.index(40, 30)].unwrap(), &n) < 0.1);
        assert!(angle_deg(&cov.normal, &n) < 0.1);
    }

    #[test]
    fn sphere_normals_are_radial() {
        let center = Vector3::new(0.0, 0.0, 1.0);
        let radius = 0.5;
        let cloud = synth_cloud(&Scene::Sphere { center, radius }, &small_camera(), 0.0, 0).unwrap();
        let mut checked = 0;
        for v in (10..110).step_by(7) {
            for u in (10..150).step_by(7) {
                let Some(p) = cloud.get(u, v) else { continue };
                // Stay off the silhouette, where k-NN neighborhoods are one-sided.
                if (p - center).normalize().dot(&-center.normalize()) < 0.5 {
                    continue;
                }
                let n = normals_covariance(&cloud, u, v, Neighborhood::Knn(50)).unwrap().normal;
                let err = angle_deg(&n, &((p - center) / radius));
                assert!(err < 0.5, "({u},{v}) error {err}");
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn noisy_plane_covariance_error() {
        let cloud = plane_at(1.0, 0.001, 17);
        let truth = Vector3::new(0.0, 0.0, -1.0);
        let mut errs = Vec::new();
        for v in (10..110).step_by(5) {
            for u in (10..150).step_by(5) {
                // 1 mm depth noise against ~2 mm pixel spacing needs a wide
                // neighborhood to clear the eigenvalue-ratio test.
                let n = normals_covariance(&cloud, u, v, Neighborhood::Knn(120)).unwrap().normal;
                errs.push(angle_deg(&n, &truth));
            }
        }
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!(mean < 3.0, "mean error {mean}");
    }

    #[test]
    fn integral_error_shrinks_with_window() {
        let cloud = plane_at(1.0, 0.001, 23);
        let truth = Vector3::new(0.0, 0.0, -1.0);
        let mut prev = f64::INFINITY;
        for w in [1, 2, 4] {
            let normals = normals_integral(&cloud, w).unwrap();
            let errs: Vec<f64> = normals.iter().flatten().map(|n| angle_deg(n, &truth)).collect();
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            assert!(mean < prev, "w={w}: {mean} not below {prev}");
            prev = mean;
        }
    }

    #[test]
    fn collinear_neighborhood_has_no_normal() {
        let pts: Vec<Vector3<f64>> = (0..10).map(|i| Vector3::new(0.01 * i as f64, 0.0, 1.0)).collect();
        let cloud = OrganizedPointCloud::new(10, 1, pts, vec![true; 10]).unwrap();
        assert!(matches!(normals_covariance(&cloud, 5, 0, Neighborhood::Knn(5)), Err(Error::NoNormal(_))));
    }

    #[test]
    fn too_few_neighbors_and_invalid_target() {
        let pts = vec![Vector3::new(0.0, 0.0, 1.0); 4];
        let cloud = OrganizedPointCloud::new(2, 2, pts, vec![true, true, false, false]).unwrap();
        assert!(normals_covariance(&cloud, 0, 0, Neighborhood::Knn(10)).is_err());
        assert!(normals_covariance(&cloud, 0, 1, Neighborhood::Knn(10)).is_err());
        let normals = normals_integral(&cloud, 1).unwrap();
        assert!(normals.iter().all(Option::is_none));
        assert!(normals_integral(&cloud, 0).is_err());
    }

    #[test]
    fn emitted_normals_are_unit_and_face_camera() {
        let cloud = synth_cloud(&Scene::Sphere { center: Vector3::new(0.05, 0.0, 0.8), radius: 0.3 }, &small_camera(), 0.002, 5).unwrap();
        let normals = normals_integral(&cloud, 2).unwrap();
        for (i, n) in normals.iter().enumerate() {
            if let Some(n) = n {
                assert!((n.norm() - 1.0).abs() < 1e-9);
                assert!(n.dot(&-cloud.points()[i]) >= 0.0);
            }
        }
    }
}
