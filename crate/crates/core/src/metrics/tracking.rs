// SPDX-License-Identifier: Apache-2.0

//! Distance from a recorded trajectory to the ground-truth path.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::resample_polyline;

/// Ground truth is densified to this spacing before the distance search, m.
pub const DENSIFY_SPACING: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean_mm: f64,
    /// Population variance, mm².
    pub variance_mm2: f64,
    pub sd_mm: f64,
    pub samples: usize,
}

/// Inclusive index range from first to last contact sample.
pub fn contact_window(contact: &[bool]) -> Option<(usize, usize)> {
    let first = contact.iter().position(|&c| c)?;
    let last = contact.iter().rposition(|&c| c)?;
    Some((first, last))
}

pub fn densify(gt: &[Vector3<f64>], closed: bool) -> Vec<Vector3<f64>> {
    let mut pts = gt.to_vec();
    if closed {
        pts.push(gt[0]);
    }
    resample_polyline(&pts, DENSIFY_SPACING)
}

/// Mean and population variance of min-distance error over samples between
/// first and last contact, in millimeters.
pub fn trajectory_error(x: &[Vector3<f64>], contact: &[bool], gt: &[Vector3<f64>], closed: bool) -> Result<ErrorStats> {
    Error::check_len("contact flags", x.len(), contact.len())?;
    if gt.len() < 2 {
        return Err(Error::Metric("ground truth needs at least 2 points".into()));
    }
    let (a, b) = contact_window(contact).ok_or_else(|| Error::Metric("trajectory never touches the surface".into()))?;
    let dense = densify(gt, closed);
    let errs: Vec<f64> =
        x[a..=b].par_iter().map(|p| dense.iter().map(|g| (p - g).norm_squared()).fold(f64::INFINITY, f64::min).sqrt() * 1e3).collect();
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let variance = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok(ErrorStats { mean_mm: mean, variance_mm2: variance, sd_mm: variance.sqrt(), samples: errs.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion};
    use proptest::prelude::*;

    fn line() -> Vec<Vector3<f64>> {
        vec![Vector3::zeros(), Vector3::new(0.2, 0.0, 0.0)]
    }

    #[test]
    fn on_path_is_zero() {
        let x: Vec<_> = (0..=20).map(|i| Vector3::new(0.01 * i as f64, 0.0, 0.0)).collect();
        let e = trajectory_error(&x, &[true; 21], &line(), false).unwrap();
        assert!(e.mean_mm < 1e-9 && e.variance_mm2 < 1e-12);
    }

    #[test]
    fn constant_offset() {
        let x: Vec<_> = (1..20).map(|i| Vector3::new(0.01 * i as f64, 0.005, 0.0)).collect();
        let e = trajectory_error(&x, &vec![true; x.len()], &line(), false).unwrap();
        assert!((e.mean_mm - 5.0).abs() < 1e-9, "{}", e.mean_mm);
        assert!(e.variance_mm2 < 1e-12);
    }

    #[test]
    fn only_the_contact_window_counts() {
        let x = vec![
            Vector3::new(0.05, 0.1, 0.0),
            Vector3::new(0.05, 0.001, 0.0),
            Vector3::new(0.06, 0.003, 0.0),
            Vector3::new(0.07, 0.1, 0.0),
        ];
        let e = trajectory_error(&x, &[false, true, true, false], &line(), false).unwrap();
        assert!((e.mean_mm - 2.0).abs() < 1e-9);
        assert!((e.variance_mm2 - 1.0).abs() < 1e-9);
        assert!((e.sd_mm - 1.0).abs() < 1e-9);
        assert!(trajectory_error(&x, &[false; 4], &line(), false).is_err());
        assert!(trajectory_error(&x, &[true; 4], &line()[..1], false).is_err());
    }

    #[test]
    fn closed_paths_wrap() {
        let sq = vec![Vector3::zeros(), Vector3::x() * 0.1, Vector3::new(0.1, 0.1, 0.0), Vector3::y() * 0.1];
        let x = vec![Vector3::new(0.0, 0.05, 0.0)];
        assert!(trajectory_error(&x, &[true], &sq, true).unwrap().mean_mm < 1e-9);
        assert!(trajectory_error(&x, &[true], &sq, false).unwrap().mean_mm > 1.0);
    }

    proptest! {
        #[test]
        fn densified_error_within_quantization_of_exact_segment_distance(
            px in prop::collection::vec((-0.1f64..0.1, -0.1f64..0.1, -0.1f64..0.1), 3..6),
            q in (-0.15f64..0.15, -0.15f64..0.15, -0.15f64..0.15),
        ) {
            let gt: Vec<_> = px.iter().map(|&(a, b, c)| Vector3::new(a, b, c)).collect();
            prop_assume!(gt.windows(2).all(|w| (w[1] - w[0]).norm() > 1e-3));
            let x = Vector3::new(q.0, q.1, q.2);
            // Exact distance to each segment by clamped projection.
            let exact = gt.windows(2).map(|w| {
                let d = w[1] - w[0];
                let t = ((x - w[0]).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
                (x - (w[0] + d * t)).norm()
            }).fold(f64::INFINITY, f64::min) * 1e3;
            let got = trajectory_error(&[x], &[true], &gt, false).unwrap().mean_mm;
            // Resampling chords cut corners by at most half a step.
            prop_assert!(got >= exact - 0.1 && got <= exact + 0.1, "{} vs {}", got, exact);
        }

        #[test]
        fn rigid_motion_equivariance(
            rpy in (-3.0f64..3.0, -1.5f64..1.5, -3.0f64..3.0),
            tr in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
            offsets in prop::collection::vec((-0.01f64..0.01, -0.01f64..0.01), 5..30),
        ) {
            let gt = vec![Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.1, 0.1, 0.02)];
            let x: Vec<_> = offsets.iter().enumerate().map(|(i, &(a, b))| Vector3::new(0.003 * i as f64, a, b)).collect();
            let flags = vec![true; x.len()];
            let iso = Isometry3::from_parts(Translation3::new(tr.0, tr.1, tr.2), UnitQuaternion::from_euler_angles(rpy.0, rpy.1, rpy.2));
            let tf = |v: &Vector3<f64>| (iso * Point3::from(*v)).coords;
            let e0 = trajectory_error(&x, &flags, &gt, false).unwrap();
            let e1 = trajectory_error(&x.iter().map(tf).collect::<Vec<_>>(), &flags, &gt.iter().map(tf).collect::<Vec<_>>(), false).unwrap();
            prop_assert!((e0.mean_mm - e1.mean_mm).abs() < 1e-9);
            prop_assert!((e0.variance_mm2 - e1.variance_mm2).abs() < 1e-9);
        }
    }
}
