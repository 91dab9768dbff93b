// SPDX-License-Identifier: Apache-2.0

//! Desired paths on a surface, constraint evaluation and the path reference frame.
//!
//! Path files are JSON or TOML (chosen by extension) with points and unit
//! normals in the robot base frame, meters:
//!
//! ```json
//! { "points": [[0.5, 0.0, 0.0], [0.6, 0.0, 0.0]],
//!   "normals": [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
//!   "closed": false }
//! ```

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{toml_error, Error, Result};

/// Smallest angle between tangent and normal accepted by [`build_frame`].
const MIN_FRAME_ANGLE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathFile", into = "PathFile")]
pub struct DesiredPath {
    points: Vec<Vector3<f64>>,
    normals: Vec<Vector3<f64>>,
    closed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PathFile {
    points: Vec<[f64; 3]>,
    normals: Vec<[f64; 3]>,
    #[serde(default)]
    closed: bool,
}

impl TryFrom<PathFile> for DesiredPath {
    type Error = Error;

    fn try_from(f: PathFile) -> Result<Self> {
        DesiredPath::new(f.points.into_iter().map(Vector3::from).collect(), f.normals.into_iter().map(Vector3::from).collect(), f.closed)
    }
}

impl From<DesiredPath> for PathFile {
    fn from(p: DesiredPath) -> Self {
        PathFile {
            points: p.points.iter().map(|v| [v.x, v.y, v.z]).collect(),
            normals: p.normals.iter().map(|v| [v.x, v.y, v.z]).collect(),
            closed: p.closed,
        }
    }
}

impl DesiredPath {
    pub fn new(points: Vec<Vector3<f64>>, normals: Vec<Vector3<f64>>, closed: bool) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("path", "at least two points are required"));
        }
        if points.len() != normals.len() {
            return Err(Error::invalid("path", format!("{} points but {} normals", points.len(), normals.len())));
        }
        for (i, n) in normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("path", format!("normal {i} is not unit length")));
            }
        }
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid("path", format!("point {i} is not finite")));
            }
        }
        let n = points.len();
        let pairs = if closed { n } else { n - 1 };
        for i in 0..pairs {
            let j = (i + 1) % n;
            if points[i] == points[j] {
                return Err(Error::invalid("path", format!("points {i} and {j} coincide")));
            }
        }
        Ok(Self { points, normals, closed })
    }

    /// Build a path whose normals are all `normal` (normalized).
    pub fn with_constant_normal(points: Vec<Vector3<f64>>, normal: Vector3<f64>, closed: bool) -> Result<Self> {
        let n = normal.normalize();
        let normals = vec![n; points.len()];
        Self::new(points, normals, closed)
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Polyline length, including the closing segment of closed paths.
    pub fn length(&self) -> f64 {
        let mut len: f64 = self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        if self.closed {
            len += (self.points[0] - self.points[self.points.len() - 1]).norm();
        }
        len
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        let name = path.display().to_string();
        if path.extension().is_some_and(|e| e == "toml") {
            let file: PathFile = toml::from_str(&src).map_err(|e| toml_error(&name, &src, e))?;
            Self::try_from(file)
        } else {
            Ok(serde_json::from_str(&src)?)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = PathFile::from(self.clone());
        let text = if path.extension().is_some_and(|e| e == "toml") {
            toml::to_string(&file).map_err(|e| Error::invalid("path file", e.to_string()))?
        } else {
            serde_json::to_string_pretty(&file)?
        };
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Right-handed orthonormal frame at a path point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathFrame {
    pub n_hat: Vector3<f64>,
    pub s_hat: Vector3<f64>,
    pub t_hat: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintResult {
    pub x_d: Vector3<f64>,
    pub index: usize,
    pub frame: PathFrame,
    /// x − x_d
    pub d: Vector3<f64>,
}

/// Index of the path vertex nearest to `x`; ties go to the lowest index.
pub fn nearest_index(path: &DesiredPath, x: &Vector3<f64>) -> usize {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (i, p) in path.points.iter().enumerate() {
        let d2 = (p - x).norm_squared();
        if d2 < best_d2 {
            best = i;
            best_d2 = d2;
        }
    }
    best
}

/// Constraint evaluation: the nearest path vertex to `x` and the frame there.
pub fn nearest_point(path: &DesiredPath, x: &Vector3<f64>) -> Result<ConstraintResult> {
    if path.is_empty() {
        return Err(Error::invalid("path", "empty"));
    }
    constraint_at(path, nearest_index(path, x), x)
}

/// Constraint result for a given vertex index.
pub fn constraint_at(path: &DesiredPath, index: usize, x: &Vector3<f64>) -> Result<ConstraintResult> {
    let t = tangent_at(path, index)?;
    let frame = build_frame(&path.normals[index], &t)?;
    let x_d = path.points[index];
    Ok(ConstraintResult { x_d, index, frame, d: x - x_d })
}

/// Unit backward-difference tangent at `index`; forward difference at the start
/// of open paths, wrap-around for closed ones.
pub fn tangent_at(path: &DesiredPath, index: usize) -> Result<Vector3<f64>> {
    let n = path.len();
    if index >= n {
        return Err(Error::invalid("path index", format!("{index} out of range for {n} points")));
    }
    let diff = match (index, path.closed) {
        (0, false) => path.points[1] - path.points[0],
        (0, true) => path.points[0] - path.points[n - 1],
        (i, _) => path.points[i] - path.points[i - 1],
    };
    let len = diff.norm();
    if len == 0.0 {
        return Err(Error::invalid("path", "zero-length segment"));
    }
    Ok(diff / len)
}

/// Frame with `n` as the primary axis: the tangent is projected into the plane
/// normal to `n`, then `s = n × t`.
pub fn build_frame(n: &Vector3<f64>, t_raw: &Vector3<f64>) -> Result<PathFrame> {
    let n_hat = n.normalize();
    let t_norm = t_raw.norm();
    if t_norm == 0.0 || !t_norm.is_finite() {
        return Err(Error::DegenerateFrame);
    }
    let sin = n_hat.cross(t_raw).norm() / t_norm;
    if sin < MIN_FRAME_ANGLE.sin() {
        return Err(Error::DegenerateFrame);
    }
    let t_hat = (t_raw - n_hat * t_raw.dot(&n_hat)).normalize();
    let s_hat = n_hat.cross(&t_hat);
    Ok(PathFrame { n_hat, s_hat, t_hat })
}

/// Tool orientation whose columns are [ŝ, t̂, −n̂]: tool z presses into the surface
/// and tool y points along the path.
pub fn desired_orientation(frame: &PathFrame) -> Rotation3<f64> {
    Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[frame.s_hat, frame.t_hat, -frame.n_hat]))
}

/// Closest point on the polyline through `points` (segment level).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub point: Vector3<f64>,
    pub segment: usize,
    /// Arc length from the first point to `point`.
    pub arc_length: f64,
    pub distance: f64,
}

pub fn project_onto_polyline(points: &[Vector3<f64>], closed: bool, x: &Vector3<f64>) -> Projection {
    let n = points.len();
    let segments = if closed { n } else { n.saturating_sub(1) };
    let mut best = Projection { point: points[0], segment: 0, arc_length: 0.0, distance: (x - points[0]).norm() };
    let mut s0 = 0.0;
    for i in 0..segments {
        let a = points[i];
        let b = points[(i + 1) % n];
        let ab = b - a;
        let len2 = ab.norm_squared();
        let u = if len2 > 0.0 { ((x - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let p = a + ab * u;
        let d = (x - p).norm();
        if d < best.distance {
            best = Projection { point: p, segment: i, arc_length: s0 + u * len2.sqrt(), distance: d };
        }
        s0 += len2.sqrt();
    }
    best
}

/// Point at arc length `s` along the polyline (clamped for open paths, wrapped for closed).
pub fn point_at_arc_length(points: &[Vector3<f64>], closed: bool, s: f64) -> Vector3<f64> {
    let n = points.len();
    let segments = if closed { n } else { n - 1 };
    let total: f64 = (0..segments).map(|i| (points[(i + 1) % n] - points[i]).norm()).sum();
    let mut s = if closed { s.rem_euclid(total) } else { s.clamp(0.0, total) };
    for i in 0..segments {
        let a = points[i];
        let b = points[(i + 1) % n];
        let len = (b - a).norm();
        if s <= len || i + 1 == segments {
            return if len > 0.0 { a + (b - a) * (s / len).min(1.0) } else { a };
        }
        s -= len;
    }
    points[n - 1]
}

/// Resample a polyline at uniform arc-length spacing, keeping both end points.
pub fn resample_polyline(points: &[Vector3<f64>], spacing: f64) -> Vec<Vector3<f64>> {
    let total: f64 = points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    if points.len() < 2 || total == 0.0 {
        return points.to_vec();
    }
    let count = ((total / spacing).round() as usize).max(1);
    (0..=count).map(|k| point_at_arc_length(points, false, total * k as f64 / count as f64)).collect()
}
