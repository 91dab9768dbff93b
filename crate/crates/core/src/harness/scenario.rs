// SPDX-License-Identifier: Apache-2.0

//! Scenario files.
//!
//! ```toml
//! name = "line"
//! modes = ["uni", "bi", "uni_vf", "bi_vf"]
//! trials = 20
//! seed = 1000               # trial k runs with seed + k
//! timeout = 120.0           # s
//! # model = "arm.toml"      # robot description, default: bundled 7-DOF arm
//! # gains_file = "g.toml"   # or an inline [gains] table
//!
//! [surface]                 # plane | sphere | turntable
//! kind = "plane"
//! point = [0.0, 0.0, 0.0]
//! normal = [0.0, 0.0, 1.0]
//!
//! [ground_truth]            # polyline | sine | circle | great_circle
//! kind = "polyline"
//! points = [[0.55, -0.12, 0.0], [0.55, 0.12, 0.0]]
//!
//! [vf_path]                 # ground_truth | clicks | file
//! source = "clicks"
//! depth_noise = 0.001       # m
//!
//! [camera]                  # 640x480, f = 525 px unless overridden
//! position = [0.55, 0.0, 1.0]
//! rpy = [3.141592653589793, 0.0, 0.0]
//!
//! [end]                     # path_end | turntable_angle
//! kind = "path_end"
//! tolerance = 0.003
//! ```
//!
//! Optional tables `[operator]`, `[gamepad]`, `[gains]`, `[sim]`, `[contact]`
//! and `[start]` (`q = [...]` or `height = 0.0` above the path start)
//! override defaults field by field. Paths in the file are relative to it.

use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Rotation3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::Deserialize;

use crate::control::GainSet;
use crate::error::{toml_error, Error, Result};
use crate::geometry::{resample_polyline, DesiredPath};
use crate::operators::{start_above_path, ClickSetup, EndCondition, GamepadGains, Mode, OperatorModel, Task, VfPathSource, SEED_POSE};
use crate::perception::{CameraModel, ClickPathOptions, Scene};
use crate::sim::{ContactParams, RobotModel, SimConfig, SurfaceModel};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default = "all_modes")]
    modes: Vec<Mode>,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_timeout")]
    timeout: f64,
    model: Option<PathBuf>,
    gains_file: Option<PathBuf>,
    gains: Option<GainSet>,
    surface: SurfaceModel,
    ground_truth: GroundTruthDef,
    #[serde(default)]
    vf_path: VfPathDef,
    #[serde(default)]
    camera: CameraDef,
    #[serde(default)]
    operator: OperatorModel,
    #[serde(default)]
    gamepad: GamepadGains,
    #[serde(default)]
    sim: SimConfig,
    #[serde(default)]
    contact: ContactParams,
    #[serde(default)]
    start: StartDef,
    #[serde(default)]
    end: EndDef,
}

fn all_modes() -> Vec<Mode> {
    Mode::ALL.to_vec()
}

fn default_trials() -> usize {
    1
}

fn default_timeout() -> f64 {
    120.0
}

fn default_spacing() -> f64 {
    0.002
}

/// Ground-truth pattern; points are snapped onto the surface and normals taken
/// from it.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum GroundTruthDef {
    Polyline {
        points: Vec<[f64; 3]>,
        #[serde(default)]
        closed: bool,
        #[serde(default = "default_spacing")]
        spacing: f64,
    },
    /// `amplitude · sin(2π s / wavelength)` across `direction`, for `length` m.
    Sine {
        start: [f64; 3],
        direction: [f64; 3],
        amplitude: f64,
        wavelength: f64,
        length: f64,
        #[serde(default = "default_spacing")]
        spacing: f64,
    },
    /// Closed circle in the surface tangent plane at `center`.
    Circle {
        center: [f64; 3],
        radius: f64,
        #[serde(default = "default_spacing")]
        spacing: f64,
    },
    /// Arc on a sphere surface: `from` (direction from the center) rotated
    /// about `axis` by up to `sweep` rad.
    GreatCircle {
        axis: [f64; 3],
        from: [f64; 3],
        sweep: f64,
        #[serde(default = "default_spacing")]
        spacing: f64,
    },
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
enum VfPathDef {
    #[default]
    GroundTruth,
    Clicks {
        #[serde(default)]
        depth_noise: f64,
        #[serde(default)]
        normal_window: Option<usize>,
    },
    File {
        file: PathBuf,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CameraDef {
    position: [f64; 3],
    /// Roll, pitch, yaw of the camera frame (z forward, y down) in the robot frame.
    rpy: [f64; 3],
    fx: f64,
    fy: f64,
    width: usize,
    height: usize,
}

impl Default for CameraDef {
    fn default() -> Self {
        Self { position: [0.55, 0.0, 1.0], rpy: [std::f64::consts::PI, 0.0, 0.0], fx: 525.0, fy: 525.0, width: 640, height: 480 }
    }
}

impl CameraDef {
    fn model(&self) -> CameraModel {
        let iso = Isometry3::from_parts(
            Translation3::from(Vector3::from(self.position)),
            UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        );
        CameraModel {
            fx: self.fx,
            fy: self.fy,
            cx: (self.width as f64 - 1.0) / 2.0,
            cy: (self.height as f64 - 1.0) / 2.0,
            width: self.width,
            height: self.height,
            cam_to_robot: iso,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct StartDef {
    q: Option<Vec<f64>>,
    height: f64,
}

impl Default for StartDef {
    fn default() -> Self {
        Self { q: None, height: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum EndDef {
    PathEnd { tolerance: f64 },
    TurntableAngle { angle: f64 },
}

impl Default for EndDef {
    fn default() -> Self {
        EndDef::PathEnd { tolerance: 0.003 }
    }
}

/// A loaded scenario: the task plus the experiment grid.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub modes: Vec<Mode>,
    pub trials: usize,
    pub seed: u64,
    pub task: Task,
    /// Depth camera and scene for live sessions, whatever the fixture source.
    pub view: ClickSetup,
}

impl Scenario {
    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.trials as u64).map(|k| self.seed + k)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::invalid(format!("scenario {}", path.display()), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&src, &path.display().to_string(), base)
    }

    pub fn from_toml_str(src: &str, file: &str, base: &Path) -> Result<Self> {
        let f: ScenarioFile = toml::from_str(src).map_err(|e| toml_error(file, src, e))?;
        let ctx = |e: Error| match e {
            Error::Parse { .. } => e,
            e => Error::invalid(format!("scenario {file}"), e.to_string()),
        };
        if f.modes.is_empty() {
            return Err(Error::invalid(format!("scenario {file}"), "modes must not be empty"));
        }
        let model = match &f.model {
            Some(p) => RobotModel::load(&base.join(p)).map_err(ctx)?,
            None => RobotModel::default_arm(),
        };
        let gains = match (&f.gains_file, f.gains.clone()) {
            (Some(_), Some(_)) => return Err(Error::invalid(format!("scenario {file}"), "give either gains_file or [gains], not both")),
            (Some(p), None) => GainSet::load(&base.join(p)).map_err(ctx)?,
            (None, Some(g)) => g,
            (None, None) => GainSet::default(),
        };
        f.surface.validate().map_err(ctx)?;
        let ground_truth = ground_truth(&f.ground_truth, &f.surface).map_err(ctx)?;
        let camera = f.camera.model();
        let view = ClickSetup {
            camera: camera.clone(),
            scene: scene_for(&f.surface),
            depth_noise: match &f.vf_path {
                VfPathDef::Clicks { depth_noise, .. } => *depth_noise,
                _ => 0.0,
            },
            options: ClickPathOptions::default(),
        };
        let vf_path = match &f.vf_path {
            VfPathDef::GroundTruth => VfPathSource::GroundTruth,
            VfPathDef::File { file: p } => VfPathSource::Fixed(DesiredPath::load(&base.join(p)).map_err(ctx)?),
            VfPathDef::Clicks { depth_noise, normal_window } => {
                let mut options = ClickPathOptions::default();
                if let Some(w) = normal_window {
                    options.normal_window = *w;
                }
                VfPathSource::Clicks(ClickSetup { camera, scene: scene_for(&f.surface), depth_noise: *depth_noise, options })
            }
        };
        let start_q = match &f.start.q {
            Some(q) => q.clone(),
            None => start_above_path(&model, &ground_truth, f.start.height, &SEED_POSE).map_err(ctx)?,
        };
        let end = match f.end {
            EndDef::PathEnd { tolerance } => EndCondition::PathEnd { tolerance },
            EndDef::TurntableAngle { angle } => EndCondition::TurntableAngle { angle },
        };
        let mut task = Task {
            name: f.name.clone(),
            model,
            surface: f.surface,
            contact: f.contact,
            sim: f.sim,
            gains,
            gamepad: f.gamepad,
            operator: f.operator,
            ground_truth,
            vf_path,
            start_q,
            end,
            timeout: f.timeout,
            ideal: None,
        };
        task.prepare().map_err(ctx)?;
        Ok(Scenario { name: f.name, modes: f.modes, trials: f.trials, seed: f.seed, task, view })
    }
}

/// Depth-camera scene matching a contact surface.
fn scene_for(surface: &SurfaceModel) -> Scene {
    match surface {
        SurfaceModel::Plane { point, normal } => Scene::Plane { point: *point, normal: normal.into_inner() },
        SurfaceModel::Sphere { center, radius } => Scene::Sphere { center: *center, radius: *radius },
        SurfaceModel::Turntable(t) => Scene::TableWithTurntable {
            table_point: t.center - t.axis.into_inner() * 0.03,
            table_normal: t.axis.into_inner(),
            disk_center: t.center,
            disk_radius: t.radius,
        },
    }
}

/// Nearest surface point and outward normal.
fn snap(surface: &SurfaceModel, p: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let (d, n) = surface.signed_distance(p);
    if d.is_finite() {
        (p - n * d, n)
    } else {
        (*p, n)
    }
}

fn unit(v: [f64; 3], what: &str) -> Result<Unit<Vector3<f64>>> {
    let v = Vector3::from(v);
    if v.norm() < 1e-12 {
        return Err(Error::invalid(what, "must be nonzero"));
    }
    Ok(Unit::new_normalize(v))
}

fn ground_truth(def: &GroundTruthDef, surface: &SurfaceModel) -> Result<DesiredPath> {
    let positive = |v: f64, what: &str| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(Error::invalid(what, "must be positive")) };
    let (raw, closed, spacing): (Vec<Vector3<f64>>, bool, f64) = match def {
        GroundTruthDef::Polyline { points, closed, spacing } => {
            if points.len() < 2 {
                return Err(Error::invalid("ground_truth.points", "need at least two points"));
            }
            let mut pts: Vec<Vector3<f64>> = points.iter().map(|p| Vector3::from(*p)).collect();
            if *closed {
                pts.push(pts[0]);
            }
            (pts, *closed, *spacing)
        }
        GroundTruthDef::Sine { start, direction, amplitude, wavelength, length, spacing } => {
            positive(*wavelength, "ground_truth.wavelength")?;
            positive(*length, "ground_truth.length")?;
            let start = Vector3::from(*start);
            let dir = unit(*direction, "ground_truth.direction")?;
            let (_, n) = snap(surface, &start);
            let side = n.cross(&dir);
            if side.norm() < 1e-6 {
                return Err(Error::invalid("ground_truth.direction", "parallel to the surface normal"));
            }
            let side = side.normalize();
            let n_pts = (length / (spacing / 4.0)).ceil() as usize;
            let pts = (0..=n_pts)
                .map(|k| {
                    let s = length * k as f64 / n_pts as f64;
                    start + dir.into_inner() * s + side * *amplitude * (std::f64::consts::TAU * s / wavelength).sin()
                })
                .collect();
            (pts, false, *spacing)
        }
        GroundTruthDef::Circle { center, radius, spacing } => {
            positive(*radius, "ground_truth.radius")?;
            let c = Vector3::from(*center);
            let (_, n) = snap(surface, &c);
            let a = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let e1 = (a - n * a.dot(&n)).normalize();
            let e2 = n.cross(&e1);
            let n_pts = ((std::f64::consts::TAU * radius) / (spacing / 4.0)).ceil() as usize;
            let mut pts: Vec<Vector3<f64>> = (0..n_pts)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / n_pts as f64;
                    c + (e1 * t.cos() + e2 * t.sin()) * *radius
                })
                .collect();
            pts.push(pts[0]);
            (pts, true, *spacing)
        }
        GroundTruthDef::GreatCircle { axis, from, sweep, spacing } => {
            let SurfaceModel::Sphere { center, radius } = surface else {
                return Err(Error::invalid("ground_truth", "great_circle needs a sphere surface"));
            };
            positive(sweep.abs(), "ground_truth.sweep")?;
            let axis = unit(*axis, "ground_truth.axis")?;
            let from = unit(*from, "ground_truth.from")?;
            let n_pts = ((sweep.abs() * radius) / (spacing / 4.0)).ceil() as usize;
            let pts = (0..=n_pts)
                .map(|k| center + Rotation3::from_axis_angle(&axis, sweep * k as f64 / n_pts as f64) * from.into_inner() * *radius)
                .collect();
            (pts, false, *spacing)
        }
    };
    positive(spacing, "ground_truth.spacing")?;
    let mut pts = resample_polyline(&raw, spacing);
    if closed {
        pts.pop();
    }
    let (points, normals): (Vec<_>, Vec<_>) = pts.iter().map(|p| snap(surface, p)).unzip();
    DesiredPath::new(points, normals, closed)
}
