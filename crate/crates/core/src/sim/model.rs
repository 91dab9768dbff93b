// SPDX-License-Identifier: Apache-2.0

//! Serial-chain robot description and its TOML file format.
//!
//! ```toml
//! gravity = [0.0, 0.0, -9.81]          # optional, m/s^2
//!
//! [tool]                               # last link frame -> tool tip
//! translation = [0.0, 0.0, 0.15]       # m
//! rpy = [0.0, 0.0, 0.0]                # rad, fixed-axis roll/pitch/yaw
//!
//! [[links]]
//! name = "shoulder_yaw"                # optional
//! translation = [0.0, 0.0, 0.346]      # parent link frame -> joint frame, m
//! rpy = [0.0, 0.0, 0.0]                # rad
//! axis = [0.0, 0.0, 1.0]               # revolute axis in the joint frame, unit
//! mass = 8.0                           # kg
//! com = [0.0, 0.0, 0.0]                # center of mass in the link frame, m
//! inertia = [[0.1, 0.0, 0.0],          # about the center of mass, link frame, kg m^2
//!            [0.0, 0.1, 0.0],
//!            [0.0, 0.0, 0.1]]
//! ```
//!
//! The link frame of joint `i` is the joint frame rotated by `q[i]` about `axis`.

use nalgebra::{Isometry3, Matrix3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{line_of, toml_error, Error, Result};

const DEFAULT_MODEL: &str = include_str!("../../data/wam7.toml");

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub name: String,
    /// Fixed transform from the parent link frame to this joint's frame.
    pub parent_transform: Isometry3<f64>,
    pub axis: Unit<Vector3<f64>>,
    pub mass: f64,
    pub com: Vector3<f64>,
    /// Rotational inertia about the center of mass, expressed in the link frame.
    pub inertia: Matrix3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    links: Vec<Link>,
    tool: Isometry3<f64>,
    gravity: Vector3<f64>,
}

impl RobotModel {
    pub fn new(links: Vec<Link>, tool: Isometry3<f64>, gravity: Vector3<f64>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::invalid("robot model", "at least one link is required"));
        }
        for (i, link) in links.iter().enumerate() {
            validate_link(link).map_err(|reason| Error::invalid(format!("links[{i}]"), reason))?;
        }
        if !gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::invalid("gravity", "must be finite"));
        }
        Ok(Self { links, tool, gravity })
    }

    /// The bundled 7-DOF arm approximating a WAM-class manipulator.
    pub fn default_arm() -> Self {
        Self::from_toml_str(DEFAULT_MODEL, "wam7.toml").expect("bundled robot model is valid")
    }

    pub fn from_toml_str(src: &str, file: &str) -> Result<Self> {
        let def: ModelFile = toml::from_str(src).map_err(|e| toml_error(file, src, e))?;
        let mut links = Vec::with_capacity(def.links.len());
        for (i, spanned) in def.links.iter().enumerate() {
            let line = line_of(src, spanned.span().start);
            let l = spanned.get_ref();
            let link = Link {
                name: l.name.clone().unwrap_or_else(|| format!("link{i}")),
                parent_transform: isometry(l.translation, l.rpy),
                axis: Unit::new_unchecked(Vector3::from(l.axis)),
                mass: l.mass,
                com: Vector3::from(l.com),
                inertia: Matrix3::from_row_slice(&l.inertia.concat()),
            };
            if let Err(reason) = validate_link(&link) {
                let field = reason.split(':').next().unwrap_or("link").to_string();
                return Err(Error::Parse { file: file.to_string(), line, field: format!("links[{i}].{field}"), reason });
            }
            links.push(link);
        }
        let tool = def.tool.map(|t| isometry(t.translation, t.rpy)).unwrap_or_else(Isometry3::identity);
        Self::new(links, tool, Vector3::from(def.gravity))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src, &path.display().to_string())
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn tool(&self) -> &Isometry3<f64> {
        &self.tool
    }

    pub fn gravity(&self) -> Vector3<f64> {
        self.gravity
    }

    pub fn with_gravity(mut self, gravity: Vector3<f64>) -> Self {
        self.gravity = gravity;
        self
    }

    pub(crate) fn check_dof(&self, what: &'static str, len: usize) -> Result<()> {
        Error::check_len(what, self.dof(), len)
    }
}

fn validate_link(link: &Link) -> std::result::Result<(), String> {
    let axis_norm = link.axis.as_ref().norm();
    if (axis_norm - 1.0).abs() > 1e-9 {
        return Err(format!("axis: must be unit length (norm {axis_norm})"));
    }
    if !(link.mass >= 0.0 && link.mass.is_finite()) {
        return Err(format!("mass: must be finite and non-negative (got {})", link.mass));
    }
    if !link.com.iter().all(|c| c.is_finite()) {
        return Err("com: must be finite".into());
    }
    let i = &link.inertia;
    if (i - i.transpose()).amax() > 1e-12 {
        return Err("inertia: must be symmetric".into());
    }
    let eig = i.symmetric_eigenvalues();
    if eig.iter().any(|&l| l < -1e-12) {
        return Err("inertia: must be positive semidefinite".into());
    }
    Ok(())
}

fn isometry(translation: [f64; 3], rpy: [f64; 3]) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(translation[0], translation[1], translation[2]),
        UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
    )
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(default = "default_gravity")]
    gravity: [f64; 3],
    tool: Option<FrameDef>,
    links: Vec<toml::Spanned<LinkDef>>,
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FrameDef {
    #[serde(default)]
    translation: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct LinkDef {
    name: Option<String>,
    #[serde(default)]
    translation: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
    axis: [f64; 3],
    mass: f64,
    com: [f64; 3],
    inertia: [[f64; 3]; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
}

impl JointState {
    pub fn new(q: Vec<f64>, qd: Vec<f64>) -> Result<Self> {
        Error::check_len("qd", q.len(), qd.len())?;
        let s = Self { q, qd };
        if !s.is_finite() {
            return Err(Error::invalid("joint state", "non-finite entry"));
        }
        Ok(s)
    }

    pub fn at_rest(q: Vec<f64>) -> Self {
        let n = q.len();
        Self { q, qd: vec![0.0; n] }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qd).all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_model_has_seven_joints() {
        let m = RobotModel::default_arm();
        assert_eq!(m.dof(), 7);
        assert_eq!(m.gravity(), Vector3::new(0.0, 0.0, -9.81));
    }

    #[test]
    fn empty_model_is_rejected() {
        assert!(RobotModel::new(vec![], Isometry3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn parse_error_reports_line_and_field() {
        let src = r#"
[[links]]
axis = [0.0, 0.0, 1.0]
mass = 1.0
com = [0.0, 0.0, 0.0]
inertia = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]

[[links]]
axis = [0.0, 0.0, 2.0]
mass = 1.0
com = [0.0, 0.0, 0.0]
inertia = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
"#;
        match RobotModel::from_toml_str(src, "arm.toml") {
            Err(Error::Parse { line, field, .. }) => {
                assert_eq!(field, "links[1].axis");
                assert!((8..=12).contains(&line), "line {line}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_names_the_field() {
        let src =
            "[[links]]\naxis = [0.0, 0.0, 1.0]\ncom = [0.0, 0.0, 0.0]\ninertia = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]\n";
        match RobotModel::from_toml_str(src, "arm.toml") {
            Err(Error::Parse { field, line, .. }) => {
                assert_eq!(field, "mass");
                assert!(line >= 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn asymmetric_inertia_is_rejected() {
        let src = "[[links]]\naxis = [0.0, 0.0, 1.0]\nmass = 1.0\ncom = [0.0, 0.0, 0.0]\ninertia = [[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]\n";
        assert!(matches!(RobotModel::from_toml_str(src, "arm.toml"), Err(Error::Parse { .. })));
    }

    #[test]
    fn joint_state_rejects_mismatch_and_nan() {
        assert!(JointState::new(vec![0.0; 3], vec![0.0; 2]).is_err());
        assert!(JointState::new(vec![f64::NAN], vec![0.0]).is_err());
    }
}
