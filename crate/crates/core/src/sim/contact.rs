// SPDX-License-Identifier: Apache-2.0

//! Penalty contact between the tool tip and rigid analytic surfaces.

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Slip speed below which Coulomb friction is linearly regularized, m/s.
pub const FRICTION_REGULARIZATION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turntable {
    /// Center of the top face.
    pub center: Vector3<f64>,
    /// Rotation axis and outward normal of the top face.
    pub axis: Unit<Vector3<f64>>,
    pub radius: f64,
    /// kg m^2
    pub inertia: f64,
    /// N m s
    pub viscous: f64,
    /// rad, wrapped to [0, 2π)
    #[serde(default)]
    pub angle: f64,
    /// rad/s about `axis`
    #[serde(default)]
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceModel {
    Plane { point: Vector3<f64>, normal: Unit<Vector3<f64>> },
    Sphere { center: Vector3<f64>, radius: f64 },
    Turntable(Turntable),
}

impl SurfaceModel {
    pub fn plane(point: Vector3<f64>, normal: Vector3<f64>) -> Result<Self> {
        let s = SurfaceModel::Plane { point, normal: Unit::new_normalize(normal) };
        if normal.norm() < 1e-12 {
            return Err(Error::invalid("plane", "normal must be nonzero"));
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: &Unit<Vector3<f64>>| (v.as_ref().norm() - 1.0).abs() < 1e-9;
        match self {
            SurfaceModel::Plane { normal, point } => {
                if !unit(normal) || !point.iter().all(|v| v.is_finite()) {
                    return Err(Error::invalid("plane", "normal must be unit length and point finite"));
                }
            }
            SurfaceModel::Sphere { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::invalid("sphere", "radius must be positive"));
                }
            }
            SurfaceModel::Turntable(t) => {
                if !unit(&t.axis) || !(t.radius > 0.0) || !(t.inertia > 0.0) || t.viscous < 0.0 {
                    return Err(Error::invalid("turntable", "axis must be unit, radius and inertia positive, viscous non-negative"));
                }
            }
        }
        Ok(())
    }

    /// Signed distance from the surface (negative inside) and the outward normal.
    pub fn signed_distance(&self, x: &Vector3<f64>) -> (f64, Vector3<f64>) {
        match self {
            SurfaceModel::Plane { point, normal } => ((x - point).dot(normal), normal.into_inner()),
            SurfaceModel::Sphere { center, radius } => {
                let r = x - center;
                let d = r.norm();
                let n = if d > 0.0 { r / d } else { Vector3::z() };
                (d - radius, n)
            }
            SurfaceModel::Turntable(t) => {
                let r = x - t.center;
                let h = r.dot(&t.axis);
                let radial = (r - t.axis.into_inner() * h).norm();
                if radial <= t.radius {
                    (h, t.axis.into_inner())
                } else {
                    // Off the disk the tool is in free space.
                    (f64::INFINITY, t.axis.into_inner())
                }
            }
        }
    }

    /// Velocity of the surface material at `x`.
    pub fn surface_velocity(&self, x: &Vector3<f64>) -> Vector3<f64> {
        match self {
            SurfaceModel::Turntable(t) => (t.axis.into_inner() * t.omega).cross(&(x - t.center)),
            _ => Vector3::zeros(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// N/m
    pub stiffness: f64,
    /// N s/m
    pub damping: f64,
    pub friction: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { stiffness: 2.0e4, damping: 50.0, friction: 0.3 }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.stiffness > 0.0) || self.damping < 0.0 || self.friction < 0.0 {
            return Err(Error::invalid("contact params", "need k_c > 0, b_c >= 0, mu >= 0"));
        }
        Ok(())
    }
}

/// Force exerted by the surface on the tool tip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    pub force: Vector3<f64>,
    /// Magnitude of the normal component, N (never negative).
    pub normal_force: f64,
    pub friction_force: Vector3<f64>,
    pub in_contact: bool,
    pub normal: Vector3<f64>,
    pub penetration: f64,
}

pub fn contact_force(surface: &SurfaceModel, x: &Vector3<f64>, xd: &Vector3<f64>, params: &ContactParams) -> Contact {
    let (phi, n) = surface.signed_distance(x);
    if !(phi < 0.0) {
        return Contact {
            force: Vector3::zeros(),
            normal_force: 0.0,
            friction_force: Vector3::zeros(),
            in_contact: false,
            normal: n,
            penetration: 0.0,
        };
    }
    let v_rel = xd - surface.surface_velocity(x);
    let vn = v_rel.dot(&n);
    let fn_mag = (-params.stiffness * phi - params.damping * vn).max(0.0);
    let slip = v_rel - n * vn;
    let speed = slip.norm();
    let friction = if speed > 0.0 { -slip * (params.friction * fn_mag / speed.max(FRICTION_REGULARIZATION)) } else { Vector3::zeros() };
    Contact { force: n * fn_mag + friction, normal_force: fn_mag, friction_force: friction, in_contact: true, normal: n, penetration: -phi }
}

/// Advance the turntable by one step under a force applied to its surface at `point`.
pub fn turntable_step(surface: &mut SurfaceModel, force: &Vector3<f64>, point: &Vector3<f64>, dt: f64) -> Result<()> {
    let SurfaceModel::Turntable(t) = surface else {
        return Err(Error::invalid("surface", "turntable_step needs a turntable"));
    };
    let torque = (point - t.center).cross(force).dot(&t.axis);
    let accel = (torque - t.viscous * t.omega) / t.inertia;
    t.omega += accel * dt;
    t.angle = (t.angle + t.omega * dt).rem_euclid(TAU);
    Ok(())
}
