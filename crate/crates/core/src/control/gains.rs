// SPDX-License-Identifier: Apache-2.0

//! Controller gains and their TOML file.
//!
//! ```toml
//! [path]
//! kp = 1000.0          # N/m
//! kd = 10.0            # N s/m
//! [normal]
//! kp = 10.0            # N/m
//! kd = 0.1             # N s/m
//! f0 = 4.0             # N
//! [tangential]
//! kp = 15.0            # N s/m
//! kd = 0.01            # N s^2/m
//! vd = 0.02            # m/s
//! [orientation]
//! kp = [[7, 0, 0], [0, 7, 0], [0, 0, 0]]   # N m/rad, tool frame, rows
//! kd = [[0.01, 0, 0], [0, 0.01, 0], [0, 0, 0.01]]
//! [bilateral]
//! kp = [900, 2500, 600, 500, 50, 50, 8]    # N m/rad per joint
//! kd = [10, 20, 5, 2, 0.5, 0.5, 0.05]
//! ```
//!
//! Missing sections take the defaults shown above.

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{toml_error, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathGains {
    pub kp: f64,
    pub kd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalGains {
    pub kp: f64,
    pub kd: f64,
    pub f0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TangentialGains {
    pub kp: f64,
    pub kd: f64,
    pub vd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientationGains {
    #[serde(with = "rows")]
    pub kp: Matrix3<f64>,
    #[serde(with = "rows")]
    pub kd: Matrix3<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilateralGains {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainSet {
    pub path: PathGains,
    pub normal: NormalGains,
    pub tangential: TangentialGains,
    pub orientation: OrientationGains,
    pub bilateral: BilateralGains,
}

impl Default for GainSet {
    fn default() -> Self {
        Self {
            path: PathGains { kp: 1000.0, kd: 10.0 },
            normal: NormalGains { kp: 10.0, kd: 0.1, f0: 4.0 },
            tangential: TangentialGains { kp: 15.0, kd: 0.01, vd: 0.02 },
            orientation: OrientationGains { kp: Matrix3::from_diagonal(&[7.0, 7.0, 0.0].into()), kd: Matrix3::identity() * 0.01 },
            bilateral: BilateralGains {
                kp: vec![900.0, 2500.0, 600.0, 500.0, 50.0, 50.0, 8.0],
                kd: vec![10.0, 20.0, 5.0, 2.0, 0.5, 0.5, 0.05],
            },
        }
    }
}

fn nonneg(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(what, format!("must be finite and >= 0, got {v}")))
    }
}

impl GainSet {
    pub fn validate(&self) -> Result<()> {
        nonneg("path.kp", self.path.kp)?;
        nonneg("path.kd", self.path.kd)?;
        nonneg("normal.kp", self.normal.kp)?;
        nonneg("normal.kd", self.normal.kd)?;
        nonneg("normal.f0", self.normal.f0)?;
        nonneg("tangential.kp", self.tangential.kp)?;
        nonneg("tangential.kd", self.tangential.kd)?;
        nonneg("tangential.vd", self.tangential.vd)?;
        for (name, m) in [("orientation.kp", &self.orientation.kp), ("orientation.kd", &self.orientation.kd)] {
            for &x in m.iter() {
                if !x.is_finite() {
                    return Err(Error::invalid(name, "entries must be finite"));
                }
            }
            for i in 0..3 {
                nonneg(name, m[(i, i)])?;
            }
        }
        if self.bilateral.kp.len() != self.bilateral.kd.len() {
            return Err(Error::Dimension { what: "bilateral.kd", expected: self.bilateral.kp.len(), got: self.bilateral.kd.len() });
        }
        for &k in self.bilateral.kp.iter() {
            nonneg("bilateral.kp", k)?;
        }
        for &k in self.bilateral.kd.iter() {
            nonneg("bilateral.kd", k)?;
        }
        Ok(())
    }

    pub fn from_toml_str(src: &str, file: &str) -> Result<Self> {
        let g: GainSet = toml::from_str(src).map_err(|e| toml_error(file, src, e))?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("gains serialize")
    }
}

mod rows {
    use nalgebra::Matrix3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let r: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
        r.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let r = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Matrix3::from_fn(|i, j| r[i][j]))
    }
}
