// SPDX-License-Identifier: Apache-2.0

//! Organized point clouds and their on-disk format.
//!
//! A cloud file starts with a text header, one `key value` pair per line,
//! terminated by `end`:
//!
//! ```text
//! VFCLOUD 1
//! width 640
//! height 480
//! format binary
//! end
//! ```
//!
//! With `format binary` the header is followed by `width * height` records of
//! three little-endian f64 (x, y, z, meters, camera frame) and one byte
//! (1 = valid, 0 = invalid), row-major. With `format ascii` each pixel is a line
//! `x y z valid`. Both encodings reproduce finite values exactly.

use nalgebra::Vector3;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OrganizedPointCloud {
    width: usize,
    height: usize,
    points: Vec<Vector3<f64>>,
    valid: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CloudEncoding {
    Binary,
    Ascii,
}

impl OrganizedPointCloud {
    pub fn new(width: usize, height: usize, points: Vec<Vector3<f64>>, valid: Vec<bool>) -> Result<Self> {
        let n = width * height;
        Error::check_len("cloud points", n, points.len())?;
        Error::check_len("cloud validity mask", n, valid.len())?;
        Ok(Self { width, height, points, valid })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    /// The point at pixel (u, v) if it is valid.
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<Vector3<f64>> {
        if u >= self.width || v >= self.height {
            return None;
        }
        let i = self.index(u, v);
        self.valid[i].then(|| self.points[i])
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.get(u, v).is_some()
    }

    /// Nearest valid pixel to (u, v) within `radius` pixels (Euclidean in the image).
    pub fn nearest_valid_pixel(&self, u: f64, v: f64, radius: usize) -> Option<(usize, usize)> {
        let cu = u.round() as i64;
        let cv = v.round() as i64;
        let r = radius as i64;
        let mut best: Option<((usize, usize), f64)> = None;
        for dv in -r..=r {
            for du in -r..=r {
                let (pu, pv) = (cu + du, cv + dv);
                if pu < 0 || pv < 0 || !self.is_valid(pu as usize, pv as usize) {
                    continue;
                }
                let d2 = (pu as f64 - u).powi(2) + (pv as f64 - v).powi(2);
                if d2 > (radius as f64).powi(2) + 1e-9 {
                    continue;
                }
                if best.is_none_or(|(_, b)| d2 < b) {
                    best = Some(((pu as usize, pv as usize), d2));
                }
            }
        }
        best.map(|(p, _)| p)
    }

    /// Depth image (camera z) with invalid pixels as NaN.
    pub fn depth(&self) -> Vec<f64> {
        self.points.iter().zip(&self.valid).map(|(p, &ok)| if ok { p.z } else { f64::NAN }).collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W, encoding: CloudEncoding) -> Result<()> {
        let fmt = match encoding {
            CloudEncoding::Binary => "binary",
            CloudEncoding::Ascii => "ascii",
        };
        write!(w, "VFCLOUD 1\nwidth {}\nheight {}\nformat {fmt}\nend\n", self.width, self.height)?;
        for (p, &ok) in self.points.iter().zip(&self.valid) {
            match encoding {
                CloudEncoding::Binary => {
                    for c in p.iter() {
                        w.write_all(&c.to_le_bytes())?;
                    }
                    w.write_all(&[ok as u8])?;
                }
                CloudEncoding::Ascii => writeln!(w, "{} {} {} {}", p.x, p.y, p.z, ok as u8)?,
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let bad = |msg: &str| Error::invalid("cloud file", msg.to_string());
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim() != "VFCLOUD 1" {
            return Err(bad("missing 'VFCLOUD 1' magic"));
        }
        let (mut width, mut height, mut encoding) = (None, None, None);
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(bad("header not terminated by 'end'"));
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some("end"), None) => break,
                (Some("width"), Some(v)) => width = v.parse::<usize>().ok(),
                (Some("height"), Some(v)) => height = v.parse::<usize>().ok(),
                (Some("format"), Some("binary")) => encoding = Some(CloudEncoding::Binary),
                (Some("format"), Some("ascii")) => encoding = Some(CloudEncoding::Ascii),
                _ => return Err(bad(&format!("bad header line '{}'", line.trim()))),
            }
        }
        let (width, height) = width.zip(height).ok_or_else(|| bad("missing width or height"))?;
        let n = width * height;
        let mut points = Vec::with_capacity(n);
        let mut valid = Vec::with_capacity(n);
        match encoding.ok_or_else(|| bad("missing format"))? {
            CloudEncoding::Binary => {
                let mut rec = [0u8; 25];
                for _ in 0..n {
                    r.read_exact(&mut rec)?;
                    let f = |k: usize| f64::from_le_bytes(rec[8 * k..8 * k + 8].try_into().expect("8 bytes"));
                    points.push(Vector3::new(f(0), f(1), f(2)));
                    valid.push(rec[24] != 0);
                }
            }
            CloudEncoding::Ascii => {
                for i in 0..n {
                    line.clear();
                    r.read_line(&mut line)?;
                    let vals: Vec<f64> = line
                        .split_whitespace()
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(&format!("pixel {i}: unparsable line")))?;
                    if vals.len() != 4 {
                        return Err(bad(&format!("pixel {i}: expected 4 fields")));
                    }
                    points.push(Vector3::new(vals[0], vals[1], vals[2]));
                    valid.push(vals[3] != 0.0);
                }
            }
        }
        Self::new(width, height, points, valid)
    }

    pub fn save(&self, path: &Path, encoding: CloudEncoding) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f, encoding)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> OrganizedPointCloud {
        let pts = (0..12).map(|i| Vector3::new(i as f64, 0.5 * i as f64, 1.0)).collect();
        let mut valid = vec![true; 12];
        valid[5] = false;
        OrganizedPointCloud::new(4, 3, pts, valid).unwrap()
    }

    #[test]
    fn size_mismatch_is_rejected() {
        assert!(OrganizedPointCloud::new(2, 2, vec![Vector3::zeros(); 3], vec![true; 4]).is_err());
    }

    #[test]
    fn invalid_pixel_lookup() {
        let c = grid();
        assert!(c.get(1, 1).is_none());
        assert!(c.get(4, 0).is_none());
        assert_eq!(c.nearest_valid_pixel(1.0, 1.0, 5), Some((1, 0)));
    }

    #[test]
    fn garbage_header_is_rejected() {
        assert!(OrganizedPointCloud::read_from(&b"PCD\n"[..]).is_err());
        assert!(OrganizedPointCloud::read_from(&b"VFCLOUD 1\nwidth 2\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn file_round_trip_is_lossless(
            vals in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3, 1e-3f64..1e3, any::<bool>()), 12),
            ascii in any::<bool>(),
        ) {
            let pts = vals.iter().map(|&(x, y, z, _)| Vector3::new(x, y, z)).collect();
            let valid = vals.iter().map(|v| v.3).collect();
            let c = OrganizedPointCloud::new(3, 4, pts, valid).unwrap();
            let enc = if ascii { CloudEncoding::Ascii } else { CloudEncoding::Binary };
            let mut buf = Vec::new();
            c.write_to(&mut buf, enc).unwrap();
            prop_assert_eq!(OrganizedPointCloud::read_from(&buf[..]).unwrap(), c);
        }
    }
}
