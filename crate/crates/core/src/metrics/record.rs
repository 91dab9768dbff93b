// SPDX-License-Identifier: Apache-2.0

//! Trial records: a 100 Hz sample table (CSV) plus a JSON metadata sidecar.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::Mode;

pub const RECORD_RATE_HZ: f64 = 100.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub q: Vec<f64>,
    pub x: Vector3<f64>,
    pub f_n: f64,
    pub in_contact: bool,
    /// Nearest path vertex, ground-truth path.
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    Timeout,
    Faulted { step: u64, diagnostic: String },
}

impl TrialStatus {
    pub fn is_fault(&self) -> bool {
        matches!(self, TrialStatus::Faulted { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub mode: Mode,
    pub scenario: String,
    pub seed: u64,
    pub status: TrialStatus,
    /// Simulated time from start to end condition, s.
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub meta: TrialMeta,
    pub samples: Vec<Sample>,
}

impl TrialRecord {
    /// Times strictly increasing and spaced 1/100 s apart within 1e-9 s.
    pub fn validate(&self) -> Result<()> {
        let period = 1.0 / RECORD_RATE_HZ;
        for (i, w) in self.samples.windows(2).enumerate() {
            let dt = w[1].t - w[0].t;
            if !(dt > 0.0) || (dt - period).abs() > 1e-9 {
                return Err(Error::invalid("trial record", format!("sample {}: spacing {dt} s, expected {period} s", i + 1)));
            }
        }
        if let Some(s) = self.samples.first() {
            let dof = s.q.len();
            if let Some((i, _)) = self.samples.iter().enumerate().find(|(_, s)| s.q.len() != dof) {
                return Err(Error::invalid("trial record", format!("sample {i}: joint count differs")));
            }
        }
        Ok(())
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.samples.iter().map(|s| s.x).collect()
    }

    pub fn contact_flags(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.in_contact).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Columns `t, q0..qN, x, y, z, f_n, contact, idx`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let dof = self.samples.first().map_or(0, |s| s.q.len());
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..dof).map(|i| format!("q{i}")));
        header.extend(["x", "y", "z", "f_n", "contact", "idx"].map(String::from));
        out.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![s.t.to_string()];
            row.extend(s.q.iter().map(|v| v.to_string()));
            row.extend(s.x.iter().map(|v| v.to_string()));
            row.push(s.f_n.to_string());
            row.push(u8::from(s.in_contact).to_string());
            row.push(s.index.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, meta: TrialMeta) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let dof = header.iter().filter(|h| h.starts_with('q')).count();
        if header.len() != dof + 7 {
            return Err(Error::invalid("trial csv", format!("unexpected header {header:?}")));
        }
        let mut samples = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let num = |k: usize| -> Result<f64> {
                row.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                    file: "trial csv".into(),
                    line,
                    field: header.get(k).unwrap_or("?").to_string(),
                    reason: "not a number".into(),
                })
            };
            let q = (0..dof).map(|k| num(1 + k)).collect::<Result<Vec<_>>>()?;
            let b = 1 + dof;
            samples.push(Sample {
                t: num(0)?,
                q,
                x: Vector3::new(num(b)?, num(b + 1)?, num(b + 2)?),
                f_n: num(b + 3)?,
                in_contact: num(b + 4)? != 0.0,
                index: num(b + 5)? as usize,
            });
        }
        Ok(Self { meta, samples })
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        let json = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let meta: TrialMeta = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        Self::read_csv(std::fs::File::open(dir.join(format!("{stem}.csv")))?, meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> TrialMeta {
        TrialMeta {
            mode: Mode::UniVf,
            scenario: "line".into(),
            seed: 3,
            status: TrialStatus::Faulted { step: 12, diagnostic: "nan".into() },
            duration: 1.5,
        }
    }

    proptest! {
        #[test]
        fn csv_round_trip(vals in prop::collection::vec((-1e3f64..1e3, any::<bool>(), 0usize..500), 1..40)) {
            let samples = vals.iter().enumerate().map(|(i, &(v, c, k))| Sample {
                t: i as f64 / RECORD_RATE_HZ,
                q: vec![v, -v / 3.0],
                x: Vector3::new(v * 1e-3, 0.1, -v),
                f_n: v.abs(),
                in_contact: c,
                index: k,
            }).collect();
            let rec = TrialRecord { meta: meta(), samples };
            let mut buf = Vec::new();
            rec.write_csv(&mut buf).unwrap();
            let back = TrialRecord::read_csv(buf.as_slice(), meta()).unwrap();
            prop_assert_eq!(back, rec);
        }
    }

    #[test]
    fn header_layout() {
        let rec = TrialRecord {
            meta: meta(),
            samples: vec![Sample { t: 0.0, q: vec![0.0; 3], x: Vector3::zeros(), f_n: 0.0, in_contact: true, index: 0 }],
        };
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,q0,q1,q2,x,y,z,f_n,contact,idx");
    }

    #[test]
    fn spacing_is_checked() {
        let s = |t| Sample { t, q: vec![], x: Vector3::zeros(), f_n: 0.0, in_contact: false, index: 0 };
        let ok = TrialRecord { meta: meta(), samples: vec![s(0.0), s(0.01), s(0.02)] };
        assert!(ok.validate().is_ok());
        let bad = TrialRecord { meta: meta(), samples: vec![s(0.0), s(0.01), s(0.025)] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let rec = TrialRecord {
            meta: meta(),
            samples: vec![Sample { t: 0.0, q: vec![0.25; 7], x: Vector3::new(0.5, 0.0, 0.1), f_n: 4.0, in_contact: true, index: 2 }],
        };
        rec.save(dir.path(), "seed_0").unwrap();
        assert_eq!(TrialRecord::load(dir.path(), "seed_0").unwrap(), rec);
    }
}
