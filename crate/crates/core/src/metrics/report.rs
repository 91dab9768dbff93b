// SPDX-License-Identifier: Apache-2.0

//! Per-trial metrics and per-mode aggregate tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::losses::{contact_losses, DEBOUNCE};
use super::record::{TrialRecord, RECORD_RATE_HZ};
use super::sal::{sal, speed_profile, DEFAULT_CUTOFF};
use super::tracking::{contact_window, trajectory_error};
use crate::error::{Error, Result};
use crate::operators::Mode;

/// Cutoff of the speed low-pass before SAL, Hz.
pub const SPEED_FILTER_HZ: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub sal: f64,
    pub mean_error_mm: f64,
    pub error_variance_mm2: f64,
    pub error_sd_mm: f64,
    pub contact_losses: usize,
    pub duration: f64,
}

/// Scores one record against the ground-truth path. Error, SAL and losses use
/// the samples from first to last contact.
pub fn trial_metrics(rec: &TrialRecord, gt: &[Vector3<f64>], closed: bool) -> Result<TrialMetrics> {
    let x = rec.positions();
    let contact = rec.contact_flags();
    let err = trajectory_error(&x, &contact, gt, closed)?;
    let (a, b) = contact_window(&contact).expect("checked by trajectory_error");
    let dt = 1.0 / RECORD_RATE_HZ;
    let speed = speed_profile(&x[a..=b], dt, SPEED_FILTER_HZ);
    Ok(TrialMetrics {
        sal: sal(&speed, dt, DEFAULT_CUTOFF)?,
        mean_error_mm: err.mean_mm,
        error_variance_mm2: err.variance_mm2,
        error_sd_mm: err.sd_mm,
        contact_losses: contact_losses(&rec.times(), &contact, DEBOUNCE),
        duration: rec.meta.duration,
    })
}

/// Mean and population variance over trials.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub variance: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat { mean: f64::NAN, variance: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat { mean, variance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeAggregate {
    pub trials: usize,
    pub sal: Stat,
    pub mean_error_mm: Stat,
    pub error_variance_mm2: Stat,
    pub error_sd_mm: Stat,
    pub contact_losses: Stat,
    pub duration: Stat,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub modes: BTreeMap<Mode, ModeAggregate>,
}

pub fn aggregate(trials: &[(Mode, TrialMetrics)]) -> Result<MetricsReport> {
    let mut by_mode: BTreeMap<Mode, Vec<&TrialMetrics>> = BTreeMap::new();
    for (m, t) in trials {
        by_mode.entry(*m).or_default().push(t);
    }
    if by_mode.is_empty() {
        return Err(Error::Metric("no trials to aggregate".into()));
    }
    let modes = by_mode
        .into_iter()
        .map(|(m, ts)| {
            let col = |f: fn(&TrialMetrics) -> f64| Stat::of(&ts.iter().map(|t| f(t)).collect::<Vec<_>>());
            let agg = ModeAggregate {
                trials: ts.len(),
                sal: col(|t| t.sal),
                mean_error_mm: col(|t| t.mean_error_mm),
                error_variance_mm2: col(|t| t.error_variance_mm2),
                error_sd_mm: col(|t| t.error_sd_mm),
                contact_losses: col(|t| t.contact_losses as f64),
                duration: col(|t| t.duration),
            };
            (m, agg)
        })
        .collect();
    Ok(MetricsReport { modes })
}

type Row = (&'static str, fn(&ModeAggregate) -> f64);

const ROWS: [Row; 8] = [
    ("mean error (mm)", |a| a.mean_error_mm.mean),
    ("error variance (mm^2)", |a| a.error_variance_mm2.mean),
    ("error SD (mm)", |a| a.error_sd_mm.mean),
    ("contact losses per trial", |a| a.contact_losses.mean),
    ("SAL", |a| a.sal.mean),
    ("SAL variance", |a| a.sal.variance),
    ("duration (s)", |a| a.duration.mean),
    ("trials", |a| a.trials as f64),
];

impl MetricsReport {
    fn cell(&self, m: Mode, f: fn(&ModeAggregate) -> f64) -> Option<f64> {
        self.modes.get(&m).map(f)
    }

    /// One row per metric, one column per mode in uni, bi, uni-VF, bi-VF order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric");
        for m in Mode::ALL {
            s.push(',');
            s.push_str(m.key());
        }
        s.push('\n');
        for (name, f) in ROWS {
            s.push_str(name);
            for m in Mode::ALL {
                s.push(',');
                if let Some(v) = self.cell(m, f) {
                    s.push_str(&v.to_string());
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let head = |s: &mut String, title: &str| {
            let _ = writeln!(s, "| {title} | {} |", Mode::ALL.map(|m| m.label()).join(" | "));
            let _ = writeln!(s, "|---|{}", "---:|".repeat(4));
        };
        let row = |s: &mut String, name: &str, f: fn(&ModeAggregate) -> f64, prec: usize| {
            let cells = Mode::ALL.map(|m| self.cell(m, f).map_or("n/a".to_string(), |v| format!("{v:.prec$}")));
            let _ = writeln!(s, "| {name} | {} |", cells.join(" | "));
        };
        s.push_str("### Trajectory error\n\n");
        head(&mut s, "");
        row(&mut s, "mean (mm)", ROWS[0].1, 2);
        row(&mut s, "variance (mm^2)", ROWS[1].1, 2);
        row(&mut s, "SD (mm)", ROWS[2].1, 2);
        s.push_str("\n### Loss of contact\n\n");
        head(&mut s, "");
        row(&mut s, "mean per trial", ROWS[3].1, 2);
        s.push_str("\n### Smoothness and time\n\n");
        head(&mut s, "");
        row(&mut s, "SAL mean", ROWS[4].1, 3);
        row(&mut s, "SAL variance", ROWS[5].1, 4);
        row(&mut s, "duration (s)", ROWS[6].1, 2);
        row(&mut s, "trials", ROWS[7].1, 0);
        s
    }
}
