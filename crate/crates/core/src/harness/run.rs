// SPDX-License-Identifier: Apache-2.0

//! Headless experiment matrices.
//!
//! Output layout under the chosen directory:
//!
//! ```text
//! summary.json
//! <scenario>/gt_path.json
//! <scenario>/report.csv, report.md
//! <scenario>/<mode>/seed_<k>.csv, seed_<k>.json
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::geometry::DesiredPath;
use crate::metrics::{aggregate, trial_metrics, MetricsReport, TrialMetrics, TrialRecord, TrialStatus};
use crate::operators::{run_trial, Mode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub mode: Mode,
    pub seed: u64,
    /// Absent when the trial could not be set up (see `error`).
    pub status: Option<TrialStatus>,
    pub metrics: Option<TrialMetrics>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub trials: Vec<TrialSummary>,
    pub report: Option<MetricsReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenarios: Vec<ScenarioSummary>,
    /// Trials that faulted or failed to start.
    pub failures: usize,
}

impl Summary {
    pub fn ok(&self) -> bool {
        self.failures == 0
    }
}

pub fn record_stem(seed: u64) -> String {
    format!("seed_{seed}")
}

fn score(rec: &TrialRecord, gt: &DesiredPath) -> (Option<TrialMetrics>, Option<String>) {
    match trial_metrics(rec, gt.points(), gt.is_closed()) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(format!("metrics: {e}"))),
    }
}

fn report_of(trials: &[TrialSummary]) -> Option<MetricsReport> {
    let scored: Vec<(Mode, TrialMetrics)> = trials.iter().filter_map(|t| t.metrics.clone().map(|m| (t.mode, m))).collect();
    aggregate(&scored).ok()
}

fn write_report(dir: &Path, report: &Option<MetricsReport>) -> Result<()> {
    if let Some(r) = report {
        std::fs::write(dir.join("report.csv"), r.to_csv())?;
        std::fs::write(dir.join("report.md"), r.to_markdown())?;
    }
    Ok(())
}

/// Runs every (scenario, mode, seed) trial. Scenario errors abort before any
/// trial runs; trial faults are recorded and the run continues.
pub fn run_matrix(scenario_files: &[PathBuf], out: &Path, jobs: Option<usize>) -> Result<Summary> {
    let scenarios = scenario_files.iter().map(|p| Scenario::load(p)).collect::<Result<Vec<_>>>()?;
    run_scenarios(&scenarios, out, jobs)
}

pub fn run_scenarios(scenarios: &[Scenario], out: &Path, jobs: Option<usize>) -> Result<Summary> {
    std::fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build().map_err(|e| Error::invalid("jobs", e.to_string()))?;
    let mut summaries = Vec::new();
    let mut failures = 0;
    for sc in scenarios {
        let dir = out.join(&sc.name);
        std::fs::create_dir_all(&dir)?;
        sc.task.ground_truth.save(&dir.join("gt_path.json"))?;
        let grid: Vec<(Mode, u64)> = sc.modes.iter().flat_map(|&m| sc.seeds().map(move |s| (m, s))).collect();
        let trials: Vec<TrialSummary> = pool.install(|| {
            grid.par_iter()
                .map(|&(mode, seed)| {
                    log::info!("{}: {} seed {}", sc.name, mode, seed);
                    match run_trial(&sc.task, mode, seed) {
                        Ok(rec) => {
                            let save = rec.save(&dir.join(mode.key()), &record_stem(seed));
                            let (metrics, err) = score(&rec, &sc.task.ground_truth);
                            TrialSummary {
                                mode,
                                seed,
                                status: Some(rec.meta.status.clone()),
                                metrics,
                                error: save.err().map(|e| format!("save: {e}")).or(err),
                            }
                        }
                        Err(e) => TrialSummary { mode, seed, status: None, metrics: None, error: Some(e.to_string()) },
                    }
                })
                .collect()
        });
        failures += trials.iter().filter(|t| t.status.as_ref().is_none_or(|s| s.is_fault())).count();
        let report = report_of(&trials);
        write_report(&dir, &report)?;
        summaries.push(ScenarioSummary { name: sc.name.clone(), trials, report });
    }
    let summary = Summary { scenarios: summaries, failures };
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

/// Rescores saved records under `dir` and rewrites the per-scenario reports.
pub fn recompute_metrics(dir: &Path) -> Result<Vec<ScenarioSummary>> {
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> =
        std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.join("gt_path.json").is_file()).collect();
    entries.sort();
    for sc_dir in entries {
        let gt = DesiredPath::load(&sc_dir.join("gt_path.json"))?;
        let mut trials = Vec::new();
        for mode in Mode::ALL {
            let mdir = sc_dir.join(mode.key());
            if !mdir.is_dir() {
                continue;
            }
            let mut stems: Vec<(u64, String)> = std::fs::read_dir(&mdir)?
                .filter_map(|e| e.ok())
                .filter_map(|e| {
                    let name = e.file_name().to_string_lossy().to_string();
                    let stem = name.strip_suffix(".csv")?.to_string();
                    let seed = stem.strip_prefix("seed_")?.parse().ok()?;
                    Some((seed, stem))
                })
                .collect();
            stems.sort();
            for (seed, stem) in stems {
                let rec = TrialRecord::load(&mdir, &stem)?;
                let (metrics, error) = score(&rec, &gt);
                trials.push(TrialSummary { mode, seed, status: Some(rec.meta.status.clone()), metrics, error });
            }
        }
        let report = report_of(&trials);
        write_report(&sc_dir, &report)?;
        let name = sc_dir.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
        out.push(ScenarioSummary { name, trials, report });
    }
    if out.is_empty() {
        return Err(Error::invalid(format!("metrics input {}", dir.display()), "no scenario directories with gt_path.json"));
    }
    Ok(out)
}
