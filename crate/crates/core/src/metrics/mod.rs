// SPDX-License-Identifier: Apache-2.0

//! Trial records and their scores: smoothness, path error, contact losses.

pub mod losses;
pub mod record;
pub mod report;
pub mod sal;
pub mod tracking;

pub use losses::{contact_losses, DEBOUNCE};
pub use record::{Sample, TrialMeta, TrialRecord, TrialStatus, RECORD_RATE_HZ};
pub use report::{aggregate, trial_metrics, MetricsReport, ModeAggregate, Stat, TrialMetrics};
pub use sal::{sal, speed_profile, DEFAULT_CUTOFF};
pub use tracking::{trajectory_error, ErrorStats};
