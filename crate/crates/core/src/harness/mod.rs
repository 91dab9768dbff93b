// SPDX-License-Identifier: Apache-2.0

//! Scenario files, experiment matrices and the live session server.

pub mod run;
pub mod scenario;
pub mod serve;

pub use run::{recompute_metrics, run_matrix, run_scenarios, ScenarioSummary, Summary, TrialSummary};
pub use scenario::Scenario;
pub use serve::{serve_blocking, ClientMessage, Phase, ServeOptions, Server, ServerMessage, Snapshot};
