// SPDX-License-Identifier: Apache-2.0

//! Vision-force virtual-fixture teleoperation in simulation.
//!
//! A torque-controlled serial arm ([`sim`]) follows a path on a surface under a
//! four-part virtual-fixture controller ([`control`]). Paths and surface normals
//! come from organized point clouds ([`perception`]); scripted operators stand in
//! for people in four teleoperation configurations ([`operators`]); trials are
//! scored by smoothness, path error and contact losses ([`metrics`]) and driven
//! from the command line or a live WebSocket session ([`harness`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod operators;
pub mod perception;
pub mod sim;

pub use error::{Error, Result};
