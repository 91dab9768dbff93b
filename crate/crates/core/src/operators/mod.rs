// SPDX-License-Identifier: Apache-2.0

//! Scripted operators and the closed-loop trial runner.

pub mod ik;
pub mod mode;
pub mod noise;
pub mod operator;
pub mod trial;

pub use ik::{solve_ik, IkOptions};
pub use mode::Mode;
pub use noise::BandLimitedNoise;
pub use operator::{
    plan_ideal, pursuit_force, BiOperator, GamepadCommand, GamepadController, GamepadGains, IdealTrajectory, OperatorModel, UniOperator,
};
pub use trial::{
    run_trial, start_above_path, ClickSetup, ClosedLoop, EndCondition, LoopStep, OperatorInput, Task, VfPathSource, SEED_POSE,
};
