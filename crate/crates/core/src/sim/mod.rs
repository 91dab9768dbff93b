// SPDX-License-Identifier: Apache-2.0

//! Fixed-timestep simulation of a torque-controlled serial arm touching rigid surfaces.

pub mod contact;
pub mod dynamics;
pub mod kinematics;
pub mod model;
pub mod step;

pub use contact::{contact_force, turntable_step, Contact, ContactParams, SurfaceModel, Turntable};
pub use dynamics::{bias_torque, gravity_torque, inverse_dynamics, mass_matrix};
pub use kinematics::{forward_kinematics, jacobian, link_frames, Pose};
pub use model::{JointState, Link, RobotModel};
pub use step::{step, ContactSample, Integrator, SimConfig};
