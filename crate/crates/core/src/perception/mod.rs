// SPDX-License-Identifier: Apache-2.0

//! Organized point clouds, surface normals and click-to-path conversion.

pub mod camera;
pub mod cloud;
pub mod integral;
pub mod normals;
pub mod path;
pub mod synth;

pub use camera::CameraModel;
pub use cloud::{CloudEncoding, OrganizedPointCloud};
pub use integral::IntegralImage;
pub use normals::{normals_covariance, normals_integral, CovarianceNormal, Neighborhood};
pub use path::{pixel_path_to_3d, ClickPath, ClickPathOptions};
pub use synth::{synth_cloud, Scene};
