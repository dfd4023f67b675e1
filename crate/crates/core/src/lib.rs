//! 6D object pose toolkit: surface fragments, a software depth rasterizer,
//! robust multi-instance pose fitting from 2D-3D correspondences, and
//! benchmark pose-error metrics.

pub mod error;
pub mod fitting;
pub mod fragments;
pub mod geometry;
pub mod metrics;
pub mod rasterizer;
pub mod shapes;
pub mod spatial;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, RigidPose, TriangleMesh};
