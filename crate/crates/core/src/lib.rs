//! Depth-free 6D object pose registration and tracking.
//!
//! The crate is organised bottom-up:
//!
//! - [`geom`]: rigid transforms, pinhole camera, triangle meshes, rotation sampling.
//! - [`render`]: deterministic silhouette/z-buffer rasterizer and image types.
//! - [`hypo`]: pose hypotheses and the refiner/scorer interfaces with classical
//!   silhouette-based implementations.
//! - [`register`]: first-frame registration by binary search over depth, the
//!   exhaustive depth sweep, depth-anchored registration and scale recovery.
//! - [`track`]: frame-to-frame tracking with a zero, stale or measured depth channel.
//! - [`recover`]: loss detection, Kalman prediction and the recovery state machine.
//! - [`metrics`]: VSD/MSSD/MSPD pose errors and average recall.
//! - [`bench`]: synthetic scenarios, the end-to-end pipeline and report files.

pub mod bench;
pub mod error;
pub mod geom;
pub mod hypo;
pub mod metrics;
pub mod recover;
pub mod register;
pub mod render;
pub mod track;

pub use error::{Error, Result};
pub use geom::{CameraModel, Pose, RotationGrid, TriangleMesh};
pub use render::{DepthImage, MaskImage};
