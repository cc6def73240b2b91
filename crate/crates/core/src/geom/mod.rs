//! Rigid-body math, pinhole camera, meshes and rotation sampling.

mod camera;
mod mesh;
mod pose;
mod rotation;

pub use camera::CameraModel;
pub use mesh::{TriangleMesh, Winding};
pub use pose::{compose, Pose};
pub use rotation::{
    random_rotation, rotation_geodesic, rotation_geodesic_deg, sample_rotation_grid,
    sample_rotations_near, RotationGrid, REGISTRATION_GRID_LEVEL,
};
