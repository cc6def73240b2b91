//! Scenario description: object, camera, trajectory, occlusions, mask noise
//! and depth availability. Scenarios are JSON files.

use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::pipeline::PipelineConfig;
use crate::error::{Error, Result};
use crate::geom::{CameraModel, Pose, TriangleMesh};
use crate::metrics::SymmetrySet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSpec {
    Sphere {
        radius: f64,
        #[serde(default = "default_rings")]
        rings: u32,
        #[serde(default = "default_segments")]
        segments: u32,
    },
    Cuboid {
        size: [f64; 3],
    },
    /// Asymmetric L-shaped block; `size` is its longest edge.
    NotchedBlock {
        size: f64,
    },
    /// Relative paths resolve against the scenario file's directory.
    Obj {
        path: PathBuf,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn default_rings() -> u32 {
    16
}

fn default_segments() -> u32 {
    32
}

fn one() -> f64 {
    1.0
}

impl MeshSpec {
    pub fn build(&self, base_dir: Option<&Path>) -> Result<TriangleMesh> {
        match self {
            Self::Sphere { radius, rings, segments } => TriangleMesh::uv_sphere(*radius, *rings, *segments),
            Self::Cuboid { size } => TriangleMesh::cuboid(Vector3::from(*size)),
            Self::NotchedBlock { size } => TriangleMesh::notched_block(*size),
            Self::Obj { path, scale } => {
                let path = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                Ok(TriangleMesh::load_obj(&path)?.with_scale(*scale))
            }
        }
    }
}

/// Constant motion over a run of frames. Velocities are per frame; the
/// angular velocity is a camera-frame rotation vector in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub frames: usize,
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default)]
    pub angular_velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Explicit { poses: Vec<Pose> },
    /// Frame 0 is `start`; each segment appends `frames` poses.
    Piecewise { start: Pose, segments: Vec<Segment> },
}

impl Trajectory {
    pub fn poses(&self) -> Vec<Pose> {
        match self {
            Self::Explicit { poses } => poses.clone(),
            Self::Piecewise { start, segments } => {
                let mut out = vec![*start];
                let mut pose = *start;
                for seg in segments {
                    let v = Vector3::from(seg.velocity);
                    let w = UnitQuaternion::from_scaled_axis(Vector3::from(seg.angular_velocity));
                    for _ in 0..seg.frames {
                        pose = Pose::new(w * pose.rotation, pose.translation + v);
                        out.push(pose);
                    }
                }
                out
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Explicit { poses } => poses.len(),
            Self::Piecewise { segments, .. } => 1 + segments.iter().map(|s| s.frames).sum::<usize>(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Occluder {
    /// Covers the whole image at a fixed depth.
    Full { depth: f64 },
    /// Pixels `x0 <= x < x1`, `y0 <= y < y1` at a fixed depth.
    Rect { x0: u32, y0: u32, x1: u32, y1: u32, depth: f64 },
    Mesh { mesh: MeshSpec, pose: Pose },
}

/// Occluder present on frames `start..end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub start: usize,
    pub end: usize,
    pub occluder: Occluder,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskNoise {
    /// Per-pixel probability of dropping an object pixel.
    pub dropout: f64,
    /// Erosion radius in pixels (square neighbourhood).
    pub erosion: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthAvailability {
    #[default]
    None,
    FirstFrameOnly,
    All,
}

impl DepthAvailability {
    pub fn has_depth(self, frame: usize) -> bool {
        match self {
            Self::None => false,
            Self::FirstFrameOnly => frame == 0,
            Self::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// Object geometry at its true size.
    pub mesh: MeshSpec,
    /// Scale of the model handed to the tracker relative to the true object.
    #[serde(default = "one")]
    pub model_scale: f64,
    /// Whether the tracker may trust the model's size.
    #[serde(default = "yes")]
    pub scale_known: bool,
    pub camera: CameraModel,
    pub trajectory: Trajectory,
    #[serde(default)]
    pub occlusions: Vec<Occlusion>,
    #[serde(default)]
    pub mask_noise: MaskNoise,
    #[serde(default)]
    pub depth: DepthAvailability,
    #[serde(default)]
    pub symmetries: SymmetrySet,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    /// Directory relative mesh paths resolve against; set when loading.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        let n = self.trajectory.len();
        if n == 0 {
            return Err(Error::InvalidConfig("trajectory is empty".into()));
        }
        for o in &self.occlusions {
            if o.start > o.end || o.end > n {
                return Err(Error::InvalidConfig(format!(
                    "occlusion {}..{} outside trajectory of {n} frames",
                    o.start, o.end
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.mask_noise.dropout) {
            return Err(Error::InvalidConfig("mask dropout must be in [0, 1]".into()));
        }
        if !(self.model_scale > 0.0 && self.model_scale.is_finite()) {
            return Err(Error::InvalidConfig("model_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s: Scenario = serde_json::from_str(&text)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("scenario serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// The object at its true size.
    pub fn true_mesh(&self) -> Result<TriangleMesh> {
        self.mesh.build(self.base_dir.as_deref())
    }

    /// The model given to the tracker.
    pub fn model_mesh(&self) -> Result<TriangleMesh> {
        Ok(self.true_mesh()?.rescaled(self.model_scale))
    }
}
