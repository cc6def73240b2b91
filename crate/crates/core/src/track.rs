//! Frame-to-frame tracking: one hypothesis at the previous pose, refined
//! against the current observation with a mode-dependent depth channel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Pose, TriangleMesh};
use crate::hypo::{Hypothesis, Observation, Refiner};
use crate::render::{render, render_mask, DepthImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackMode {
    /// All-zero depth channel.
    #[default]
    ZeroDepth,
    /// Depth rendered from the previous estimate.
    LastRenderedDepth,
    /// Observed depth, as provided.
    TrueDepth,
}

impl TrackMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ZeroDepth => "zero-depth",
            Self::LastRenderedDepth => "last-depth",
            Self::TrueDepth => "true-depth",
        }
    }
}

impl std::str::FromStr for TrackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-depth" | "zero_depth" => Ok(Self::ZeroDepth),
            "last-depth" | "last_rendered_depth" => Ok(Self::LastRenderedDepth),
            "true-depth" | "true_depth" => Ok(Self::TrueDepth),
            other => Err(Error::InvalidConfig(format!("unknown track mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackConfig {
    pub mode: TrackMode,
    /// Refiner passes per frame.
    pub iterations: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self { mode: TrackMode::ZeroDepth, iterations: 2 }
    }
}

/// Builds the observation the refiner sees in the given mode.
pub fn tracking_observation(
    previous: &Pose,
    observation: &Observation,
    mesh: &TriangleMesh,
    mode: TrackMode,
) -> Result<Observation> {
    let cam = &observation.camera;
    let depth = match mode {
        TrackMode::ZeroDepth => Some(DepthImage::zeros(cam.width, cam.height)),
        TrackMode::LastRenderedDepth => Some(render(mesh, previous, cam)?.1),
        TrackMode::TrueDepth => observation.depth.clone(),
    };
    Ok(observation.with_depth(depth))
}

/// Refines `previous` against the current frame.
///
/// Fails with `EmptyRender` when `previous` is not visible and `EmptyMask`
/// when the observation has no object pixels; the caller treats both as
/// candidate tracking loss.
pub fn track_frame(
    previous: &Pose,
    observation: &Observation,
    mesh: &TriangleMesh,
    config: &TrackConfig,
    refiner: &dyn Refiner,
) -> Result<Pose> {
    if config.iterations == 0 {
        return Err(Error::InvalidConfig("tracking needs at least one refiner iteration".into()));
    }
    if observation.mask.area() == 0 {
        return Err(Error::EmptyMask);
    }
    render_mask(mesh, previous, &observation.camera)?;
    let obs = tracking_observation(previous, observation, mesh, config.mode)?;
    let mut pose = *previous;
    for _ in 0..config.iterations {
        pose = refiner.refine(&[Hypothesis::unscored(pose)], &obs, mesh)[0].pose;
    }
    Ok(pose)
}
