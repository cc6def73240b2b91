//! Pose hypotheses and the refiner/scorer interfaces.
//!
//! Registration and tracking only see [`Refiner`] and [`Scorer`]; the
//! classical silhouette implementations here and the ground-truth oracles
//! used in tests are interchangeable behind them.

mod oracle;
mod silhouette;

pub use oracle::{GroundTruth, OracleMode, OracleRefiner, OracleScorer};
pub use silhouette::{SilhouetteRefiner, SilhouetteScorer};

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::Result;
use crate::geom::{CameraModel, Pose, RotationGrid, TriangleMesh};
use crate::render::{median_masked_depth, DepthImage, MaskImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub pose: Pose,
    /// Higher is better; NaN until scored.
    pub score: f64,
}

impl Hypothesis {
    pub fn unscored(pose: Pose) -> Self {
        Self { pose, score: f64::NAN }
    }
}

/// Interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

/// What a refiner or scorer sees of one frame.
#[derive(Debug, Clone)]
pub struct Observation {
    /// Carried for image-based plug-ins; the reference implementations only
    /// use the mask and depth.
    pub rgb: Option<RgbImage>,
    pub mask: MaskImage,
    pub depth: Option<DepthImage>,
    pub camera: CameraModel,
}

impl Observation {
    pub fn new(mask: MaskImage, depth: Option<DepthImage>, camera: CameraModel) -> Self {
        debug_assert_eq!((mask.width(), mask.height()), (camera.width, camera.height));
        Self { rgb: None, mask, depth, camera }
    }

    /// Same frame with the depth channel replaced.
    pub fn with_depth(&self, depth: Option<DepthImage>) -> Self {
        Self { depth, ..self.clone() }
    }

    /// Median positive depth under the mask, if the depth channel has any.
    pub fn masked_depth_median(&self) -> Option<f64> {
        self.depth.as_ref().and_then(|d| median_masked_depth(d, &self.mask).ok())
    }

    /// Whether any masked pixel has depth; same condition as
    /// [`Self::masked_depth_median`] returning `Some`, without the sort.
    pub fn has_masked_depth(&self) -> bool {
        self.depth.as_ref().is_some_and(|d| self.mask.set_pixels().any(|(x, y)| d.get(x, y) > 0.0))
    }
}

pub trait Refiner: Send + Sync {
    /// Refines every hypothesis; output has the same length and order.
    fn refine(&self, hypotheses: &[Hypothesis], observation: &Observation, mesh: &TriangleMesh) -> Vec<Hypothesis>;

    /// Largest translation (m) the refiner may apply to an already correct pose.
    fn step_tolerance(&self) -> f64 {
        1e-6
    }
}

pub trait Scorer: Send + Sync {
    /// One deterministic score per hypothesis, higher is better. A score may
    /// depend only on that hypothesis's pose.
    fn score(&self, hypotheses: &[Hypothesis], observation: &Observation, mesh: &TriangleMesh) -> Vec<f64>;

    /// Index of the first maximal scored hypothesis. NaN scores never win.
    fn best(&self, hypotheses: &[Hypothesis]) -> Option<usize> {
        best_index(hypotheses)
    }
}

pub fn best_index(hypotheses: &[Hypothesis]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, h) in hypotheses.iter().enumerate() {
        if h.score.is_nan() {
            continue;
        }
        match best {
            Some(b) if hypotheses[b].score >= h.score => {}
            _ => best = Some(i),
        }
    }
    best
}

fn pose_bits(p: &Pose) -> [u64; 7] {
    let q = p.rotation.quaternion();
    let t = p.translation;
    [q.w, q.i, q.j, q.k, t.x, t.y, t.z].map(f64::to_bits)
}

/// Scores `hypotheses` in place and returns the winner. Bitwise-identical
/// poses (common once refiners converge) are scored once.
pub fn score_and_select(
    scorer: &dyn Scorer,
    hypotheses: &mut [Hypothesis],
    observation: &Observation,
    mesh: &TriangleMesh,
) -> Option<Hypothesis> {
    let mut slot_of: HashMap<[u64; 7], usize> = HashMap::new();
    let mut unique = Vec::new();
    let slots: Vec<usize> = hypotheses
        .iter()
        .map(|h| {
            *slot_of.entry(pose_bits(&h.pose)).or_insert_with(|| {
                unique.push(*h);
                unique.len() - 1
            })
        })
        .collect();
    let scores = scorer.score(&unique, observation, mesh);
    for (h, slot) in hypotheses.iter_mut().zip(slots) {
        h.score = scores[slot];
    }
    scorer.best(hypotheses).map(|i| hypotheses[i])
}

/// Coarse object translation from the mask centre and the median masked depth.
pub fn init_translation_from_depth(observation: &Observation) -> Result<Vector3<f64>> {
    let centroid = observation.mask.centroid()?;
    let depth = match &observation.depth {
        Some(d) => median_masked_depth(d, &observation.mask)?,
        None => return Err(crate::Error::NoValidDepth),
    };
    observation.camera.backproject(&centroid, depth)
}

/// Translation on the ray through the mask centre at depth `z`.
pub fn translation_at_depth(mask: &MaskImage, camera: &CameraModel, z: f64) -> Result<Vector3<f64>> {
    camera.backproject(&mask.centroid()?, z)
}

pub fn make_hypotheses(rotations: &RotationGrid, translation: Vector3<f64>) -> Vec<Hypothesis> {
    rotations
        .rotations()
        .iter()
        .map(|r| Hypothesis::unscored(Pose::new(*r, translation)))
        .collect()
}
