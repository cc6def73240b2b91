use std::sync::{Arc, RwLock};

use super::{Hypothesis, Observation, Refiner, Scorer};
use crate::geom::{rotation_geodesic, Pose, TriangleMesh};
use crate::render::render;

/// Shared handle to the current frame's ground-truth pose. The test harness
/// updates it before each frame; oracle implementations read it.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth(Arc<RwLock<Pose>>);

impl GroundTruth {
    pub fn new(pose: Pose) -> Self {
        Self(Arc::new(RwLock::new(pose)))
    }

    pub fn set(&self, pose: Pose) {
        *self.0.write().expect("ground truth lock poisoned") = pose;
    }

    pub fn get(&self) -> Pose {
        *self.0.read().expect("ground truth lock poisoned")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Replace every hypothesis with the ground truth.
    Full,
    /// Snap rotation and viewing ray to the truth but keep the hypothesis
    /// depth, i.e. a perfect image-space refiner that cannot see depth. When
    /// the observation has a depth channel the depth is then corrected from
    /// it the same way [`super::SilhouetteRefiner`] does.
    KeepDepth,
}

#[derive(Debug, Clone)]
pub struct OracleRefiner {
    pub truth: GroundTruth,
    pub mode: OracleMode,
}

impl OracleRefiner {
    pub fn new(truth: GroundTruth, mode: OracleMode) -> Self {
        Self { truth, mode }
    }

    fn refine_pose(&self, pose: &Pose, observation: &Observation, mesh: &TriangleMesh) -> Pose {
        let truth = self.truth.get();
        match self.mode {
            OracleMode::Full => truth,
            OracleMode::KeepDepth => {
                let z = pose.translation.z;
                if z <= 0.0 {
                    return *pose;
                }
                let mut out = Pose::new(truth.rotation, truth.translation * (z / truth.translation.z));
                if let Some(obs_depth) = &observation.depth {
                    if let Ok((mask, depth)) = render(mesh, &out, &observation.camera) {
                        let mut diffs: Vec<f64> = observation
                            .mask
                            .set_pixels()
                            .filter(|&(x, y)| mask.get(x, y))
                            .filter_map(|(x, y)| {
                                let (o, r) = (obs_depth.get(x, y), depth.get(x, y));
                                (o > 0.0 && r > 0.0).then_some(o - r)
                            })
                            .collect();
                        if !diffs.is_empty() {
                            diffs.sort_unstable_by(f64::total_cmp);
                            let offset = diffs[diffs.len() / 2];
                            let new_z = out.translation.z + offset;
                            if new_z > 0.0 {
                                out.translation *= new_z / out.translation.z;
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

impl Refiner for OracleRefiner {
    fn refine(&self, hypotheses: &[Hypothesis], observation: &Observation, mesh: &TriangleMesh) -> Vec<Hypothesis> {
        hypotheses
            .iter()
            .map(|h| Hypothesis { pose: self.refine_pose(&h.pose, observation, mesh), score: h.score })
            .collect()
    }

    fn step_tolerance(&self) -> f64 {
        0.0
    }
}

/// Ranks hypotheses by closeness to the ground truth:
/// `-(translation error + diameter * rotation error in radians)`.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    pub truth: GroundTruth,
}

impl OracleScorer {
    pub fn new(truth: GroundTruth) -> Self {
        Self { truth }
    }
}

impl Scorer for OracleScorer {
    fn score(&self, hypotheses: &[Hypothesis], _observation: &Observation, mesh: &TriangleMesh) -> Vec<f64> {
        let truth = self.truth.get();
        hypotheses
            .iter()
            .map(|h| {
                let dt = (h.pose.translation - truth.translation).norm();
                let dr = rotation_geodesic(&h.pose.rotation, &truth.rotation);
                -(dt + mesh.diameter() * dr)
            })
            .collect()
    }
}
