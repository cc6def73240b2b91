//! End-to-end run over a scenario: optional scale recovery, first-frame
//! registration, per-frame tracking with loss recovery, and evaluation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::generate::{GroundTruthFrame, SceneGenerator};
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::geom::{sample_rotation_grid, Pose, TriangleMesh};
use crate::hypo::{GroundTruth, Observation, OracleMode, OracleRefiner, OracleScorer, Refiner, Scorer, SilhouetteRefiner, SilhouetteScorer};
use crate::metrics::{average_recalls, frame_errors, FrameErrors, MetricReport};
use crate::recover::{step, LossReason, RecoveryConfig, StepLog, TrackerMode, TrackerState};
use crate::register::{recover_scale, register_depth_free, register_with_depth, DepthSearchConfig, ScaleSearchConfig};
use crate::track::{track_frame, TrackConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RefinerSpec {
    Silhouette {
        #[serde(default = "default_rounds")]
        rounds: usize,
        #[serde(default = "default_step_deg")]
        step_deg: f64,
        #[serde(default = "default_depth_step")]
        max_depth_step: f64,
    },
    /// Ground-truth refiner for harness checks.
    Oracle { mode: OracleMode },
}

fn default_rounds() -> usize {
    SilhouetteRefiner::default().rounds
}

fn default_step_deg() -> f64 {
    SilhouetteRefiner::default().step.to_degrees()
}

fn default_depth_step() -> f64 {
    SilhouetteRefiner::default().max_depth_step
}

impl Default for RefinerSpec {
    fn default() -> Self {
        Self::Silhouette { rounds: default_rounds(), step_deg: default_step_deg(), max_depth_step: default_depth_step() }
    }
}

impl RefinerSpec {
    pub fn build(&self, truth: &GroundTruth) -> Box<dyn Refiner> {
        match *self {
            Self::Silhouette { rounds, step_deg, max_depth_step } => {
                Box::new(SilhouetteRefiner { rounds, step: step_deg.to_radians(), max_depth_step })
            }
            Self::Oracle { mode } => Box::new(OracleRefiner::new(truth.clone(), mode)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSpec {
    Silhouette {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_depth_weight")]
        depth_weight: f64,
    },
    /// Ground-truth scorer for harness checks.
    Oracle,
}

fn default_lambda() -> f64 {
    SilhouetteScorer::default().lambda
}

fn default_depth_weight() -> f64 {
    SilhouetteScorer::default().depth_weight
}

impl Default for ScorerSpec {
    fn default() -> Self {
        Self::Silhouette { lambda: default_lambda(), depth_weight: default_depth_weight() }
    }
}

impl ScorerSpec {
    pub fn build(&self, truth: &GroundTruth) -> Box<dyn Scorer> {
        match *self {
            Self::Silhouette { lambda, depth_weight } => Box::new(SilhouetteScorer { lambda, depth_weight }),
            Self::Oracle => Box::new(OracleScorer::new(truth.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub registration: DepthSearchConfig,
    pub scale: ScaleSearchConfig,
    pub track: TrackConfig,
    pub recovery: RecoveryConfig,
    pub recovery_enabled: bool,
    /// Run scale recovery when the scenario's model scale is unknown.
    pub scale_recovery: bool,
    pub refiner: RefinerSpec,
    pub scorer: ScorerSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            registration: DepthSearchConfig::default(),
            scale: ScaleSearchConfig::default(),
            track: TrackConfig::default(),
            recovery: RecoveryConfig::default(),
            recovery_enabled: true,
            scale_recovery: true,
            refiner: RefinerSpec::default(),
            scorer: ScorerSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub pose: Option<Pose>,
    pub mode: TrackerMode,
    pub errors: Option<FrameErrors>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub records: Vec<FrameRecord>,
    pub transitions: Vec<StepLog>,
    pub report: MetricReport,
    /// Multiplier applied to the model by scale recovery.
    pub scale_factor: Option<f64>,
    /// Model size relative to the true object after scale recovery.
    pub effective_model_scale: f64,
}

/// Registers frame 0, using the depth channel when it carries valid depth.
pub fn register_first_frame(
    model: &TriangleMesh,
    observation: &Observation,
    config: &PipelineConfig,
    refiner: &dyn Refiner,
    scorer: &dyn Scorer,
) -> Result<Pose> {
    if observation.has_masked_depth() {
        let grid = sample_rotation_grid(config.registration.grid_level);
        register_with_depth(model, observation, &grid, refiner, scorer)
    } else {
        Ok(register_depth_free(model, observation, &config.registration, refiner, scorer)?.pose)
    }
}

pub fn run_pipeline(scenario: &Scenario, config: &PipelineConfig) -> Result<PipelineRun> {
    let generator = SceneGenerator::new(scenario)?;
    let true_mesh = generator.mesh().clone();
    let mut model = scenario.model_mesh()?;
    let camera = scenario.camera;
    let truth = GroundTruth::new(generator.poses()[0]);
    let refiner = config.refiner.build(&truth);
    let scorer = config.scorer.build(&truth);
    let mut recovery = config.recovery;
    recovery.seed = scenario.seed;

    let mut records = Vec::with_capacity(generator.len());
    let mut transitions = Vec::with_capacity(generator.len());

    let evaluate = |pose: &Pose, gt: &GroundTruthFrame| {
        frame_errors(pose, &gt.pose, &true_mesh, &scenario.symmetries, &camera, &gt.scene_depth).ok()
    };

    let (obs0, gt0) = generator.observation(0)?;
    let start = Instant::now();
    let mut scale_factor = None;
    if !scenario.scale_known && config.scale_recovery {
        let out = recover_scale(&model, &obs0, &config.scale, refiner.as_ref(), scorer.as_ref()).map_err(|e| e.at_frame(0))?;
        model = model.rescaled(out.scale);
        scale_factor = Some(out.scale);
    }
    let initial = register_first_frame(&model, &obs0, config, refiner.as_ref(), scorer.as_ref()).map_err(|e| e.at_frame(0))?;
    let errors = evaluate(&initial, &gt0);
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    records.push(FrameRecord { frame: 0, pose: Some(initial), mode: TrackerMode::Tracking, errors, wall_ms });
    transitions.push(StepLog { frame: 0, mode: TrackerMode::Tracking, reason: None, hypotheses: 0, score: None });

    let mut state = TrackerState::new(initial, recovery.kalman);
    for frame in 1..generator.len() {
        let (obs, gt) = generator.observation(frame)?;
        truth.set(gt.pose);
        let start = Instant::now();
        let (pose, log) = if config.recovery_enabled {
            let (pose, next, log) = step(&state, &obs, &model, &config.track, &recovery, refiner.as_ref(), scorer.as_ref());
            state = next;
            (pose, log)
        } else {
            track_without_recovery(&mut state, &obs, &model, &config.track, refiner.as_ref())
        };
        let errors = evaluate(&pose, &gt);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        records.push(FrameRecord { frame, pose: Some(pose), mode: log.mode, errors, wall_ms });
        transitions.push(log);
    }

    let errors: Vec<Option<FrameErrors>> = records.iter().map(|r| r.errors.clone()).collect();
    let report = average_recalls(&errors, true_mesh.diameter(), &camera)?;
    Ok(PipelineRun {
        records,
        transitions,
        report,
        scale_factor,
        effective_model_scale: scenario.model_scale * scale_factor.unwrap_or(1.0),
    })
}

/// Plain frame-to-frame tracking: on failure the previous pose is kept.
fn track_without_recovery(
    state: &mut TrackerState,
    obs: &Observation,
    model: &TriangleMesh,
    track: &TrackConfig,
    refiner: &dyn Refiner,
) -> (Pose, StepLog) {
    let frame = state.frame;
    state.frame += 1;
    let mut log = StepLog { frame, mode: TrackerMode::Tracking, reason: None, hypotheses: 0, score: None };
    match track_frame(&state.last_pose, obs, model, track, refiner) {
        Ok(pose) => {
            state.last_pose = pose;
            state.mode = TrackerMode::Tracking;
            state.frames_lost = 0;
            (pose, log)
        }
        Err(e) => {
            log.mode = TrackerMode::Lost;
            log.reason = Some(if matches!(e, Error::EmptyMask) { LossReason::MaskTooSmall } else { LossReason::TrackFailed });
            state.mode = TrackerMode::Lost;
            state.frames_lost += 1;
            (state.last_pose, log)
        }
    }
}
