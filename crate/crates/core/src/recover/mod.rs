//! Tracking-loss state machine.
//!
//! Each frame the Kalman filter predicts a pose and the loss detectors check
//! it against the observation. While tracking, the refiner follows the object
//! and its output corrects the filter. When the mask is unusable the
//! prediction is reported as is. When the mask is usable but the prediction
//! disagrees with it, a small set of rotations sampled around the predicted
//! rotation is refined at the mask centre, and the winner is accepted if it
//! passes the same loss checks.

mod kalman;
mod loss;

pub use kalman::{kalman_predict, kalman_update, KalmanConfig, KalmanState};
pub use loss::{detect_loss, detect_loss_depth, detect_loss_rgb, LossReason, LossThresholds, LossVerdict};

use serde::{Deserialize, Serialize};

use crate::geom::{sample_rotations_near, Pose, TriangleMesh};
use crate::hypo::{score_and_select, Hypothesis, Observation, Refiner, Scorer};
use crate::track::{track_frame, TrackConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerMode {
    Tracking,
    Lost,
    Recovering,
}

impl TrackerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tracking => "tracking",
            Self::Lost => "lost",
            Self::Recovering => "recovering",
        }
    }
}

impl std::str::FromStr for TrackerMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "tracking" => Ok(Self::Tracking),
            "lost" => Ok(Self::Lost),
            "recovering" => Ok(Self::Recovering),
            other => Err(crate::Error::InvalidConfig(format!("unknown tracker mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    pub thresholds: LossThresholds,
    /// Rotations sampled per recovery attempt.
    pub hypotheses: usize,
    /// Sampling radius around the predicted rotation, radians.
    pub max_angle: f64,
    pub kalman: KalmanConfig,
    pub seed: u64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            thresholds: LossThresholds::default(),
            hypotheses: 20,
            max_angle: 30f64.to_radians(),
            kalman: KalmanConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub mode: TrackerMode,
    pub kalman: KalmanState,
    pub last_confident_pose: Pose,
    /// Pose reported for the previous frame (possibly a prediction).
    pub last_pose: Pose,
    pub frames_lost: usize,
    /// Total recovery attempts so far.
    pub recovery_attempts: usize,
    /// Index of the next frame.
    pub frame: usize,
}

impl TrackerState {
    /// State after a successful registration on frame 0; the next step
    /// processes frame 1.
    pub fn new(initial: Pose, kalman: KalmanConfig) -> Self {
        Self {
            mode: TrackerMode::Tracking,
            kalman: KalmanState::new(&initial, kalman),
            last_confident_pose: initial,
            last_pose: initial,
            frames_lost: 0,
            recovery_attempts: 0,
            frame: 1,
        }
    }
}

/// One line of the state-transition log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub frame: usize,
    pub mode: TrackerMode,
    pub reason: Option<LossReason>,
    /// Recovery hypotheses evaluated this frame.
    pub hypotheses: usize,
    /// Score of the selected recovery hypothesis.
    pub score: Option<f64>,
}

/// Advances the state machine by one frame. Always returns a pose.
pub fn step(
    state: &TrackerState,
    observation: &Observation,
    mesh: &TriangleMesh,
    track: &TrackConfig,
    config: &RecoveryConfig,
    refiner: &dyn Refiner,
    scorer: &dyn Scorer,
) -> (Pose, TrackerState, StepLog) {
    let (predicted, predicted_state) = kalman_predict(&state.kalman);
    let mut next = state.clone();
    next.frame = state.frame + 1;
    let mut log = StepLog { frame: state.frame, mode: TrackerMode::Tracking, reason: None, hypotheses: 0, score: None };

    let mut reason = detect_loss(observation, &predicted, mesh, &config.thresholds);
    if reason.is_none() {
        match track_frame(&state.last_pose, observation, mesh, track, refiner) {
            Ok(pose) => {
                next.kalman = kalman_update(&predicted_state, &pose);
                return (pose, accept(next, pose), log);
            }
            Err(_) => reason = Some(LossReason::TrackFailed),
        }
    }
    log.reason = reason;

    let lost = |mut next: TrackerState, mode: TrackerMode| {
        next.mode = mode;
        next.kalman = predicted_state.clone();
        next.last_pose = predicted;
        next.frames_lost += 1;
        next
    };

    if reason.is_some_and(LossReason::mask_unusable) {
        log.mode = TrackerMode::Lost;
        return (predicted, lost(next, TrackerMode::Lost), log);
    }

    next.recovery_attempts += 1;
    log.hypotheses = config.hypotheses;
    if let Some(best) = recovery_candidate(observation, mesh, &predicted, state.frame, config, refiner, scorer) {
        log.score = Some(best.score);
        if detect_loss(observation, &best.pose, mesh, &config.thresholds).is_none() {
            next.kalman = kalman_update(&predicted_state, &best.pose);
            return (best.pose, accept(next, best.pose), log);
        }
    }
    log.mode = TrackerMode::Recovering;
    (predicted, lost(next, TrackerMode::Recovering), log)
}

fn accept(mut next: TrackerState, pose: Pose) -> TrackerState {
    next.mode = TrackerMode::Tracking;
    next.last_pose = pose;
    next.last_confident_pose = pose;
    next.frames_lost = 0;
    next
}

/// Rotations sampled around the prediction, placed at the mask centre.
fn recovery_candidate(
    observation: &Observation,
    mesh: &TriangleMesh,
    predicted: &Pose,
    frame: usize,
    config: &RecoveryConfig,
    refiner: &dyn Refiner,
    scorer: &dyn Scorer,
) -> Option<Hypothesis> {
    if config.hypotheses == 0 {
        return None;
    }
    let z = observation.masked_depth_median().unwrap_or(predicted.translation.z);
    let centroid = observation.mask.centroid().ok()?;
    let translation = observation.camera.backproject(&centroid, z).ok()?;
    let seed = config.seed.wrapping_add(frame as u64);
    let hyps: Vec<Hypothesis> =
        sample_rotations_near(&predicted.rotation, config.hypotheses, config.max_angle, seed)
            .rotations()
            .iter()
            .map(|r| Hypothesis::unscored(Pose::new(*r, translation)))
            .collect();
    let mut refined = refiner.refine(&hyps, observation, mesh);
    score_and_select(scorer, &mut refined, observation, mesh)
}
