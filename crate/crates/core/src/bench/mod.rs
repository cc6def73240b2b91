//! Synthetic benchmark harness: scenarios, observation generation, the
//! end-to-end pipeline and report files.

mod generate;
mod pipeline;
mod report;
mod scenario;

pub use generate::{generate_observation, GroundTruthFrame, SceneGenerator};
pub use pipeline::{register_first_frame, run_pipeline, FrameRecord, PipelineConfig, PipelineRun, RefinerSpec, ScorerSpec};
pub use report::{
    emit_reports, read_frames, read_poses_csv, read_transitions, write_poses_csv, RunSummary, FRAMES_CSV, SUMMARY_JSON,
    TIMING_CSV, TRANSITIONS_CSV,
};
pub use scenario::{DepthAvailability, MaskNoise, MeshSpec, Occluder, Occlusion, Scenario, Segment, Trajectory};

use nalgebra::{UnitQuaternion, Vector3};

use crate::geom::{CameraModel, Pose};

fn piecewise(start: Pose, segments: &[(usize, [f64; 3], [f64; 3])]) -> Trajectory {
    Trajectory::Piecewise {
        start,
        segments: segments
            .iter()
            .map(|&(frames, velocity, angular_velocity)| Segment { frames, velocity, angular_velocity })
            .collect(),
    }
}

fn base(name: &str, mesh: MeshSpec, camera: CameraModel, trajectory: Trajectory, seed: u64) -> Scenario {
    Scenario {
        name: name.into(),
        mesh,
        model_scale: 1.0,
        scale_known: true,
        camera,
        trajectory,
        occlusions: Vec::new(),
        mask_noise: MaskNoise::default(),
        depth: DepthAvailability::FirstFrameOnly,
        symmetries: Default::default(),
        seed,
        pipeline: PipelineConfig::default(),
        base_dir: None,
    }
}

fn tilted() -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(0.5, -0.4, 0.3)
}

/// A still object in front of the camera, 30 frames.
pub fn static_scenario(seed: u64) -> Scenario {
    let start = Pose::new(tilted(), Vector3::new(0.0, 0.0, 0.8));
    base("static", MeshSpec::NotchedBlock { size: 0.2 }, CameraModel::vga(600.0), piecewise(start, &[(29, [0.0; 3], [0.0; 3])]), seed)
}

/// 200 frames of straight-line motion at 2 cm per frame, receding from
/// 2.2 m to 3.4 m while crossing the view.
pub fn constant_velocity_scenario(seed: u64) -> Scenario {
    let start = Pose::new(tilted(), Vector3::new(-1.9, 0.0, 2.2));
    let mut s = base(
        "constant_velocity",
        MeshSpec::NotchedBlock { size: 0.4 },
        CameraModel::vga(320.0),
        piecewise(start, &[(199, [0.019, 0.0, 0.006], [0.0; 3])]),
        seed,
    );
    s.pipeline.registration.z_max = 4.0;
    s
}

/// 120 frames of a spinning object with a 30-frame full occlusion starting
/// at frame 40. The object stops moving sideways while hidden.
pub fn occlusion_scenario(seed: u64) -> Scenario {
    let start = Pose::new(tilted(), Vector3::new(-0.12, 0.0, 0.8));
    let spin = [0.02, 0.015, 0.0];
    let mut s = base(
        "occlusion",
        MeshSpec::NotchedBlock { size: 0.2 },
        CameraModel::vga(600.0),
        piecewise(start, &[(39, [0.004, 0.0, 0.0], spin), (30, [0.0; 3], spin), (50, [-0.003, 0.0, 0.0], spin)]),
        seed,
    );
    s.occlusions.push(Occlusion { start: 40, end: 70, occluder: Occluder::Full { depth: 0.3 } });
    s
}

/// The tracker's model is three times the true size and the scale is
/// unknown; only the first frame has depth.
pub fn unknown_scale_scenario(seed: u64) -> Scenario {
    let start = Pose::new(tilted(), Vector3::new(-0.05, 0.02, 0.8));
    let mut s = base(
        "unknown_scale",
        MeshSpec::NotchedBlock { size: 0.2 },
        CameraModel::vga(600.0),
        piecewise(start, &[(59, [0.002, 0.0, 0.001], [0.0, 0.01, 0.0])]),
        seed,
    );
    s.model_scale = 3.0;
    s.scale_known = false;
    s
}

/// Every built-in example, as written by `gen-scenario`.
pub fn example_scenarios(seed: u64) -> Vec<Scenario> {
    vec![static_scenario(seed), constant_velocity_scenario(seed), occlusion_scenario(seed), unknown_scale_scenario(seed)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypo::OracleMode;

    #[test]
    fn examples_are_valid() {
        for s in example_scenarios(1) {
            s.validate().unwrap();
        }
        assert_eq!(constant_velocity_scenario(0).trajectory.len(), 200);
        assert_eq!(occlusion_scenario(0).trajectory.len(), 120);
        let poses = constant_velocity_scenario(0).trajectory.poses();
        let step = (poses[1].translation - poses[0].translation).norm();
        assert!((step - 0.02).abs() < 1e-3);
    }

    #[test]
    fn static_scene_with_oracle_refiner_is_perfect() {
        let mut s = static_scenario(0);
        s.trajectory = piecewise(Pose::new(tilted(), Vector3::new(0.0, 0.0, 0.8)), &[(5, [0.0; 3], [0.0; 3])]);
        let config = PipelineConfig { refiner: RefinerSpec::Oracle { mode: OracleMode::Full }, ..Default::default() };
        let run = run_pipeline(&s, &config).unwrap();
        assert_eq!(run.report.ar, 1.0);
        assert!(run.records.iter().all(|r| r.mode == crate::recover::TrackerMode::Tracking));
    }

    #[test]
    fn reports_round_trip() {
        let mut s = static_scenario(0);
        s.trajectory = piecewise(Pose::new(tilted(), Vector3::new(0.0, 0.0, 0.8)), &[(4, [0.003, 0.0, 0.0], [0.0, 0.02, 0.0])]);
        s.occlusions.push(Occlusion { start: 2, end: 3, occluder: Occluder::Full { depth: 0.2 } });
        let run = run_pipeline(&s, &s.pipeline).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_reports(&run, dir.path()).unwrap();
        assert_eq!(read_frames(dir.path()).unwrap(), run.records);
        let summary: RunSummary =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(SUMMARY_JSON)).unwrap()).unwrap();
        let m = &summary.metrics;
        assert!((m.ar - (m.ar_vsd + m.ar_mssd + m.ar_mspd) / 3.0).abs() < 1e-12);
        let transitions = read_transitions(dir.path()).unwrap();
        assert_eq!(transitions.len(), 5);
        assert_eq!(transitions[2].1, crate::recover::TrackerMode::Lost);
        let poses = read_poses_csv(dir.path().join(FRAMES_CSV)).unwrap();
        assert_eq!(poses[3].1, run.records[3].pose);
    }

    #[test]
    fn empty_records_are_rejected() {
        let mut s = static_scenario(0);
        s.trajectory = piecewise(Pose::new(tilted(), Vector3::new(0.0, 0.0, 0.8)), &[]);
        let config = PipelineConfig { refiner: RefinerSpec::Oracle { mode: OracleMode::Full }, ..Default::default() };
        let mut run = run_pipeline(&s, &config).unwrap();
        run.records.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_reports(&run, dir.path()), Err(crate::Error::EmptyInput(_))));
    }
}
