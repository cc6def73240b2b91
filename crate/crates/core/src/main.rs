use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use posetrack::bench::{
    example_scenarios, emit_reports, read_poses_csv, run_pipeline, GroundTruthFrame, RunSummary, Scenario,
    SceneGenerator,
};
use posetrack::hypo::GroundTruth;
use posetrack::metrics::{average_recalls, frame_errors, FrameErrors};
use posetrack::register::{recover_scale, register_depth_free, SearchStep};
use posetrack::render::render;
use posetrack::track::TrackMode;
use posetrack::{Error, Pose, Result};

#[derive(Parser)]
#[command(name = "posetrack", version, about = "Depth-free object pose registration and tracking on synthetic scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ZeroDepth,
    LastDepth,
    TrueDepth,
}

impl From<ModeArg> for TrackMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ZeroDepth => TrackMode::ZeroDepth,
            ModeArg::LastDepth => TrackMode::LastRenderedDepth,
            ModeArg::TrueDepth => TrackMode::TrueDepth,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Depth-free registration of frame 0 with its iteration trace.
    Register {
        #[command(flatten)]
        common: Common,
    },
    /// Full pipeline: registration, tracking, recovery and evaluation.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        recovery: Option<Switch>,
    },
    /// Model scale recovery on frame 0 (needs depth on that frame).
    RecoverScale {
        #[command(flatten)]
        common: Common,
    },
    /// Metrics for a pose CSV against the scenario (or a truth CSV).
    Eval {
        #[command(flatten)]
        common: Common,
        /// CSV with frame, qw, qx, qy, qz, tx, ty, tz columns.
        #[arg(long)]
        estimates: PathBuf,
        /// Ground-truth poses; defaults to the scenario trajectory.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Writes the built-in example scenarios.
    GenScenario {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "scenarios")]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<Scenario> {
    let mut s = Scenario::load(&common.scenario)?;
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes") + "\n";
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let io = |e: csv::Error| Error::Parse { path: path.to_path_buf(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn write_trace(path: &Path, trace: &[SearchStep]) -> Result<()> {
    write_rows(
        path,
        &["iteration", "low", "high", "midpoint", "selected_depth", "selected_score", "rendered_area", "observed_area"],
        trace.iter().map(|s| {
            vec![
                s.iteration.to_string(),
                s.low.to_string(),
                s.high.to_string(),
                s.midpoint.to_string(),
                s.selected_depth.to_string(),
                s.selected_score.to_string(),
                s.rendered_area.to_string(),
                s.observed_area.to_string(),
            ]
        }),
    )
}

fn register(common: &Common) -> Result<serde_json::Value> {
    let s = load(common)?;
    let generator = SceneGenerator::new(&s)?;
    let (obs, gt) = generator.observation(0)?;
    let truth = GroundTruth::new(gt.pose);
    let refiner = s.pipeline.refiner.build(&truth);
    let scorer = s.pipeline.scorer.build(&truth);
    let out = register_depth_free(&s.model_mesh()?, &obs, &s.pipeline.registration, refiner.as_ref(), scorer.as_ref())?;
    create_dir(&common.out)?;
    write_trace(&common.out.join("register_trace.csv"), &out.trace)?;
    let result = json!({
        "pose": out.pose,
        "iterations": out.iterations,
        "stop": out.stop,
        "true_depth": gt.pose.depth(),
        "depth_error": (out.pose.depth() - gt.pose.depth()).abs(),
    });
    write_json(&common.out.join("register.json"), &result)?;
    Ok(result)
}

fn track(common: &Common, mode: Option<ModeArg>, recovery: Option<Switch>) -> Result<serde_json::Value> {
    let s = load(common)?;
    let mut config = s.pipeline.clone();
    if let Some(m) = mode {
        config.track.mode = m.into();
    }
    if let Some(r) = recovery {
        config.recovery_enabled = matches!(r, Switch::On);
    }
    let run = run_pipeline(&s, &config)?;
    emit_reports(&run, &common.out)?;
    Ok(serde_json::to_value(RunSummary::new(&run)).expect("summary serializes"))
}

fn scale(common: &Common) -> Result<serde_json::Value> {
    let s = load(common)?;
    let generator = SceneGenerator::new(&s)?;
    let (obs, gt) = generator.observation(0)?;
    let truth = GroundTruth::new(gt.pose);
    let refiner = s.pipeline.refiner.build(&truth);
    let scorer = s.pipeline.scorer.build(&truth);
    let out = recover_scale(&s.model_mesh()?, &obs, &s.pipeline.scale, refiner.as_ref(), scorer.as_ref())?;
    create_dir(&common.out)?;
    write_trace(&common.out.join("scale_trace.csv"), &out.trace)?;
    let result = json!({
        "scale_factor": out.scale,
        "effective_model_scale": s.model_scale * out.scale,
        "iterations": out.iterations,
        "stop": out.stop,
        "pose": out.pose,
    });
    write_json(&common.out.join("scale.json"), &result)?;
    Ok(result)
}

fn eval(common: &Common, estimates: &Path, truth: Option<&Path>) -> Result<serde_json::Value> {
    let s = load(common)?;
    let generator = SceneGenerator::new(&s)?;
    let mesh = generator.mesh();
    let est = read_poses_csv(estimates)?;
    if est.is_empty() {
        return Err(Error::EmptyInput(format!("no rows in {}", estimates.display())));
    }
    let truth_poses: Option<Vec<(usize, Option<Pose>)>> = truth.map(read_poses_csv).transpose()?;
    let mut frames: Vec<Option<FrameErrors>> = Vec::with_capacity(est.len());
    let mut rows = Vec::with_capacity(est.len());
    for (frame, pose) in &est {
        let gt: GroundTruthFrame = match &truth_poses {
            None => generator.observation(*frame)?.1,
            Some(list) => {
                let pose = list
                    .iter()
                    .find(|(f, _)| f == frame)
                    .and_then(|(_, p)| *p)
                    .ok_or_else(|| Error::EmptyInput(format!("no truth pose for frame {frame}")))?;
                let (visible_mask, scene_depth) = render(mesh, &pose, &s.camera)?;
                GroundTruthFrame { pose, scene_depth, visible_mask }
            }
        };
        let e = pose.and_then(|p| frame_errors(&p, &gt.pose, mesh, &s.symmetries, &s.camera, &gt.scene_depth).ok());
        let mut row = vec![frame.to_string()];
        match &e {
            Some(e) => {
                row.extend(e.vsd.iter().map(f64::to_string));
                row.extend([e.mssd.to_string(), e.mspd.map(|x| x.to_string()).unwrap_or_default(), e.t_err.to_string(), e.r_err_deg.to_string()]);
            }
            None => row.extend(std::iter::repeat_n(String::new(), 14)),
        }
        rows.push(row);
        frames.push(e);
    }
    let report = average_recalls(&frames, mesh.diameter(), &s.camera)?;
    create_dir(&common.out)?;
    let mut header: Vec<String> = vec!["frame".into()];
    header.extend((1..=10).map(|k| format!("e_vsd_tau{:02}", 5 * k)));
    header.extend(["e_mssd", "e_mspd", "t_err", "r_err_deg"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(&common.out.join("eval.csv"), &header, rows)?;
    let summary = serde_json::to_value(report.summary()).expect("summary serializes");
    write_json(&common.out.join("eval_summary.json"), &summary)?;
    Ok(summary)
}

fn gen_scenarios(seed: Option<u64>, out: &Path) -> Result<serde_json::Value> {
    create_dir(out)?;
    let mut written = Vec::new();
    for s in example_scenarios(seed.unwrap_or(0)) {
        let path = out.join(format!("{}.json", s.name));
        s.save(&path)?;
        written.push(path.display().to_string());
    }
    Ok(json!({ "written": written }))
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Register { common } => register(&common),
        Command::Track { common, mode, recovery } => track(&common, mode, recovery),
        Command::RecoverScale { common } => scale(&common),
        Command::Eval { common, estimates, truth } => eval(&common, &estimates, truth.as_deref()),
        Command::GenScenario { seed, out } => gen_scenarios(seed, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(value) => {
            // A closed stdout (e.g. piped into `head`) is not a failure of the run.
            let text = serde_json::to_string_pretty(&value).expect("json value serializes");
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
