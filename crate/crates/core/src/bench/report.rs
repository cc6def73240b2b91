//! Report files written after a run:
//!
//! * `frames.csv`: pose, mode and errors per frame (the error series for plots)
//! * `summary.json`: recalls, AR and mean errors
//! * `transitions.csv`: tracker state log
//! * `timing.csv`: wall time per frame
//!
//! Everything except `timing.csv` is deterministic for a fixed scenario.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::pipeline::{FrameRecord, PipelineRun};
use crate::error::{Error, Result};
use crate::geom::Pose;
use crate::metrics::{FrameErrors, MetricSummary};
use crate::recover::TrackerMode;

pub const FRAMES_CSV: &str = "frames.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const TRANSITIONS_CSV: &str = "transitions.csv";
pub const TIMING_CSV: &str = "timing.csv";

const VSD_COLUMNS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub metrics: MetricSummary,
    pub scale_factor: Option<f64>,
    pub effective_model_scale: f64,
    pub frames_tracking: usize,
    pub frames_lost: usize,
    pub frames_recovering: usize,
    pub recovery_frames: usize,
}

impl RunSummary {
    pub fn new(run: &PipelineRun) -> Self {
        let count = |m| run.records.iter().filter(|r| r.mode == m).count();
        Self {
            metrics: run.report.summary(),
            scale_factor: run.scale_factor,
            effective_model_scale: run.effective_model_scale,
            frames_tracking: count(TrackerMode::Tracking),
            frames_lost: count(TrackerMode::Lost),
            frames_recovering: count(TrackerMode::Recovering),
            recovery_frames: run.transitions.iter().filter(|t| t.hypotheses > 0).count(),
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { path: path.to_path_buf(), message: format!("{other:?}") },
    }
}

fn fmt(x: f64) -> String {
    x.to_string()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn frames_header() -> Vec<String> {
    let mut h: Vec<String> = ["frame", "mode", "qw", "qx", "qy", "qz", "tx", "ty", "tz"].map(String::from).to_vec();
    h.extend((1..=VSD_COLUMNS).map(|k| format!("e_vsd_tau{:02}", 5 * k)));
    h.extend(["e_mssd", "e_mspd", "t_err", "r_err_deg"].map(String::from));
    h
}

fn pose_fields(pose: Option<&Pose>) -> Vec<String> {
    match pose {
        Some(p) => {
            let q = p.rotation.quaternion();
            [q.w, q.i, q.j, q.k, p.translation.x, p.translation.y, p.translation.z].map(fmt).to_vec()
        }
        None => vec![String::new(); 7],
    }
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes all report files into `out_dir`, creating it if needed.
pub fn emit_reports(run: &PipelineRun, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if run.records.is_empty() {
        return Err(Error::EmptyInput("no frame records to report".into()));
    }
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let frames = dir.join(FRAMES_CSV);
    write_csv(
        &frames,
        &frames_header(),
        run.records.iter().map(|r| {
            let mut row = vec![r.frame.to_string(), r.mode.as_str().to_string()];
            row.extend(pose_fields(r.pose.as_ref()));
            match &r.errors {
                Some(e) => {
                    row.extend((0..VSD_COLUMNS).map(|i| fmt_opt(e.vsd.get(i).copied())));
                    row.extend([fmt(e.mssd), fmt_opt(e.mspd), fmt(e.t_err), fmt(e.r_err_deg)]);
                }
                None => row.extend(std::iter::repeat_n(String::new(), VSD_COLUMNS + 4)),
            }
            row
        }),
    )?;

    let transitions = dir.join(TRANSITIONS_CSV);
    write_csv(
        &transitions,
        &["frame", "mode", "reason", "hypotheses", "score"].map(String::from),
        run.transitions.iter().map(|t| {
            vec![
                t.frame.to_string(),
                t.mode.as_str().to_string(),
                t.reason.map(|r| r.as_str().to_string()).unwrap_or_default(),
                t.hypotheses.to_string(),
                fmt_opt(t.score),
            ]
        }),
    )?;

    let timing = dir.join(TIMING_CSV);
    write_csv(
        &timing,
        &["frame", "wall_ms"].map(String::from),
        run.records.iter().map(|r| vec![r.frame.to_string(), fmt(r.wall_ms)]),
    )?;

    let summary = dir.join(SUMMARY_JSON);
    let text = serde_json::to_string_pretty(&RunSummary::new(run)).expect("summary serializes");
    std::fs::write(&summary, text + "\n").map_err(|e| Error::io(&summary, e))?;
    Ok(vec![frames, summary, transitions, timing])
}

struct Table {
    path: PathBuf,
    columns: HashMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let columns = r
            .headers()
            .map_err(|e| csv_err(path, e))?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        let rows = r.records().collect::<std::result::Result<_, _>>().map_err(|e| csv_err(path, e))?;
        Ok(Self { path: path.to_path_buf(), columns, rows })
    }

    fn err(&self, line: usize, message: String) -> Error {
        Error::Parse { path: self.path.clone(), message: format!("row {}: {message}", line + 1) }
    }

    fn field<'r>(&self, row: &'r csv::StringRecord, i: usize, name: &str) -> Result<Option<&'r str>> {
        let col = *self.columns.get(name).ok_or_else(|| self.err(i, format!("missing column {name:?}")))?;
        Ok(row.get(col).map(str::trim).filter(|s| !s.is_empty()))
    }

    fn number<T: std::str::FromStr>(&self, row: &csv::StringRecord, i: usize, name: &str) -> Result<Option<T>> {
        self.field(row, i, name)?
            .map(|s| s.parse::<T>().map_err(|_| self.err(i, format!("bad value {s:?} in {name:?}"))))
            .transpose()
    }

    fn required<T: std::str::FromStr>(&self, row: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
        self.number(row, i, name)?.ok_or_else(|| self.err(i, format!("empty {name:?}")))
    }

    fn pose(&self, row: &csv::StringRecord, i: usize) -> Result<Option<Pose>> {
        let names = ["qw", "qx", "qy", "qz", "tx", "ty", "tz"];
        let vals = names.iter().map(|n| self.number::<f64>(row, i, n)).collect::<Result<Vec<_>>>()?;
        if vals.iter().all(Option::is_none) {
            return Ok(None);
        }
        let v: Vec<f64> = vals.into_iter().collect::<Option<_>>().ok_or_else(|| self.err(i, "partial pose".into()))?;
        let q = Quaternion::new(v[0], v[1], v[2], v[3]);
        let rotation = if (q.norm() - 1.0).abs() < 1e-12 { UnitQuaternion::new_unchecked(q) } else { UnitQuaternion::from_quaternion(q) };
        Ok(Some(Pose::new(rotation, Vector3::new(v[4], v[5], v[6]))))
    }
}

/// Reads `frames.csv` (and `timing.csv` when present) back into records.
pub fn read_frames(out_dir: impl AsRef<Path>) -> Result<Vec<FrameRecord>> {
    let dir = out_dir.as_ref();
    let t = Table::read(&dir.join(FRAMES_CSV))?;
    let timing_path = dir.join(TIMING_CSV);
    let timing: HashMap<usize, f64> = if timing_path.exists() {
        let tt = Table::read(&timing_path)?;
        tt.rows
            .iter()
            .enumerate()
            .map(|(i, r)| Ok((tt.required(r, i, "frame")?, tt.required(r, i, "wall_ms")?)))
            .collect::<Result<_>>()?
    } else {
        HashMap::new()
    };
    let vsd_names: Vec<String> = frames_header()[9..9 + VSD_COLUMNS].to_vec();
    t.rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let frame: usize = t.required(row, i, "frame")?;
            let mode = t
                .field(row, i, "mode")?
                .ok_or_else(|| t.err(i, "empty mode".into()))?
                .parse::<TrackerMode>()?;
            let errors = match t.number::<f64>(row, i, "e_mssd")? {
                None => None,
                Some(mssd) => Some(FrameErrors {
                    vsd: vsd_names.iter().map(|n| t.required(row, i, n)).collect::<Result<_>>()?,
                    mssd,
                    mspd: t.number(row, i, "e_mspd")?,
                    t_err: t.required(row, i, "t_err")?,
                    r_err_deg: t.required(row, i, "r_err_deg")?,
                }),
            };
            Ok(FrameRecord { frame, pose: t.pose(row, i)?, mode, errors, wall_ms: timing.get(&frame).copied().unwrap_or(0.0) })
        })
        .collect()
}

/// Reads `frame, qw, qx, qy, qz, tx, ty, tz` columns from any CSV carrying
/// them (including `frames.csv`). Rows with empty pose fields give `None`.
pub fn read_poses_csv(path: impl AsRef<Path>) -> Result<Vec<(usize, Option<Pose>)>> {
    let t = Table::read(path.as_ref())?;
    t.rows.iter().enumerate().map(|(i, row)| Ok((t.required(row, i, "frame")?, t.pose(row, i)?))).collect()
}

pub fn write_poses_csv(path: impl AsRef<Path>, poses: &[(usize, Option<Pose>)]) -> Result<()> {
    let mut header = vec!["frame".to_string()];
    header.extend(["qw", "qx", "qy", "qz", "tx", "ty", "tz"].map(String::from));
    write_csv(
        path.as_ref(),
        &header,
        poses.iter().map(|(f, p)| {
            let mut row = vec![f.to_string()];
            row.extend(pose_fields(p.as_ref()));
            row
        }),
    )
}

/// Transition log rows, for harness assertions.
pub fn read_transitions(out_dir: impl AsRef<Path>) -> Result<Vec<(usize, TrackerMode, String, usize)>> {
    let t = Table::read(&out_dir.as_ref().join(TRANSITIONS_CSV))?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mode = t.field(row, i, "mode")?.unwrap_or_default().parse()?;
            let reason = t.field(row, i, "reason")?.unwrap_or_default().to_string();
            Ok((t.required(row, i, "frame")?, mode, reason, t.required(row, i, "hypotheses")?))
        })
        .collect()
}
