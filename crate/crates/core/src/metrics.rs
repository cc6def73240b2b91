//! Pose-error functions and recall aggregation for single-object
//! localization: VSD, MSSD, MSPD, average recall, and plain translation and
//! rotation errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{rotation_geodesic_deg, CameraModel, Pose, TriangleMesh};
use crate::render::{render, DepthImage};

/// Visibility tolerance against scene depth for VSD, m.
pub const VSD_DELTA: f64 = 0.015;

/// Object-frame transforms under which the object looks the same.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Pose>", into = "Vec<Pose>")]
pub struct SymmetrySet {
    transforms: Vec<Pose>,
}

impl SymmetrySet {
    pub fn identity() -> Self {
        Self { transforms: vec![Pose::identity()] }
    }

    /// Adds the identity when it is missing.
    pub fn new(mut transforms: Vec<Pose>) -> Self {
        if !transforms.iter().any(|t| *t == Pose::identity()) {
            transforms.insert(0, Pose::identity());
        }
        Self { transforms }
    }

    /// Discrete `n`-fold symmetry about the object z axis.
    pub fn about_z(n: usize) -> Self {
        let n = n.max(1);
        Self::new(
            (0..n)
                .map(|k| {
                    let angle = std::f64::consts::TAU * k as f64 / n as f64;
                    Pose::new(nalgebra::UnitQuaternion::from_euler_angles(0.0, 0.0, angle), nalgebra::Vector3::zeros())
                })
                .collect(),
        )
    }

    pub fn transforms(&self) -> &[Pose] {
        &self.transforms
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }
}

impl Default for SymmetrySet {
    fn default() -> Self {
        Self::identity()
    }
}

impl From<Vec<Pose>> for SymmetrySet {
    fn from(v: Vec<Pose>) -> Self {
        Self::new(v)
    }
}

impl From<SymmetrySet> for Vec<Pose> {
    fn from(s: SymmetrySet) -> Self {
        s.transforms
    }
}

/// VSD error at a single tolerance `tau` (m).
pub fn vsd(
    estimated: &Pose,
    truth: &Pose,
    mesh: &TriangleMesh,
    camera: &CameraModel,
    scene_depth: &DepthImage,
    tau: f64,
) -> Result<f64> {
    Ok(vsd_errors(estimated, truth, mesh, camera, scene_depth, &[tau])?[0])
}

/// VSD errors for several tolerances, sharing the renderings.
///
/// Distance maps hold the Euclidean distance from the camera centre. A pixel
/// of the truth rendering is visible when its distance is at most
/// `VSD_DELTA` behind the scene, or the scene has no measurement there. The
/// estimate's visibility mask also includes every pixel it covers that is
/// visible in the truth. The error is the fraction of the union of the two
/// visibility masks that is either outside their intersection or has a
/// distance difference of at least `tau`.
pub fn vsd_errors(
    estimated: &Pose,
    truth: &Pose,
    mesh: &TriangleMesh,
    camera: &CameraModel,
    scene_depth: &DepthImage,
    taus: &[f64],
) -> Result<Vec<f64>> {
    if scene_depth.width() != camera.width || scene_depth.height() != camera.height {
        return Err(Error::InvalidConfig("scene depth size does not match the camera".into()));
    }
    let (gt_mask, gt_depth) = render(mesh, truth, camera)?;
    let est = render(mesh, estimated, camera).ok();
    let roi = match &est {
        Some((m, _)) => gt_mask.roi().union(&m.roi()),
        None => gt_mask.roi(),
    };

    let mut union = 0usize;
    let mut outside = 0usize;
    let mut diffs = Vec::new();
    for (x, y) in roi.pixels() {
        let f = camera.ray_length_factor(x as f64, y as f64);
        let scene = scene_depth.get(x, y) * f;
        let gt = gt_depth.get(x, y) * f;
        let es = est.as_ref().map_or(0.0, |(_, d)| d.get(x, y) * f);
        let visible = |model: f64| model > 0.0 && (scene == 0.0 || model - scene <= VSD_DELTA);
        let vis_gt = visible(gt);
        let vis_est = visible(es) || (vis_gt && es > 0.0);
        if vis_gt || vis_est {
            union += 1;
            if vis_gt && vis_est {
                diffs.push((gt - es).abs());
            } else {
                outside += 1;
            }
        }
    }
    Ok(taus
        .iter()
        .map(|&tau| {
            if union == 0 {
                1.0
            } else {
                (diffs.iter().filter(|&&d| d >= tau).count() + outside) as f64 / union as f64
            }
        })
        .collect())
}

/// Maximum symmetry-aware surface distance, m.
pub fn mssd(estimated: &Pose, truth: &Pose, mesh: &TriangleMesh, symmetries: &SymmetrySet) -> f64 {
    symmetries
        .transforms()
        .iter()
        .map(|s| {
            let t = truth.compose(s);
            mesh.vertices()
                .map(|v| (estimated.transform_point(&v) - t.transform_point(&v)).norm())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Maximum symmetry-aware projection distance, px.
pub fn mspd(
    estimated: &Pose,
    truth: &Pose,
    mesh: &TriangleMesh,
    symmetries: &SymmetrySet,
    camera: &CameraModel,
) -> Result<f64> {
    let project = |p: &Pose, v| camera.project(&p.transform_point(&v)).map_err(|_| Error::VertexBehindCamera);
    let est: Vec<_> = mesh.vertices().map(|v| project(estimated, v)).collect::<Result<_>>()?;
    let mut best = f64::INFINITY;
    for s in symmetries.transforms() {
        let t = truth.compose(s);
        let mut worst: f64 = 0.0;
        for (v, e) in mesh.vertices().zip(&est) {
            worst = worst.max((project(&t, v)? - e).norm());
        }
        best = best.min(worst);
    }
    Ok(best)
}

/// Translation error (m) and geodesic rotation error (deg), ignoring symmetry.
pub fn pose_errors(estimated: &Pose, truth: &Pose) -> (f64, f64) {
    (
        (estimated.translation - truth.translation).norm(),
        rotation_geodesic_deg(&estimated.rotation, &truth.rotation),
    )
}

/// `fraction * diameter` for fractions 5%, 10%, ..., 50%.
pub fn diameter_thresholds(diameter: f64) -> Vec<f64> {
    (1..=10).map(|k| 0.05 * k as f64 * diameter).collect()
}

/// VSD correctness thresholds 0.05, 0.10, ..., 0.50.
pub fn vsd_thetas() -> Vec<f64> {
    (1..=10).map(|k| 0.05 * k as f64).collect()
}

/// MSPD thresholds `5r, 10r, ..., 50r` px with `r = width / 640`.
pub fn mspd_thresholds(camera: &CameraModel) -> Vec<f64> {
    let r = camera.mspd_unit();
    (1..=10).map(|k| 5.0 * k as f64 * r).collect()
}

/// Combines the three component recalls into the overall score.
pub fn combine_average_recall(ar_vsd: f64, ar_mssd: f64, ar_mspd: f64) -> f64 {
    (ar_vsd + ar_mssd + ar_mspd) / 3.0
}

/// Errors of one estimated pose against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameErrors {
    /// One entry per tolerance of `diameter_thresholds`.
    pub vsd: Vec<f64>,
    pub mssd: f64,
    /// `None` when a vertex projects from behind the camera.
    pub mspd: Option<f64>,
    pub t_err: f64,
    pub r_err_deg: f64,
}

/// Computes every per-frame error. `scene_depth` is the full scene depth,
/// occluders included.
pub fn frame_errors(
    estimated: &Pose,
    truth: &Pose,
    mesh: &TriangleMesh,
    symmetries: &SymmetrySet,
    camera: &CameraModel,
    scene_depth: &DepthImage,
) -> Result<FrameErrors> {
    let vsd = vsd_errors(estimated, truth, mesh, camera, scene_depth, &diameter_thresholds(mesh.diameter()))?;
    let (t_err, r_err_deg) = pose_errors(estimated, truth);
    Ok(FrameErrors {
        vsd,
        mssd: mssd(estimated, truth, mesh, symmetries),
        mspd: mspd(estimated, truth, mesh, symmetries, camera).ok(),
        t_err,
        r_err_deg,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `None` marks a frame without a pose; it fails every threshold.
    pub frames: Vec<Option<FrameErrors>>,
    pub vsd_taus: Vec<f64>,
    pub vsd_thetas: Vec<f64>,
    pub mssd_thresholds: Vec<f64>,
    pub mspd_thresholds: Vec<f64>,
    /// `recall_vsd[i][j]`: tolerance `i`, threshold `j`.
    pub recall_vsd: Vec<Vec<f64>>,
    pub recall_mssd: Vec<f64>,
    pub recall_mspd: Vec<f64>,
    pub ar_vsd: f64,
    pub ar_mssd: f64,
    pub ar_mspd: f64,
    pub ar: f64,
    pub mean_t_err: Option<f64>,
    pub mean_r_err_deg: Option<f64>,
}

/// The scalar part of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub frames: usize,
    pub frames_with_pose: usize,
    pub ar_vsd: f64,
    pub ar_mssd: f64,
    pub ar_mspd: f64,
    pub ar: f64,
    pub recall_mssd: Vec<f64>,
    pub recall_mspd: Vec<f64>,
    pub mean_t_err: Option<f64>,
    pub mean_r_err_deg: Option<f64>,
}

impl MetricReport {
    pub fn summary(&self) -> MetricSummary {
        MetricSummary {
            frames: self.frames.len(),
            frames_with_pose: self.frames.iter().flatten().count(),
            ar_vsd: self.ar_vsd,
            ar_mssd: self.ar_mssd,
            ar_mspd: self.ar_mspd,
            ar: self.ar,
            recall_mssd: self.recall_mssd.clone(),
            recall_mspd: self.recall_mspd.clone(),
            mean_t_err: self.mean_t_err,
            mean_r_err_deg: self.mean_r_err_deg,
        }
    }
}

fn recall<'a>(errors: impl Iterator<Item = Option<f64>> + Clone + 'a, n: usize, theta: f64) -> f64 {
    errors.filter(|e| e.is_some_and(|e| e < theta)).count() as f64 / n as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Aggregates per-frame errors into recalls over the standard threshold grids.
pub fn average_recalls(frames: &[Option<FrameErrors>], diameter: f64, camera: &CameraModel) -> Result<MetricReport> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames to evaluate".into()));
    }
    let n = frames.len();
    let vsd_taus = diameter_thresholds(diameter);
    let thetas = vsd_thetas();
    let mssd_thresholds = diameter_thresholds(diameter);
    let mspd_thresholds = mspd_thresholds(camera);

    let recall_vsd: Vec<Vec<f64>> = (0..vsd_taus.len())
        .map(|i| {
            let errs = frames.iter().map(move |f| f.as_ref().and_then(|f| f.vsd.get(i).copied()));
            thetas.iter().map(|&t| recall(errs.clone(), n, t)).collect()
        })
        .collect();
    let mssd_errs = frames.iter().map(|f| f.as_ref().map(|f| f.mssd));
    let recall_mssd: Vec<f64> = mssd_thresholds.iter().map(|&t| recall(mssd_errs.clone(), n, t)).collect();
    let mspd_errs = frames.iter().map(|f| f.as_ref().and_then(|f| f.mspd));
    let recall_mspd: Vec<f64> = mspd_thresholds.iter().map(|&t| recall(mspd_errs.clone(), n, t)).collect();

    let ar_vsd = mean(&recall_vsd.concat());
    let ar_mssd = mean(&recall_mssd);
    let ar_mspd = mean(&recall_mspd);
    let posed: Vec<&FrameErrors> = frames.iter().flatten().collect();
    let (mean_t_err, mean_r_err_deg) = if posed.is_empty() {
        (None, None)
    } else {
        let k = posed.len() as f64;
        (
            Some(posed.iter().map(|f| f.t_err).sum::<f64>() / k),
            Some(posed.iter().map(|f| f.r_err_deg).sum::<f64>() / k),
        )
    };
    Ok(MetricReport {
        frames: frames.to_vec(),
        vsd_taus,
        vsd_thetas: thetas,
        mssd_thresholds,
        mspd_thresholds,
        recall_vsd,
        recall_mssd,
        recall_mspd,
        ar_vsd,
        ar_mssd,
        ar_mspd,
        ar: combine_average_recall(ar_vsd, ar_mssd, ar_mspd),
        mean_t_err,
        mean_r_err_deg,
    })
}
