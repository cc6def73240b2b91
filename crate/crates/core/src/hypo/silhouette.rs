use nalgebra::{UnitQuaternion, Vector3};
use rayon::prelude::*;

use super::{Hypothesis, Observation, Refiner, Scorer};
use crate::geom::{Pose, TriangleMesh};
use crate::render::{render, render_mask, DepthImage, MaskImage};

/// Classical render-and-compare refiner working on silhouettes.
///
/// Each call runs, per hypothesis:
/// 1. centroid alignment: shift x, y so the rendered mask centre lands on
///    the observed one (at the current depth);
/// 2. depth alignment: rescale the translation along its ray by the median
///    observed-minus-rendered depth when the observation carries depth, else
///    by `sqrt(rendered_area / observed_area)`; the factor is clamped to
///    `1 ± max_depth_step`;
/// 3. rotation hill-climb: up to `rounds` sweeps over `±step` rotations
///    about the camera axes, keeping every change that raises IoU by more
///    than [`MIN_GAIN`]; a sweep
///    without gain halves the step, at most three times.
#[derive(Debug, Clone, Copy)]
pub struct SilhouetteRefiner {
    pub rounds: usize,
    /// Hill-climb step, radians.
    pub step: f64,
    pub max_depth_step: f64,
}

impl Default for SilhouetteRefiner {
    fn default() -> Self {
        Self { rounds: 10, step: 2.5f64.to_radians(), max_depth_step: 0.2 }
    }
}

const FINE_HALVINGS: usize = 3;

/// IoU gain below which a rotation step counts as tessellation noise.
const MIN_GAIN: f64 = 1e-4;

impl SilhouetteRefiner {
    pub fn refine_pose(&self, start: &Pose, observation: &Observation, mesh: &TriangleMesh) -> Pose {
        let observed = &observation.mask;
        let cam = &observation.camera;
        let Ok(target) = observed.centroid() else {
            return *start;
        };
        let target_area = observed.area() as f64;

        let Ok(mask) = render_mask(mesh, start, cam) else {
            return *start;
        };
        let mut pose = *start;
        let c = mask.centroid().expect("non-empty render");
        pose.translation.x += pose.translation.z * (target.x - c.x) / cam.fx;
        pose.translation.y += pose.translation.z * (target.y - c.y) / cam.fy;

        // An all-zero depth channel carries nothing; skip the z-buffer then.
        let obs_depth = observation.depth.as_ref().filter(|_| observation.has_masked_depth());
        let offset = match obs_depth {
            Some(obs_depth) => match render(mesh, &pose, cam) {
                Ok((mask, depth)) => depth_offset(obs_depth, observed, &depth, &mask).map(|o| (o, mask.area())),
                Err(_) => return *start,
            },
            None => None,
        };
        let ratio = match offset {
            Some((offset, _)) => (pose.translation.z + offset) / pose.translation.z,
            None => {
                let Ok(mask) = render_mask(mesh, &pose, cam) else {
                    return *start;
                };
                (mask.area() as f64 / target_area).sqrt()
            }
        };
        let ratio = ratio.clamp(1.0 - self.max_depth_step, 1.0 + self.max_depth_step);
        if ratio != 1.0 {
            pose.translation *= ratio;
        }

        let Ok(mask) = render_mask(mesh, &pose, cam) else {
            return pose;
        };
        let mut best_iou = mask.iou(observed);
        let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
        let mut step = self.step;
        let mut halvings = 0;
        for _ in 0..self.rounds {
            if best_iou >= 1.0 {
                break;
            }
            let mut improved = false;
            for axis in &axes {
                for sign in [1.0, -1.0] {
                    let delta = UnitQuaternion::from_scaled_axis(axis * (sign * step));
                    let candidate = Pose::new(delta * pose.rotation, pose.translation);
                    if let Ok(m) = render_mask(mesh, &candidate, cam) {
                        let iou = m.iou(observed);
                        if iou > best_iou + MIN_GAIN {
                            best_iou = iou;
                            pose = candidate;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                if halvings == FINE_HALVINGS {
                    break;
                }
                step *= 0.5;
                halvings += 1;
            }
        }
        pose
    }
}

/// Median of observed-minus-rendered depth over pixels valid in both.
fn depth_offset(obs_depth: &DepthImage, obs_mask: &MaskImage, rendered: &DepthImage, rendered_mask: &MaskImage) -> Option<f64> {
    let mut diffs: Vec<f64> = obs_mask
        .set_pixels()
        .filter(|&(x, y)| rendered_mask.get(x, y))
        .filter_map(|(x, y)| {
            let (o, r) = (obs_depth.get(x, y), rendered.get(x, y));
            (o > 0.0 && r > 0.0).then_some(o - r)
        })
        .collect();
    if diffs.is_empty() {
        return None;
    }
    diffs.sort_unstable_by(f64::total_cmp);
    let n = diffs.len();
    Some(if n % 2 == 1 { diffs[n / 2] } else { 0.5 * (diffs[n / 2 - 1] + diffs[n / 2]) })
}

impl Refiner for SilhouetteRefiner {
    fn refine(&self, hypotheses: &[Hypothesis], observation: &Observation, mesh: &TriangleMesh) -> Vec<Hypothesis> {
        hypotheses
            .par_iter()
            .map(|h| Hypothesis { pose: self.refine_pose(&h.pose, observation, mesh), score: h.score })
            .collect()
    }
}

/// IoU minus a boundary chamfer penalty, plus a depth penalty when the
/// observation carries depth.
///
/// `score = IoU - lambda * chamfer / diag - depth_weight * gap / diameter`,
/// where chamfer is the symmetric mean nearest-boundary-pixel distance,
/// `diag` the diagonal of the observed mask's bounding box and `gap` the mean
/// absolute observed-minus-rendered depth over pixels valid in both (the
/// full diameter when none overlap). Silhouettes alone leave rotations that
/// hide an asymmetric feature ambiguous; depth separates them. Poses that
/// render nothing score `-inf`.
#[derive(Debug, Clone, Copy)]
pub struct SilhouetteScorer {
    pub lambda: f64,
    pub depth_weight: f64,
}

impl Default for SilhouetteScorer {
    fn default() -> Self {
        Self { lambda: 0.1, depth_weight: 1.0 }
    }
}

/// Mean absolute depth difference over pixels with depth in both images.
fn mean_depth_gap(obs_depth: &DepthImage, obs_mask: &MaskImage, rendered: &DepthImage, rendered_mask: &MaskImage) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (x, y) in obs_mask.set_pixels().filter(|&(x, y)| rendered_mask.get(x, y)) {
        let (o, r) = (obs_depth.get(x, y), rendered.get(x, y));
        if o > 0.0 && r > 0.0 {
            sum += (o - r).abs();
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

const MAX_BOUNDARY_SAMPLES: usize = 256;

fn subsample(points: Vec<(u32, u32)>) -> Vec<(f64, f64)> {
    let stride = points.len().div_ceil(MAX_BOUNDARY_SAMPLES).max(1);
    points.into_iter().step_by(stride).map(|(x, y)| (x as f64, y as f64)).collect()
}

fn mean_nearest(from: &[(f64, f64)], to: &[(f64, f64)]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|&(ax, ay)| {
            to.iter()
                .map(|&(bx, by)| (ax - bx) * (ax - bx) + (ay - by) * (ay - by))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / from.len() as f64
}

impl SilhouetteScorer {
    fn score_mask(&self, rendered: &MaskImage, observed: &MaskImage, obs_boundary: &[(f64, f64)], diag: f64) -> f64 {
        let iou = rendered.iou(observed);
        if self.lambda == 0.0 || obs_boundary.is_empty() {
            return iou;
        }
        let boundary = subsample(rendered.boundary_pixels());
        if boundary.is_empty() {
            return iou;
        }
        let chamfer = 0.5 * (mean_nearest(&boundary, obs_boundary) + mean_nearest(obs_boundary, &boundary));
        iou - self.lambda * chamfer / diag
    }
}

impl Scorer for SilhouetteScorer {
    fn score(&self, hypotheses: &[Hypothesis], observation: &Observation, mesh: &TriangleMesh) -> Vec<f64> {
        let observed = &observation.mask;
        let obs_boundary = subsample(observed.boundary_pixels());
        let diag = observed
            .bounding_box()
            .map(|b| ((b.width as f64).powi(2) + (b.height as f64).powi(2)).sqrt())
            .unwrap_or(1.0);
        let obs_depth = observation.depth.as_ref().filter(|_| self.depth_weight > 0.0 && observation.has_masked_depth());
        let diameter = mesh.diameter();
        hypotheses
            .par_iter()
            .map(|h| match obs_depth {
                None => match render_mask(mesh, &h.pose, &observation.camera) {
                    Ok(mask) => self.score_mask(&mask, observed, &obs_boundary, diag),
                    Err(_) => f64::NEG_INFINITY,
                },
                Some(obs_depth) => match render(mesh, &h.pose, &observation.camera) {
                    Ok((mask, depth)) => {
                        let gap = mean_depth_gap(obs_depth, observed, &depth, &mask).unwrap_or(diameter);
                        self.score_mask(&mask, observed, &obs_boundary, diag) - self.depth_weight * gap.min(diameter) / diameter
                    }
                    Err(_) => f64::NEG_INFINITY,
                },
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rotation_geodesic, CameraModel};
    use crate::render::Roi;

    fn cam() -> CameraModel {
        CameraModel::vga(600.0)
    }

    fn truth() -> Pose {
        Pose::new(UnitQuaternion::from_euler_angles(0.5, -0.3, 0.9), Vector3::new(0.0, 0.0, 0.6))
    }

    fn observe(mesh: &TriangleMesh, pose: &Pose, with_depth: bool) -> Observation {
        let (mask, depth) = render(mesh, pose, &cam()).unwrap();
        Observation::new(mask, with_depth.then_some(depth), cam())
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let mesh = TriangleMesh::notched_block(0.16).unwrap();
        let r = SilhouetteRefiner::default();
        for with_depth in [false, true] {
            let obs = observe(&mesh, &truth(), with_depth);
            let out = r.refine_pose(&truth(), &obs, &mesh);
            assert!((out.translation - truth().translation).norm() < 1e-6);
            assert!(rotation_geodesic(&out.rotation, &truth().rotation) < 1e-6);
        }
    }

    #[test]
    fn depth_error_is_corrected_by_area() {
        let mesh = TriangleMesh::notched_block(0.16).unwrap();
        let obs = observe(&mesh, &truth(), false);
        let mut start = truth();
        start.translation.z *= 1.1;
        let out = SilhouetteRefiner::default().refine_pose(&start, &obs, &mesh);
        let rel = (out.translation.z - truth().translation.z).abs() / truth().translation.z;
        assert!(rel < 0.02, "relative depth error {rel}");
    }

    #[test]
    fn depth_error_is_corrected_by_depth_channel() {
        let mesh = TriangleMesh::notched_block(0.16).unwrap();
        let obs = observe(&mesh, &truth(), true);
        let mut start = truth();
        start.translation.z *= 1.1;
        let out = SilhouetteRefiner::default().refine_pose(&start, &obs, &mesh);
        assert!((out.translation.z - truth().translation.z).abs() < 2e-3);
    }

    #[test]
    fn rotation_error_does_not_lower_iou() {
        let mesh = TriangleMesh::notched_block(0.16).unwrap();
        let obs = observe(&mesh, &truth(), false);
        let mut start = truth();
        start.rotation = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 5f64.to_radians()) * start.rotation;
        let before = render(&mesh, &start, &cam()).unwrap().0.iou(&obs.mask);
        let out = SilhouetteRefiner::default().refine_pose(&start, &obs, &mesh);
        let after = render(&mesh, &out, &cam()).unwrap().0.iou(&obs.mask);
        assert!(after >= before, "{after} < {before}");
    }

    #[test]
    fn depth_step_is_clamped() {
        let mesh = TriangleMesh::notched_block(0.16).unwrap();
        let obs = observe(&mesh, &truth(), false);
        let mut start = truth();
        start.translation.z = 0.2;
        let out = SilhouetteRefiner::default().refine_pose(&start, &obs, &mesh);
        assert!(out.translation.z >= 0.1 && out.translation.z <= 0.4);
        assert!(out.translation.z <= 0.2 * 1.2 + 1e-12);
    }

    #[test]
    fn refine_is_deterministic() {
        let mesh = TriangleMesh::notched_block(0.16).unwrap();
        let obs = observe(&mesh, &truth(), false);
        let starts: Vec<Hypothesis> = (0..8)
            .map(|k| {
                let mut p = truth();
                p.rotation = UnitQuaternion::from_euler_angles(0.05 * k as f64, 0.0, 0.1) * p.rotation;
                p.translation.z += 0.01 * k as f64;
                Hypothesis::unscored(p)
            })
            .collect();
        let r = SilhouetteRefiner::default();
        let poses = |hs: Vec<Hypothesis>| hs.into_iter().map(|h| h.pose).collect::<Vec<_>>();
        assert_eq!(poses(r.refine(&starts, &obs, &mesh)), poses(r.refine(&starts, &obs, &mesh)));
    }

    #[test]
    fn perfect_overlap_scores_one() {
        let mesh = TriangleMesh::notched_block(0.16).unwrap();
        let obs = observe(&mesh, &truth(), false);
        let s = SilhouetteScorer::default().score(&[Hypothesis::unscored(truth())], &obs, &mesh);
        assert_eq!(s, vec![1.0]);
    }

    #[test]
    fn disjoint_masks_score_non_positive() {
        let mesh = TriangleMesh::notched_block(0.16).unwrap();
        let obs = Observation::new(
            MaskImage::from_fn(640, 480, Roi::new(0, 0, 40, 40), |_, _| true),
            None,
            cam(),
        );
        let hyps = [Hypothesis::unscored(truth()), Hypothesis::unscored(Pose::from_translation(Vector3::new(0.0, 0.0, -1.0)))];
        let s = SilhouetteScorer::default().score(&hyps, &obs, &mesh);
        assert!(s[0] <= 0.0);
        assert_eq!(s[1], f64::NEG_INFINITY);
    }
}
