//! Tracking-loss detectors.

use serde::{Deserialize, Serialize};

use crate::geom::{Pose, TriangleMesh};
use crate::hypo::{init_translation_from_depth, Observation};
use crate::render::render_mask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossThresholds {
    pub min_mask_pixels: usize,
    /// Max distance between the mask-derived and predicted translation, m.
    pub theta: f64,
    /// Max distance between observed centroid and projected predicted centre, px.
    pub theta1: f64,
    /// Max area mismatch as a fraction of the observed mask area.
    pub theta2_fraction: f64,
}

impl Default for LossThresholds {
    fn default() -> Self {
        Self { min_mask_pixels: 100, theta: 0.05, theta1: 40.0, theta2_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReason {
    MaskTooSmall,
    MaskInvalid,
    TranslationJump,
    CentroidDrift,
    AreaMismatch,
    PredictedOffscreen,
    TrackFailed,
}

impl LossReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MaskTooSmall => "mask_too_small",
            Self::MaskInvalid => "mask_invalid",
            Self::TranslationJump => "translation_jump",
            Self::CentroidDrift => "centroid_drift",
            Self::AreaMismatch => "area_mismatch",
            Self::PredictedOffscreen => "predicted_offscreen",
            Self::TrackFailed => "track_failed",
        }
    }

    /// Whether the observed mask is too poor to attempt recovery from.
    pub fn mask_unusable(self) -> bool {
        self == Self::MaskTooSmall
    }
}

/// `None` means tracking is fine.
pub type LossVerdict = Option<LossReason>;

/// Depth-based check: mask size, then the distance between the translation
/// derived from mask centre and median depth and the predicted translation.
pub fn detect_loss_depth(observation: &Observation, predicted: &Pose, thresholds: &LossThresholds) -> LossVerdict {
    if observation.mask.area() < thresholds.min_mask_pixels {
        return Some(LossReason::MaskTooSmall);
    }
    match init_translation_from_depth(observation) {
        Err(_) => Some(LossReason::MaskInvalid),
        Ok(t) if (t - predicted.translation).norm() > thresholds.theta => Some(LossReason::TranslationJump),
        Ok(_) => None,
    }
}

/// Silhouette-only check: mask size, centroid drift against the projected
/// predicted centre, and area mismatch against the rendering at the
/// predicted pose.
pub fn detect_loss_rgb(
    observation: &Observation,
    predicted: &Pose,
    mesh: &TriangleMesh,
    thresholds: &LossThresholds,
) -> LossVerdict {
    let area = observation.mask.area();
    if area < thresholds.min_mask_pixels {
        return Some(LossReason::MaskTooSmall);
    }
    let Ok(centre) = observation.camera.project(&predicted.translation) else {
        return Some(LossReason::PredictedOffscreen);
    };
    let centroid = match observation.mask.centroid() {
        Ok(c) => c,
        Err(_) => return Some(LossReason::MaskTooSmall),
    };
    if (centroid - centre).norm() > thresholds.theta1 {
        return Some(LossReason::CentroidDrift);
    }
    let rendered = match render_mask(mesh, predicted, &observation.camera) {
        Ok(m) => m.area(),
        Err(_) => return Some(LossReason::PredictedOffscreen),
    };
    let theta2 = thresholds.theta2_fraction * area as f64;
    if (area as f64 - rendered as f64).abs() > theta2 {
        return Some(LossReason::AreaMismatch);
    }
    None
}

/// Uses the depth check when the observation carries valid masked depth,
/// otherwise the silhouette check.
pub fn detect_loss(
    observation: &Observation,
    predicted: &Pose,
    mesh: &TriangleMesh,
    thresholds: &LossThresholds,
) -> LossVerdict {
    if observation.has_masked_depth() {
        detect_loss_depth(observation, predicted, thresholds)
    } else {
        detect_loss_rgb(observation, predicted, mesh, thresholds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::CameraModel;
    use crate::render::{render, DepthImage, MaskImage, Roi};
    use nalgebra::Vector3;

    fn cam() -> CameraModel {
        CameraModel::vga(600.0)
    }

    /// 40x40 square centred on (320, 240) with uniform depth `z`.
    fn square_obs(z: f64) -> Observation {
        let roi = Roi { x0: 300, y0: 220, width: 41, height: 41 };
        let mask = MaskImage::from_fn(640, 480, roi, |_, _| true);
        let depth = DepthImage::from_roi(640, 480, roi, vec![z; roi.len()]);
        Observation::new(mask, Some(depth), cam())
    }

    #[test]
    fn empty_mask_is_lost() {
        let obs = Observation::new(MaskImage::empty(640, 480), None, cam());
        let p = Pose::from_translation(Vector3::new(0.0, 0.0, 0.8));
        assert_eq!(detect_loss_depth(&obs, &p, &LossThresholds::default()), Some(LossReason::MaskTooSmall));
        let mesh = TriangleMesh::cuboid(Vector3::new(0.1, 0.1, 0.1)).unwrap();
        assert_eq!(detect_loss_rgb(&obs, &p, &mesh, &LossThresholds::default()), Some(LossReason::MaskTooSmall));
    }

    #[test]
    fn depth_check_arithmetic() {
        let obs = square_obs(0.8);
        let th = LossThresholds::default();
        let same = Pose::from_translation(Vector3::new(0.0, 0.0, 0.8));
        assert_eq!(detect_loss_depth(&obs, &same, &th), None);
        let off = Pose::from_translation(Vector3::new(0.0, 0.0, 0.86));
        assert_eq!(detect_loss_depth(&obs, &off, &th), Some(LossReason::TranslationJump));
    }

    #[test]
    fn zero_depth_is_invalid_for_depth_check() {
        let obs = square_obs(0.8).with_depth(Some(DepthImage::zeros(640, 480)));
        let p = Pose::from_translation(Vector3::new(0.0, 0.0, 0.8));
        assert_eq!(detect_loss_depth(&obs, &p, &LossThresholds::default()), Some(LossReason::MaskInvalid));
    }

    #[test]
    fn rgb_check_centroid_and_area() {
        let mesh = TriangleMesh::cuboid(Vector3::new(0.1, 0.1, 0.1)).unwrap();
        let th = LossThresholds::default();
        let truth = Pose::from_translation(Vector3::new(0.0, 0.0, 0.8));
        let (mask, _) = render(&mesh, &truth, &cam()).unwrap();
        let obs = Observation::new(mask.clone(), None, cam());
        assert_eq!(detect_loss_rgb(&obs, &truth, &mesh, &th), None);

        // 50 px to the right of the observation.
        let shifted = Pose::from_translation(Vector3::new(50.0 * 0.8 / 600.0, 0.0, 0.8));
        assert_eq!(detect_loss_rgb(&obs, &shifted, &mesh, &th), Some(LossReason::CentroidDrift));

        // Left 40% of the silhouette visible: |1 - 0.4| > 0.5.
        let b = mask.bounding_box().unwrap();
        let cut = b.x0 + (b.width as f64 * 0.4) as u32;
        let partial = mask.filter(|x, _| x < cut);
        let obs = Observation::new(partial, None, cam());
        let relaxed = LossThresholds { theta1: 1e3, ..th };
        assert_eq!(detect_loss_rgb(&obs, &truth, &mesh, &relaxed), Some(LossReason::AreaMismatch));
    }

    #[test]
    fn offscreen_prediction_is_lost() {
        let mesh = TriangleMesh::cuboid(Vector3::new(0.1, 0.1, 0.1)).unwrap();
        let obs = square_obs(0.8);
        let behind = Pose::from_translation(Vector3::new(0.0, 0.0, -1.0));
        assert_eq!(
            detect_loss_rgb(&obs, &behind, &mesh, &LossThresholds::default()),
            Some(LossReason::PredictedOffscreen)
        );
    }

    #[test]
    fn dispatch_follows_depth_availability() {
        let mesh = TriangleMesh::cuboid(Vector3::new(0.1, 0.1, 0.1)).unwrap();
        let th = LossThresholds::default();
        // Predicted depth 6 cm away: only the depth check notices.
        let p = Pose::from_translation(Vector3::new(0.0, 0.0, 0.86));
        let obs = square_obs(0.8);
        assert_eq!(detect_loss(&obs, &p, &mesh, &th), Some(LossReason::TranslationJump));
        let no_depth = obs.with_depth(None);
        assert_ne!(detect_loss(&no_depth, &p, &mesh, &th), Some(LossReason::TranslationJump));
    }
}
