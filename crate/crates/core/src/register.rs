//! First-frame registration.
//!
//! Without depth, the object distance is found by bisection: hypotheses are
//! placed at the midpoint of `[low, high]`, refined and ranked, and the area
//! of the winner's rendered silhouette decides which half of the interval to
//! keep. Rendered area shrinks as depth grows, so a rendering larger than the
//! observation means the object is farther away and `low` moves up.
//!
//! The same bisection, run over a mesh scale factor at a depth-anchored
//! translation, recovers the scale of a model whose size is unknown.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{sample_rotation_grid, Pose, RotationGrid, TriangleMesh, REGISTRATION_GRID_LEVEL};
use crate::hypo::{
    init_translation_from_depth, make_hypotheses, score_and_select, translation_at_depth, Hypothesis, Observation,
    Refiner, Scorer,
};
use crate::render::render_mask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthSearchConfig {
    pub z_min: f64,
    pub z_max: f64,
    /// Stop when the selected depth moves less than this between iterations.
    pub depth_convergence: f64,
    /// Stop when `high - low` falls below this.
    pub range_convergence: f64,
    pub max_iterations: usize,
    pub grid_level: u32,
}

impl Default for DepthSearchConfig {
    fn default() -> Self {
        Self {
            z_min: 0.2,
            z_max: 2.0,
            depth_convergence: 1e-2,
            range_convergence: 1e-2,
            max_iterations: 30,
            grid_level: REGISTRATION_GRID_LEVEL,
        }
    }
}

impl DepthSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_min > 0.0 && self.z_min < self.z_max) {
            return Err(Error::InvalidConfig(format!("need 0 < z_min < z_max, got [{}, {}]", self.z_min, self.z_max)));
        }
        if !(self.depth_convergence > 0.0 && self.range_convergence > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidConfig("tolerances and max_iterations must be positive".into()));
        }
        Ok(())
    }

    /// Upper bound on the iterations needed to shrink the interval below
    /// `range_convergence`: `ceil(log2((z_max - z_min) / range_convergence)) + 1`.
    pub fn iteration_bound(&self) -> usize {
        ((self.z_max - self.z_min) / self.range_convergence).log2().ceil().max(0.0) as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    DepthConverged,
    RangeConverged,
    AreaMatched,
    IntervalEmpty,
}

/// One bisection iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub iteration: usize,
    pub low: f64,
    pub high: f64,
    /// Midpoint at which hypotheses were placed (depth or scale).
    pub midpoint: f64,
    /// Depth of the selected pose after refinement.
    pub selected_depth: f64,
    pub selected_score: f64,
    pub rendered_area: usize,
    pub observed_area: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSearchOutcome {
    pub pose: Pose,
    pub iterations: usize,
    pub stop: StopReason,
    pub trace: Vec<SearchStep>,
}

fn refine_and_select(
    hypotheses: Vec<Hypothesis>,
    observation: &Observation,
    mesh: &TriangleMesh,
    refiner: &dyn Refiner,
    scorer: &dyn Scorer,
) -> Result<Hypothesis> {
    let mut refined = refiner.refine(&hypotheses, observation, mesh);
    score_and_select(scorer, &mut refined, observation, mesh)
        .ok_or_else(|| Error::InvalidConfig("rotation grid produced no hypotheses".into()))
}

fn rendered_area(mesh: &TriangleMesh, pose: &Pose, observation: &Observation) -> usize {
    render_mask(mesh, pose, &observation.camera).map(|m| m.area()).unwrap_or(0)
}

/// Depth-free registration by bisection over the object depth.
///
/// The observation's depth channel is ignored (replaced by nothing), so the
/// refiner only sees the silhouette.
pub fn register_depth_free(
    mesh: &TriangleMesh,
    observation: &Observation,
    config: &DepthSearchConfig,
    refiner: &dyn Refiner,
    scorer: &dyn Scorer,
) -> Result<DepthSearchOutcome> {
    config.validate()?;
    let observation = observation.with_depth(None);
    let observed_area = observation.mask.area();
    if observed_area == 0 {
        return Err(Error::EmptyMask);
    }
    let centroid = observation.mask.centroid()?;
    let rotations = sample_rotation_grid(config.grid_level);

    let (mut low, mut high) = (config.z_min, config.z_max);
    let mut last_depth = f64::INFINITY;
    let mut best: Option<Pose> = None;
    let mut trace = Vec::new();

    while low <= high {
        if trace.len() == config.max_iterations {
            return Err(Error::NoConvergence { best: Box::new(best.expect("at least one iteration")), low, high });
        }
        let mid = 0.5 * (low + high);
        let translation = observation.camera.backproject(&centroid, mid)?;
        let selected = refine_and_select(make_hypotheses(&rotations, translation), &observation, mesh, refiner, scorer)?;
        let pose = selected.pose;
        best = Some(pose);
        let area = rendered_area(mesh, &pose, &observation);
        let current_depth = pose.depth();
        trace.push(SearchStep {
            iteration: trace.len() + 1,
            low,
            high,
            midpoint: mid,
            selected_depth: current_depth,
            selected_score: selected.score,
            rendered_area: area,
            observed_area,
        });

        let stop = if (current_depth - last_depth).abs() < config.depth_convergence {
            Some(StopReason::DepthConverged)
        } else if (high - low).abs() < config.range_convergence {
            Some(StopReason::RangeConverged)
        } else if area == observed_area {
            Some(StopReason::AreaMatched)
        } else {
            None
        };
        last_depth = current_depth;
        if let Some(stop) = stop {
            return Ok(DepthSearchOutcome { pose, iterations: trace.len(), stop, trace });
        }
        if area > observed_area {
            low = mid;
        } else {
            high = mid;
        }
    }
    let pose = best.expect("loop runs at least once for a valid config");
    Ok(DepthSearchOutcome { pose, iterations: trace.len(), stop: StopReason::IntervalEmpty, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub pose: Pose,
    pub score: f64,
    pub depths: Vec<f64>,
    pub hypotheses_evaluated: usize,
}

/// Exhaustive registration over `n_depths` evenly spaced depths in
/// `[z_min, z_max]` (just `z_min` when `n_depths == 1`). Returns the best of
/// all `n_depths x grid` hypotheses; ties go to the first.
pub fn register_depth_sweep(
    mesh: &TriangleMesh,
    observation: &Observation,
    n_depths: usize,
    config: &DepthSearchConfig,
    refiner: &dyn Refiner,
    scorer: &dyn Scorer,
) -> Result<SweepOutcome> {
    config.validate()?;
    if n_depths == 0 {
        return Err(Error::InvalidConfig("n_depths must be at least 1".into()));
    }
    let observation = observation.with_depth(None);
    if observation.mask.area() == 0 {
        return Err(Error::EmptyMask);
    }
    let rotations = sample_rotation_grid(config.grid_level);
    let depths: Vec<f64> = if n_depths == 1 {
        vec![config.z_min]
    } else {
        let step = (config.z_max - config.z_min) / (n_depths - 1) as f64;
        (0..n_depths).map(|i| config.z_min + step * i as f64).collect()
    };
    let mut best: Option<Hypothesis> = None;
    let mut evaluated = 0;
    // One batch per depth keeps peak memory at a single grid.
    for &z in &depths {
        let t = translation_at_depth(&observation.mask, &observation.camera, z)?;
        let hyps = make_hypotheses(&rotations, t);
        evaluated += hyps.len();
        let selected = refine_and_select(hyps, &observation, mesh, refiner, scorer)?;
        if best.is_none_or(|b| selected.score > b.score) {
            best = Some(selected);
        }
    }
    let best = best.expect("at least one depth");
    Ok(SweepOutcome { pose: best.pose, score: best.score, depths, hypotheses_evaluated: evaluated })
}

/// Registration with a depth channel: translation from the mask centre and
/// the median masked depth, then the rotation grid is refined and ranked.
pub fn register_with_depth(
    mesh: &TriangleMesh,
    observation: &Observation,
    rotations: &RotationGrid,
    refiner: &dyn Refiner,
    scorer: &dyn Scorer,
) -> Result<Pose> {
    let translation = init_translation_from_depth(observation)?;
    Ok(refine_and_select(make_hypotheses(rotations, translation), observation, mesh, refiner, scorer)?.pose)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaleSearchConfig {
    pub s_min: f64,
    pub s_max: f64,
    /// Relative tolerance on both the scale change and the interval width.
    pub relative_convergence: f64,
    pub max_iterations: usize,
    pub grid_level: u32,
}

impl Default for ScaleSearchConfig {
    fn default() -> Self {
        Self { s_min: 0.1, s_max: 10.0, relative_convergence: 1e-2, max_iterations: 30, grid_level: REGISTRATION_GRID_LEVEL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleOutcome {
    /// Multiplier to apply to the input mesh's scale.
    pub scale: f64,
    pub pose: Pose,
    pub iterations: usize,
    pub stop: StopReason,
    pub trace: Vec<SearchStep>,
}

/// Recovers the scale multiplier of a mesh of unknown size from a frame with
/// valid depth.
///
/// The translation is anchored by the masked depth; each iteration rescales
/// the mesh by the geometric midpoint of `[low, high]`, registers the rotation
/// grid, and compares rendered with observed area. A rendering larger than
/// the observation means the mesh is too big.
pub fn recover_scale(
    mesh: &TriangleMesh,
    observation: &Observation,
    config: &ScaleSearchConfig,
    refiner: &dyn Refiner,
    scorer: &dyn Scorer,
) -> Result<ScaleOutcome> {
    if !(config.s_min > 0.0 && config.s_min < config.s_max && config.relative_convergence > 0.0) {
        return Err(Error::InvalidConfig("need 0 < s_min < s_max and a positive tolerance".into()));
    }
    let observed_area = observation.mask.area();
    if observed_area == 0 {
        return Err(Error::EmptyMask);
    }
    let translation = init_translation_from_depth(observation)?;
    let rotations = sample_rotation_grid(config.grid_level);

    let (mut low, mut high) = (config.s_min, config.s_max);
    let mut last_scale = f64::INFINITY;
    let mut best: Option<(f64, Pose)> = None;
    let mut trace = Vec::new();
    let tol = config.relative_convergence;

    loop {
        if trace.len() == config.max_iterations {
            return Err(Error::NoConvergence {
                best: Box::new(best.map(|b| b.1).expect("at least one iteration")),
                low,
                high,
            });
        }
        let mid = (low * high).sqrt();
        let scaled = mesh.rescaled(mid);
        let selected = refine_and_select(make_hypotheses(&rotations, translation), observation, &scaled, refiner, scorer)?;
        let area = rendered_area(&scaled, &selected.pose, observation);
        best = Some((mid, selected.pose));
        trace.push(SearchStep {
            iteration: trace.len() + 1,
            low,
            high,
            midpoint: mid,
            selected_depth: selected.pose.depth(),
            selected_score: selected.score,
            rendered_area: area,
            observed_area,
        });
        let stop = if ((mid - last_scale) / mid).abs() < tol {
            Some(StopReason::DepthConverged)
        } else if (high - low) / mid < tol {
            Some(StopReason::RangeConverged)
        } else if area == observed_area {
            Some(StopReason::AreaMatched)
        } else {
            None
        };
        last_scale = mid;
        if let Some(stop) = stop {
            return Ok(ScaleOutcome { scale: mid, pose: selected.pose, iterations: trace.len(), stop, trace });
        }
        if area > observed_area {
            high = mid;
        } else {
            low = mid;
        }
    }
}
