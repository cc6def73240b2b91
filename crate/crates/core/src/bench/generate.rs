//! Synthetic observations with ground truth. The mask provider returns the
//! visible object mask with optional erosion and pixel dropout, standing in
//! for a learned 2D mask tracker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{Occluder, Scenario};
use crate::error::{Error, Result};
use crate::geom::{Pose, TriangleMesh};
use crate::hypo::Observation;
use crate::render::{render, DepthImage, MaskImage};

/// Ground truth for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub pose: Pose,
    /// Depth of everything in view, occluders included.
    pub scene_depth: DepthImage,
    /// Object pixels not hidden by an occluder, before mask noise.
    pub visible_mask: MaskImage,
}

/// Renders frames of one scenario; meshes are built once.
pub struct SceneGenerator<'a> {
    scenario: &'a Scenario,
    mesh: TriangleMesh,
    poses: Vec<Pose>,
    occluder_meshes: Vec<Option<TriangleMesh>>,
}

impl<'a> SceneGenerator<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        scenario.validate()?;
        let base = scenario.base_dir.as_deref();
        let occluder_meshes = scenario
            .occlusions
            .iter()
            .map(|o| match &o.occluder {
                Occluder::Mesh { mesh, .. } => mesh.build(base).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<_>>()?;
        Ok(Self { scenario, mesh: scenario.true_mesh()?, poses: scenario.trajectory.poses(), occluder_meshes })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn observation(&self, frame: usize) -> Result<(Observation, GroundTruthFrame)> {
        let sc = self.scenario;
        let cam = sc.camera;
        let pose = *self
            .poses
            .get(frame)
            .ok_or_else(|| Error::InvalidConfig(format!("frame {frame} outside trajectory of {}", self.poses.len())))?;
        let (obj_mask, obj_depth) = match render(&self.mesh, &pose, &cam) {
            Ok(r) => r,
            Err(Error::EmptyRender) => (MaskImage::empty(cam.width, cam.height), DepthImage::zeros(cam.width, cam.height)),
            Err(e) => return Err(e),
        };

        let mut occluders: Vec<Box<dyn Fn(u32, u32) -> f64>> = Vec::new();
        for (o, mesh) in sc.occlusions.iter().zip(&self.occluder_meshes) {
            if !(o.start..o.end).contains(&frame) {
                continue;
            }
            match (&o.occluder, mesh) {
                (Occluder::Full { depth }, _) => {
                    let d = *depth;
                    occluders.push(Box::new(move |_, _| d));
                }
                (&Occluder::Rect { x0, y0, x1, y1, depth }, _) => {
                    occluders.push(Box::new(move |x, y| if x >= x0 && x < x1 && y >= y0 && y < y1 { depth } else { 0.0 }));
                }
                (Occluder::Mesh { pose, .. }, Some(m)) => {
                    if let Ok((_, d)) = render(m, pose, &cam) {
                        occluders.push(Box::new(move |x, y| d.get(x, y)));
                    }
                }
                (Occluder::Mesh { .. }, None) => unreachable!("occluder meshes are built in new"),
            }
        }

        let (visible_mask, scene_depth) = if occluders.is_empty() {
            (obj_mask, obj_depth)
        } else {
            let nearest_occluder = |x, y| {
                occluders.iter().map(|f| f(x, y)).filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min)
            };
            let visible = obj_mask.filter(|x, y| obj_depth.get(x, y) < nearest_occluder(x, y));
            let mut values = Vec::with_capacity(cam.pixel_count());
            for y in 0..cam.height {
                for x in 0..cam.width {
                    let o = obj_depth.get(x, y);
                    let d = nearest_occluder(x, y).min(if o > 0.0 { o } else { f64::INFINITY });
                    values.push(if d.is_finite() { d } else { 0.0 });
                }
            }
            (visible, DepthImage::from_values(cam.width, cam.height, values))
        };

        let mask = self.apply_noise(&visible_mask, frame);
        let depth = if sc.depth.has_depth(frame) { scene_depth.clone() } else { DepthImage::zeros(cam.width, cam.height) };
        let observation = Observation::new(mask, Some(depth), cam);
        Ok((observation, GroundTruthFrame { pose, scene_depth, visible_mask }))
    }

    fn apply_noise(&self, mask: &MaskImage, frame: usize) -> MaskImage {
        let noise = self.scenario.mask_noise;
        let mut out = mask.clone();
        if noise.erosion > 0 {
            let r = noise.erosion as i64;
            let (w, h) = (mask.width() as i64, mask.height() as i64);
            out = out.filter(|x, y| {
                (-r..=r).all(|dy| {
                    (-r..=r).all(|dx| {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        nx >= 0 && ny >= 0 && nx < w && ny < h && mask.get(nx as u32, ny as u32)
                    })
                })
            });
        }
        if noise.dropout > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.scenario.seed);
            rng.set_stream(frame as u64);
            out = out.filter(|_, _| !rng.gen_bool(noise.dropout));
        }
        out
    }
}

/// Convenience wrapper building a generator for a single frame.
pub fn generate_observation(scenario: &Scenario, frame: usize) -> Result<(Observation, GroundTruthFrame)> {
    SceneGenerator::new(scenario)?.observation(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::scenario::{DepthAvailability, MaskNoise, MeshSpec, Occlusion, Trajectory};
    use crate::geom::CameraModel;
    use nalgebra::{UnitQuaternion, Vector3};

    fn scenario() -> Scenario {
        let start = Pose::new(UnitQuaternion::from_euler_angles(0.3, 0.2, 0.1), Vector3::new(0.0, 0.0, 0.8));
        Scenario {
            name: "t".into(),
            mesh: MeshSpec::NotchedBlock { size: 0.2 },
            model_scale: 1.0,
            scale_known: true,
            camera: CameraModel::vga(600.0),
            trajectory: Trajectory::Explicit { poses: vec![start; 4] },
            occlusions: vec![],
            mask_noise: MaskNoise::default(),
            depth: DepthAvailability::FirstFrameOnly,
            symmetries: Default::default(),
            seed: 3,
            pipeline: Default::default(),
            base_dir: None,
        }
    }

    #[test]
    fn noise_free_mask_is_the_rendering() {
        let s = scenario();
        let (obs, gt) = generate_observation(&s, 0).unwrap();
        let (mask, depth) = render(&s.true_mesh().unwrap(), &gt.pose, &s.camera).unwrap();
        assert!(obs.mask.same_pixels(&mask));
        assert_eq!(obs.depth.as_ref().unwrap(), &depth);
        let (obs1, _) = generate_observation(&s, 1).unwrap();
        assert!(obs1.depth.unwrap().is_all_zero());
    }

    #[test]
    fn full_occlusion_empties_the_mask() {
        let mut s = scenario();
        s.occlusions.push(Occlusion { start: 1, end: 3, occluder: Occluder::Full { depth: 0.3 } });
        let g = SceneGenerator::new(&s).unwrap();
        let (obs, gt) = g.observation(1).unwrap();
        assert_eq!(obs.mask.area(), 0);
        assert_eq!(gt.scene_depth.get(5, 5), 0.3);
        assert_eq!(g.observation(3).unwrap().0.mask.area(), g.observation(0).unwrap().0.mask.area());
    }

    #[test]
    fn rect_occluder_hides_left_half() {
        let mut s = scenario();
        s.occlusions.push(Occlusion { start: 0, end: 1, occluder: Occluder::Rect { x0: 0, y0: 0, x1: 320, y1: 480, depth: 0.5 } });
        let (obs, gt) = generate_observation(&s, 0).unwrap();
        assert!(obs.mask.set_pixels().all(|(x, _)| x >= 320));
        assert!(obs.mask.area() > 0);
        assert_eq!(gt.scene_depth.get(10, 10), 0.5);
        // An occluder behind the object hides nothing.
        s.occlusions[0].occluder = Occluder::Rect { x0: 0, y0: 0, x1: 640, y1: 480, depth: 5.0 };
        let (obs2, _) = generate_observation(&s, 0).unwrap();
        assert_eq!(obs2.mask.area(), generate_observation(&scenario(), 0).unwrap().0.mask.area());
    }

    #[test]
    fn dropout_matches_binomial_mean() {
        let p = 0.1;
        let mut s = scenario();
        s.mask_noise.dropout = p;
        let true_area = generate_observation(&scenario(), 0).unwrap().0.mask.area() as f64;
        let n = 100;
        let mut total = 0.0;
        for seed in 0..n {
            s.seed = seed;
            let area = generate_observation(&s, 0).unwrap().0.mask.area() as f64;
            let sigma = (true_area * p * (1.0 - p)).sqrt();
            assert!((area - (1.0 - p) * true_area).abs() < 5.0 * sigma);
            total += area;
        }
        let sigma_mean = (true_area * p * (1.0 - p) / n as f64).sqrt();
        assert!((total / n as f64 - (1.0 - p) * true_area).abs() < 3.0 * sigma_mean);
    }

    #[test]
    fn erosion_shrinks_and_is_deterministic() {
        let mut s = scenario();
        s.mask_noise = MaskNoise { dropout: 0.2, erosion: 2 };
        let a = generate_observation(&s, 2).unwrap().0.mask;
        let b = generate_observation(&s, 2).unwrap().0.mask;
        assert!(a.same_pixels(&b));
        let clean = generate_observation(&scenario(), 2).unwrap().0.mask;
        assert!(a.area() < clean.area());
        assert!(a.set_pixels().all(|(x, y)| clean.get(x, y)));
    }

    #[test]
    fn frame_out_of_range() {
        assert!(generate_observation(&scenario(), 4).is_err());
    }
}
