use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Level whose grid is used for first-frame registration: 42 icosphere
/// viewpoints x 6 in-plane angles = 252 rotations.
pub const REGISTRATION_GRID_LEVEL: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RotationGrid {
    rotations: Vec<UnitQuaternion<f64>>,
}

impl RotationGrid {
    pub fn new(rotations: Vec<UnitQuaternion<f64>>) -> Self {
        Self { rotations }
    }

    pub fn rotations(&self) -> &[UnitQuaternion<f64>] {
        &self.rotations
    }

    pub fn count(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    /// Angular distance (radians) from `q` to the closest grid element.
    pub fn nearest_distance(&self, q: &UnitQuaternion<f64>) -> f64 {
        self.rotations
            .iter()
            .map(|r| rotation_geodesic(r, q))
            .fold(f64::INFINITY, f64::min)
    }

    /// Monte Carlo estimate of the covering radius (radians): the largest
    /// nearest-element distance over `samples` uniform random rotations.
    pub fn covering_radius_estimate(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples)
            .map(|_| self.nearest_distance(&random_rotation(&mut rng)))
            .fold(0.0, f64::max)
    }
}

/// Geodesic angle between two rotations in radians, in `[0, pi]`.
pub fn rotation_geodesic(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    // atan2 stays accurate for small angles, where acos of the dot product
    // loses half the digits.
    // Relative rotation conj(a) * b, written out so that equal inputs cancel
    // exactly.
    let (av, bv) = (a.imag(), b.imag());
    let w = a.w * b.w + av.dot(&bv);
    let v = b.w * av - a.w * bv + av.cross(&bv);
    2.0 * v.norm().atan2(w.abs())
}

pub fn rotation_geodesic_deg(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    rotation_geodesic(a, b).to_degrees()
}

/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (t2, t3) = (2.0 * PI * u2, 2.0 * PI * u3);
    UnitQuaternion::from_quaternion(Quaternion::new(b * t3.cos(), a * t2.sin(), a * t2.cos(), b * t3.sin()))
}

/// Deterministic view-sphere rotation grid.
///
/// Level 0 is the identity alone. Level `L >= 1` uses the vertices of an
/// icosahedron subdivided `L` times as viewing directions, each combined with
/// `6 L` in-plane rotations about the camera axis.
pub fn sample_rotation_grid(level: u32) -> RotationGrid {
    if level == 0 {
        return RotationGrid::new(vec![UnitQuaternion::identity()]);
    }
    let in_plane = 6 * level as usize;
    let mut rotations = Vec::new();
    for dir in icosphere(level) {
        let look = look_rotation(&dir);
        for k in 0..in_plane {
            let angle = 2.0 * PI * k as f64 / in_plane as f64;
            let spin = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle);
            rotations.push(spin * look);
        }
    }
    RotationGrid::new(rotations)
}

/// Rotation taking the object-frame direction `dir` (object centre towards
/// the camera) onto the camera's `-z` axis.
fn look_rotation(dir: &Vector3<f64>) -> UnitQuaternion<f64> {
    let z = -dir.normalize();
    let helper = if z.z.abs() < 0.9 { Vector3::z() } else { Vector3::y() };
    let x = helper.cross(&z).normalize();
    let y = z.cross(&x);
    let m = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// Unit-sphere vertices of an icosahedron subdivided `subdivisions` times
/// (12, 42, 162, ... points).
fn icosphere(subdivisions: u32) -> Vec<Vector3<f64>> {
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    verts
}

/// `count` rotations within `max_angle` (radians) of `center`.
///
/// Element 0 is `center`; the rest perturb it by rotation vectors drawn from
/// a Halton sequence mapped uniformly into the ball of radius `max_angle`.
/// `seed` offsets the sequence.
pub fn sample_rotations_near(
    center: &UnitQuaternion<f64>,
    count: usize,
    max_angle: f64,
    seed: u64,
) -> RotationGrid {
    assert!(count >= 1, "count must be at least 1");
    assert!(max_angle > 0.0 && max_angle <= PI, "max_angle must be in (0, pi]");
    let mut rotations = Vec::with_capacity(count);
    rotations.push(*center);
    for i in 1..count as u64 {
        let index = i + (seed % (1 << 20));
        let cos_polar = 1.0 - 2.0 * radical_inverse(index, 2);
        let azimuth = 2.0 * PI * radical_inverse(index, 3);
        let radius = max_angle * radical_inverse(index, 5).cbrt();
        let sin_polar = (1.0 - cos_polar * cos_polar).max(0.0).sqrt();
        let axis = Vector3::new(sin_polar * azimuth.cos(), sin_polar * azimuth.sin(), cos_polar);
        rotations.push(UnitQuaternion::from_scaled_axis(axis * radius) * center);
    }
    RotationGrid::new(rotations)
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}
