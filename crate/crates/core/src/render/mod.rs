//! Deterministic software rasterizer for silhouettes and z-buffer depth.
//!
//! Pixels are sampled at integer coordinates, which is where the pinhole
//! model puts pixel centres. Ties on shared edges follow a top-left style
//! ownership rule so that a closed surface covers every pixel exactly once.
//! Back faces are culled only for closed meshes entirely in front of the
//! near plane, where the nearest surface along a ray always faces the
//! camera. Triangles crossing the near plane are clipped.

mod image;
mod io;

pub use image::{mask_area, mask_centroid, median_masked_depth, DepthImage, MaskImage, Roi};
pub use io::{read_depth_raw, read_pgm, write_depth_raw, write_pgm};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{CameraModel, Pose, TriangleMesh, Winding};

/// Near clipping plane in meters.
pub const NEAR_PLANE: f64 = 0.01;

#[derive(Clone, Copy, Debug)]
struct ScreenVertex {
    x: f64,
    y: f64,
    inv_z: f64,
}

/// Renders the mesh silhouette and its z-buffer depth at `pose`.
pub fn render(mesh: &TriangleMesh, pose: &Pose, camera: &CameraModel) -> Result<(MaskImage, DepthImage)> {
    let triangles = project(mesh, pose, camera);
    let roi = covered_roi(&triangles, camera).ok_or(Error::EmptyRender)?;
    let mut inv_depth = vec![0.0f64; roi.len()];
    for_each_run(&triangles, roi, |base, len, first, step| {
        for (k, slot) in inv_depth[base..base + len].iter_mut().enumerate() {
            *slot = max(*slot, first + step * k as f64);
        }
    });
    let mut bits = Vec::with_capacity(inv_depth.len());
    let mut any = false;
    for v in inv_depth.iter_mut() {
        let set = *v > 0.0;
        any |= set;
        bits.push(set);
        if set {
            *v = 1.0 / *v;
        }
    }
    if !any {
        return Err(Error::EmptyRender);
    }
    let (w, h) = (camera.width, camera.height);
    Ok((MaskImage::from_roi(w, h, roi, bits), DepthImage::from_roi(w, h, roi, inv_depth)))
}

/// Silhouette only; the same pixels as [`render`] without the z-buffer.
pub fn render_mask(mesh: &TriangleMesh, pose: &Pose, camera: &CameraModel) -> Result<MaskImage> {
    let triangles = project(mesh, pose, camera);
    let roi = covered_roi(&triangles, camera).ok_or(Error::EmptyRender)?;
    let mut bits = vec![false; roi.len()];
    let mut any = false;
    for_each_run(&triangles, roi, |base, len, _, _| {
        bits[base..base + len].fill(true);
        any = true;
    });
    if !any {
        return Err(Error::EmptyRender);
    }
    Ok(MaskImage::from_roi(camera.width, camera.height, roi, bits))
}

fn project(mesh: &TriangleMesh, pose: &Pose, camera: &CameraModel) -> Vec<[ScreenVertex; 3]> {
    let cam_vertices: Vec<Vector3<f64>> = mesh.vertices().map(|v| pose.transform_point(&v)).collect();
    let to_screen = |p: &Vector3<f64>| {
        let inv_z = 1.0 / p.z;
        ScreenVertex { x: camera.fx * p.x * inv_z + camera.cx, y: camera.fy * p.y * inv_z + camera.cy, inv_z }
    };
    let mut triangles: Vec<[ScreenVertex; 3]> = Vec::with_capacity(mesh.faces().len());
    // Clipping opens the surface, and a camera inside it sees back faces.
    let clips = cam_vertices.iter().any(|v| v.z < NEAR_PLANE);
    if clips {
        let mut clipped = [Vector3::zeros(); 4];
        for f in mesh.faces() {
            let tri = [cam_vertices[f[0] as usize], cam_vertices[f[1] as usize], cam_vertices[f[2] as usize]];
            let n = clip_near(&tri, &mut clipped);
            if n < 3 {
                continue;
            }
            let s = clipped.map(|p| to_screen(&p));
            for k in 1..n - 1 {
                triangles.push([s[0], s[k], s[k + 1]]);
            }
        }
        return triangles;
    }
    let away = match mesh.winding() {
        Some(Winding::Outward) => 1.0,
        Some(Winding::Inward) => -1.0,
        None => 0.0,
    };
    let screen: Vec<ScreenVertex> = cam_vertices.iter().map(to_screen).collect();
    for f in mesh.faces() {
        let [i, j, k] = f.map(|i| i as usize);
        let (a, b, c) = (&cam_vertices[i], &cam_vertices[j], &cam_vertices[k]);
        if away * (b - a).cross(&(c - a)).dot(a) > 0.0 {
            continue;
        }
        triangles.push([screen[i], screen[j], screen[k]]);
    }
    triangles
}

/// Clips a camera-space triangle to `z >= NEAR_PLANE`; returns the vertex count
/// of the resulting polygon (0, 3 or 4).
fn clip_near(tri: &[Vector3<f64>; 3], out: &mut [Vector3<f64>; 4]) -> usize {
    let inside = |p: &Vector3<f64>| p.z >= NEAR_PLANE;
    if tri.iter().all(inside) {
        out[..3].copy_from_slice(tri);
        return 3;
    }
    let mut n = 0;
    for i in 0..3 {
        let (p, q) = (&tri[i], &tri[(i + 1) % 3]);
        if inside(p) {
            out[n] = *p;
            n += 1;
        }
        if inside(p) != inside(q) {
            let t = (NEAR_PLANE - p.z) / (q.z - p.z);
            let mut r = p + (q - p) * t;
            r.z = NEAR_PLANE;
            out[n] = r;
            n += 1;
        }
    }
    n
}

/// Both an edge's analytic crossing and the exact test on a pixel err by a
/// few ulps of `coordinate^2 / |dy|` pixels; this is a hundredfold margin.
const CROSS_ERROR: f64 = 1e-12;

/// Edges whose crossing is less certain than this (near-horizontal ones) are
/// left to the exact test.
const MAX_CROSS_SLACK: f64 = 0.25;

// `f64::floor` and `f64::ceil` compile to libm calls on baseline x86-64, and
// `f64::min`/`max` carry NaN handling the finite inputs here never need.
#[inline]
fn floor(v: f64) -> f64 {
    let t = v as i64 as f64;
    if t > v { t - 1.0 } else { t }
}

#[inline]
fn ceil(v: f64) -> f64 {
    let t = v as i64 as f64;
    if t < v { t + 1.0 } else { t }
}

#[inline]
fn min(a: f64, b: f64) -> f64 {
    if b < a { b } else { a }
}

#[inline]
fn max(a: f64, b: f64) -> f64 {
    if b > a { b } else { a }
}

#[inline]
fn edge(a: &ScreenVertex, b: &ScreenVertex, px: f64, py: f64) -> f64 {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

/// Whether a pixel exactly on the edge `a -> b` belongs to the triangle.
/// Antisymmetric in the edge direction, so exactly one of two triangles
/// sharing an edge owns it.
#[inline]
fn owns_edge(a: &ScreenVertex, b: &ScreenVertex) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    (dy > 0.0) | ((dy == 0.0) & (dx < 0.0))
}

/// Pixel box covering every projected vertex, clamped to the image.
fn covered_roi(triangles: &[[ScreenVertex; 3]], camera: &CameraModel) -> Option<Roi> {
    let (w, h) = (camera.width, camera.height);
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for t in triangles {
        for v in t {
            min_x = min_x.min(v.x);
            min_y = min_y.min(v.y);
            max_x = max_x.max(v.x);
            max_y = max_y.max(v.y);
        }
    }
    let x0 = min_x.ceil().max(0.0);
    let y0 = min_y.ceil().max(0.0);
    let x1 = max_x.floor().min(w as f64 - 1.0);
    let y1 = max_y.floor().min(h as f64 - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }
    Some(Roi::new(x0 as u32, y0 as u32, (x1 - x0) as u32 + 1, (y1 - y0) as u32 + 1))
}

/// Calls `f(start, len, inv_z, inv_z_step)` for every covered run of pixels,
/// with `start` indexing the row-major `roi` buffer.
fn for_each_run(triangles: &[[ScreenVertex; 3]], roi: Roi, mut f: impl FnMut(usize, usize, f64, f64)) {
    let (x0, y0) = (roi.x0 as f64, roi.y0 as f64);
    let x1 = x0 + roi.width as f64 - 1.0;
    let y1 = y0 + roi.height as f64 - 1.0;
    for t in triangles {
        let [a, mut b, mut c] = *t;
        let area = edge(&a, &b, c.x, c.y);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        if area < 0.0 {
            std::mem::swap(&mut b, &mut c);
        }
        let inv_area = 1.0 / area.abs();
        let tx0 = max(ceil(min(min(a.x, b.x), c.x)), x0);
        let ty0 = max(ceil(min(min(a.y, b.y), c.y)), y0);
        let tx1 = min(floor(max(max(a.x, b.x), c.x)), x1);
        let ty1 = min(floor(max(max(a.y, b.y), c.y)), y1);
        if tx0 > tx1 || ty0 > ty1 {
            continue;
        }
        let (own_a, own_b, own_c) = (owns_edge(&b, &c), owns_edge(&c, &a), owns_edge(&a, &b));
        // Edges whose test rises with x bound a row's run from the left, the
        // others from the right. Each carries the uncertainty of its crossing.
        let mag = max(
            max(max(a.x.abs(), a.y.abs()), max(b.x.abs(), b.y.abs())),
            max(max(c.x.abs(), c.y.abs()), max(x1, y1)),
        );
        let mut left = [(&a, &a, 0.0, 0.0); 2];
        let mut right = [(&a, &a, 0.0, 0.0); 2];
        let (mut n_left, mut n_right) = (0, 0);
        let mut all_bounded = true;
        for (p, q) in [(&b, &c), (&c, &a), (&a, &b)] {
            let dy = q.y - p.y;
            let slack = CROSS_ERROR * (1.0 + mag * mag) / dy.abs();
            if !(slack <= MAX_CROSS_SLACK) {
                all_bounded = false;
            } else if dy < 0.0 {
                left[n_left] = (p, q, 1.0 / dy, slack);
                n_left += 1;
            } else {
                right[n_right] = (p, q, 1.0 / dy, slack);
                n_right += 1;
            }
        }
        // Perspective-correct: 1/z is affine in screen space.
        let inv_z_at = |fx: f64, fy: f64| {
            (edge(&b, &c, fx, fy) * a.inv_z + edge(&c, &a, fx, fy) * b.inv_z + edge(&a, &b, fx, fy) * c.inv_z) * inv_area
        };
        let inv_z_dx = (-(c.y - b.y) * a.inv_z - (a.y - c.y) * b.inv_z - (b.y - a.y) * c.inv_z) * inv_area;
        let inside = |fx: f64, fy: f64| {
            let wa = edge(&b, &c, fx, fy);
            let wb = edge(&c, &a, fx, fy);
            let wc = edge(&a, &b, fx, fy);
            // Non-short-circuit operators keep this branch-free.
            ((wa > 0.0) | ((wa == 0.0) & own_a)) & ((wb > 0.0) | ((wb == 0.0) & own_b)) & ((wc > 0.0) | ((wc == 0.0) & own_c))
        };
        for py in ty0 as u32..=ty1 as u32 {
            let fy = py as f64;
            let row = (py - roi.y0) as usize * roi.width as usize;
            // Every edge test is monotone in x, so the covered pixels of a row
            // form one run. `lo..=hi` holds the run; `lo_in..=hi_in` is certain
            // to pass every edge test, so only the ends need the exact test.
            let (mut lo, mut hi, mut lo_in, mut hi_in) = (tx0, tx1, tx0, tx1);
            // `cross` is where the edge test changes sign on this row.
            for &(p, q, inv_dy, slack) in &left[..n_left] {
                let cross = edge(p, q, 0.0, fy) * inv_dy;
                lo = max(lo, ceil(cross - slack));
                lo_in = max(lo_in, ceil(cross + slack));
            }
            for &(p, q, inv_dy, slack) in &right[..n_right] {
                let cross = edge(p, q, 0.0, fy) * inv_dy;
                hi = min(hi, floor(cross + slack));
                hi_in = min(hi_in, floor(cross - slack));
            }
            if all_bounded && lo_in <= hi_in {
                while lo < lo_in && !inside(lo, fy) {
                    lo += 1.0;
                }
                while hi > hi_in && !inside(hi, fy) {
                    hi -= 1.0;
                }
            } else {
                while lo <= hi && !inside(lo, fy) {
                    lo += 1.0;
                }
                while hi >= lo && !inside(hi, fy) {
                    hi -= 1.0;
                }
            }
            if lo > hi {
                continue;
            }
            let base = row + (lo as u32 - roi.x0) as usize;
            f(base, (hi - lo) as usize + 1, inv_z_at(lo, fy), inv_z_dx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn cam() -> CameraModel {
        CameraModel::vga(600.0)
    }

    #[test]
    fn unit_cube_front_face_area() {
        // Front face at z = 2.5 spans 600 * 1 / 2.5 = 240 px = half the image height.
        let cube = TriangleMesh::cuboid(Vector3::new(1.0, 1.0, 1.0)).unwrap();
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 3.0));
        let (mask, depth) = render(&cube, &pose, &cam()).unwrap();
        let side = 240.0f64;
        let expected = side * side;
        let tolerance = 4.0 * (side + 1.0);
        assert!((mask.area() as f64 - expected).abs() <= tolerance, "area {}", mask.area());
        assert_eq!(mask.area(), 240 * 240);
        assert!((depth.get(320, 240) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn outside_frustum_is_empty() {
        let cube = TriangleMesh::cuboid(Vector3::new(0.1, 0.1, 0.1)).unwrap();
        for t in [Vector3::new(5.0, 0.0, 1.0), Vector3::new(0.0, 0.0, -1.0), Vector3::new(0.0, -9.0, 1.0)] {
            let r = render(&cube, &Pose::from_translation(t), &cam());
            assert!(matches!(r, Err(Error::EmptyRender)));
        }
    }

    #[test]
    fn mask_only_render_matches() {
        let mesh = TriangleMesh::notched_block(0.16).unwrap();
        for (i, z) in [0.3, 0.7, 1.9].into_iter().enumerate() {
            let pose = Pose::new(UnitQuaternion::from_euler_angles(0.3 * i as f64, 0.6, -0.2), Vector3::new(0.05, -0.01, z));
            let (mask, _) = render(&mesh, &pose, &cam()).unwrap();
            assert_eq!(render_mask(&mesh, &pose, &cam()).unwrap(), mask);
        }
        let behind = Pose::from_translation(Vector3::new(0.0, 0.0, -1.0));
        assert!(matches!(render_mask(&mesh, &behind, &cam()), Err(Error::EmptyRender)));
    }

    #[test]
    fn deterministic() {
        let mesh = TriangleMesh::notched_block(0.16).unwrap();
        let pose = Pose::new(UnitQuaternion::from_euler_angles(0.3, 0.6, -0.2), Vector3::new(0.02, -0.01, 0.7));
        let a = render(&mesh, &pose, &cam()).unwrap();
        let b = render(&mesh, &pose, &cam()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sphere_area_scales_with_inverse_square_depth() {
        let sphere = TriangleMesh::uv_sphere(0.05, 48, 64).unwrap();
        let near = render(&sphere, &Pose::from_translation(Vector3::new(0.0, 0.0, 0.4)), &cam()).unwrap().0;
        let far = render(&sphere, &Pose::from_translation(Vector3::new(0.0, 0.0, 0.8)), &cam()).unwrap().0;
        let ratio = near.area() as f64 / far.area() as f64;
        assert!((ratio - 4.0).abs() / 4.0 < 0.03, "ratio {ratio}");
    }

    #[test]
    fn centred_sphere_centroid_is_principal_point() {
        let sphere = TriangleMesh::uv_sphere(0.05, 48, 64).unwrap();
        let (mask, _) = render(&sphere, &Pose::from_translation(Vector3::new(0.0, 0.0, 0.5)), &cam()).unwrap();
        let c = mask.centroid().unwrap();
        assert!((c.x - 320.0).abs() <= 0.5 && (c.y - 240.0).abs() <= 0.5, "{c:?}");
    }

    #[test]
    fn sphere_median_depth_is_bounded() {
        let r = 0.05;
        let z = 0.6;
        let sphere = TriangleMesh::uv_sphere(r, 48, 64).unwrap();
        let (mask, depth) = render(&sphere, &Pose::from_translation(Vector3::new(0.0, 0.0, z)), &cam()).unwrap();
        let m = median_masked_depth(&depth, &mask).unwrap();
        assert!(m >= z - r && m <= z, "median {m}");
    }

    /// Every pixel of the image tested on its own, with the same tie rule.
    fn brute_force(t: &[ScreenVertex; 3], w: u32, h: u32) -> Vec<bool> {
        let [a, mut b, mut c] = *t;
        if edge(&a, &b, c.x, c.y) < 0.0 {
            std::mem::swap(&mut b, &mut c);
        }
        let test = |p: &ScreenVertex, q: &ScreenVertex, x: f64, y: f64| {
            let e = edge(p, q, x, y);
            e > 0.0 || (e == 0.0 && owns_edge(p, q))
        };
        let mut out = vec![false; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f64, y as f64);
                out[(y * w + x) as usize] = test(&b, &c, fx, fy) && test(&c, &a, fx, fy) && test(&a, &b, fx, fy);
            }
        }
        out
    }

    #[test]
    fn runs_match_per_pixel_tests() {
        use rand::{Rng, SeedableRng};
        let (w, h) = (64u32, 48u32);
        let roi = Roi::new(0, 0, w, h);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let v = |x: f64, y: f64| ScreenVertex { x, y, inv_z: 1.0 };
        for i in 0..3000 {
            let mut t = [(); 3].map(|_| v(rng.gen_range(-10.0..74.0), rng.gen_range(-10.0..58.0)));
            match i % 5 {
                // Integer vertices put pixels exactly on edges.
                1 => t = t.map(|p| v(p.x.round(), p.y.round())),
                // Nearly horizontal edge.
                2 => t[1].y = t[0].y + rng.gen_range(-1e-9..1e-9),
                // A vertex far off screen.
                3 => t[2] = v(rng.gen_range(-1e7..1e7), rng.gen_range(-1e7..1e7)),
                _ => {}
            }
            let mut got = vec![false; (w * h) as usize];
            for_each_run(&[t], roi, |base, len, _, _| got[base..base + len].fill(true));
            assert_eq!(got, brute_force(&t, w, h), "triangle {t:?}");
        }
    }

    #[test]
    fn culling_closed_meshes_changes_nothing() {
        for mesh in [TriangleMesh::notched_block(0.1).unwrap(), TriangleMesh::uv_sphere(0.05, 16, 32).unwrap()] {
            // A repeated face makes the mesh count as open, so nothing is culled.
            let verts: Vec<_> = mesh.vertices().collect();
            let mut faces = mesh.faces().to_vec();
            faces.push(faces[0]);
            let open = TriangleMesh::new(verts, faces).unwrap();
            assert!(open.winding().is_none());
            for (k, rot) in [(0.3, -0.2, 0.9), (2.0, 1.0, -0.4), (-1.2, 0.5, 3.0)].into_iter().enumerate() {
                let pose = Pose::new(UnitQuaternion::from_euler_angles(rot.0, rot.1, rot.2), Vector3::new(0.02 * k as f64, -0.01, 0.5));
                let (m1, d1) = render(&mesh, &pose, &cam()).unwrap();
                let (m2, d2) = render(&open, &pose, &cam()).unwrap();
                assert_eq!(m1.area(), m2.area());
                for (x, y) in m2.set_pixels() {
                    assert!(m1.get(x, y));
                    assert!((d1.get(x, y) - d2.get(x, y)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn masked_depth_respects_near_plane() {
        // Box straddling the near plane gets clipped, not dropped.
        let cube = TriangleMesh::cuboid(Vector3::new(0.2, 0.2, 0.2)).unwrap();
        let (mask, depth) = render(&cube, &Pose::from_translation(Vector3::new(0.0, 0.0, 0.05)), &cam()).unwrap();
        assert!(mask.area() > 0);
        for (x, y) in mask.set_pixels() {
            assert!(depth.get(x, y) >= NEAR_PLANE - 1e-12);
        }
    }

    #[test]
    fn shared_edges_are_covered_once() {
        // Two triangles of a quad: the union must equal the quad with no gap.
        let quad = TriangleMesh::new(
            vec![
                Vector3::new(-0.1, -0.1, 0.0),
                Vector3::new(0.1, -0.1, 0.0),
                Vector3::new(0.1, 0.1, 0.0),
                Vector3::new(-0.1, 0.1, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let (mask, _) = render(&quad, &Pose::from_translation(Vector3::new(0.0, 0.0, 0.6)), &cam()).unwrap();
        // 0.2 m at 0.6 m and f=600 spans exactly 200 px.
        assert_eq!(mask.area(), 200 * 200);
    }
}
