use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Triangle soup in the object frame with a uniform scale factor.
///
/// `vertices` are stored unscaled; every accessor that returns geometry
/// applies `scale`. The diameter (max pairwise vertex distance) is cached for
/// the unscaled vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[u32; 3]>,
    scale: f64,
    base_diameter: f64,
    winding: Option<Winding>,
}

/// Face orientation of a closed mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winding {
    /// Counter-clockwise seen from outside; normals point out.
    Outward,
    Inward,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no vertices or no faces".into()));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let n = vertices.len() as u32;
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidMesh(format!("face {f:?} indexes past {n} vertices")));
        }
        let base_diameter = max_pairwise_distance(&vertices);
        if base_diameter <= 0.0 {
            return Err(Error::InvalidMesh("mesh has zero extent".into()));
        }
        let winding = closed_winding(&vertices, &faces);
        Ok(Self { vertices, faces, scale: 1.0, base_diameter, winding })
    }

    /// `Some` when every edge is shared by exactly two faces that traverse it
    /// in opposite directions, so the surface bounds a volume.
    pub fn winding(&self) -> Option<Winding> {
        self.winding
    }

    /// Same geometry with the absolute scale set to `scale`.
    pub fn with_scale(&self, scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite(), "scale must be positive, got {scale}");
        Self { scale, ..self.clone() }
    }

    /// Same geometry with the current scale multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        self.with_scale(self.scale * factor)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn diameter(&self) -> f64 {
        self.scale * self.base_diameter
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn vertex(&self, i: usize) -> Vector3<f64> {
        self.vertices[i] * self.scale
    }

    pub fn vertices(&self) -> impl ExactSizeIterator<Item = Vector3<f64>> + '_ {
        self.vertices.iter().map(move |v| v * self.scale)
    }

    /// UV sphere centred at the origin.
    pub fn uv_sphere(radius: f64, rings: u32, segments: u32) -> Result<Self> {
        if rings < 2 || segments < 3 || radius <= 0.0 {
            return Err(Error::InvalidMesh("sphere needs rings >= 2, segments >= 3, radius > 0".into()));
        }
        let mut vertices = vec![Vector3::new(0.0, 0.0, radius)];
        for i in 1..rings {
            let theta = PI * i as f64 / rings as f64;
            for j in 0..segments {
                let phi = 2.0 * PI * j as f64 / segments as f64;
                vertices.push(radius * Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
            }
        }
        vertices.push(Vector3::new(0.0, 0.0, -radius));
        let bottom = vertices.len() as u32 - 1;
        let ring = |i: u32, j: u32| 1 + (i - 1) * segments + j % segments;

        let mut faces = Vec::new();
        for j in 0..segments {
            faces.push([0, ring(1, j), ring(1, j + 1)]);
            faces.push([bottom, ring(rings - 1, j + 1), ring(rings - 1, j)]);
        }
        for i in 1..rings - 1 {
            for j in 0..segments {
                let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
                faces.push([a, c, b]);
                faces.push([b, c, d]);
            }
        }
        Self::new(vertices, faces)
    }

    /// Axis-aligned box centred at the origin with the given edge lengths.
    pub fn cuboid(size: Vector3<f64>) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        push_box(&mut vertices, &mut faces, -size / 2.0, size / 2.0);
        Self::new(vertices, faces)
    }

    /// Asymmetric test object: an L-shaped block (a box with one corner
    /// notched out) carrying an off-centre pyramid on one face. It has no
    /// proper rotational symmetry. Centred on its bounding box; `size` is the
    /// long edge in meters.
    pub fn notched_block(size: f64) -> Result<Self> {
        let s = size / 0.16;
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        push_box(
            &mut vertices,
            &mut faces,
            Vector3::new(-0.08, -0.05, -0.03) * s,
            Vector3::new(0.08, 0.0, 0.03) * s,
        );
        push_box(
            &mut vertices,
            &mut faces,
            Vector3::new(-0.08, 0.0, -0.03) * s,
            Vector3::new(0.02, 0.05, 0.03) * s,
        );
        // Pyramid on the +z face.
        let base = vertices.len() as u32;
        let (cx, cy, h) = (-0.045 * s, -0.02 * s, 0.03 * s);
        let r = 0.025 * s;
        for (dx, dy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            vertices.push(Vector3::new(cx + dx * r, cy + dy * r, 0.03 * s));
        }
        vertices.push(Vector3::new(cx, cy, 0.03 * s + h));
        for k in 0..4 {
            faces.push([base + k, base + (k + 1) % 4, base + 4]);
        }
        faces.push([base, base + 2, base + 1]);
        faces.push([base, base + 3, base + 2]);

        let (lo, hi) = bounds(&vertices);
        let centre = (lo + hi) / 2.0;
        for v in &mut vertices {
            *v -= centre;
        }
        Self::new(vertices, faces)
    }

    /// Parses the OBJ subset `v x y z` / `f i j k` (1-based, triangles).
    /// Face tokens may carry `/vt/vn` suffixes, which are ignored; any other
    /// line is skipped.
    pub fn from_obj_str(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let mut tokens = line.split_whitespace();
            let bad = |message: String| Error::ObjParse { line: line_no, message };
            match tokens.next() {
                Some("v") => {
                    let coords: Vec<f64> = tokens
                        .take(3)
                        .map(|t| t.parse::<f64>().map_err(|e| bad(format!("{t:?}: {e}"))))
                        .collect::<Result<_>>()?;
                    if coords.len() != 3 {
                        return Err(bad("vertex needs three coordinates".into()));
                    }
                    vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = tokens
                        .map(|t| {
                            let head = t.split('/').next().unwrap_or(t);
                            match head.parse::<u32>() {
                                Ok(i) if i >= 1 => Ok(i - 1),
                                _ => Err(bad(format!("bad face index {t:?}"))),
                            }
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() != 3 {
                        return Err(bad(format!("only triangles are supported, got {} indices", idx.len())));
                    }
                    faces.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        Self::new(vertices, faces)
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_obj_str(&text).map_err(|e| match e {
            Error::ObjParse { line, message } => Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {line}: {message}"),
            },
            other => other,
        })
    }

    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        for v in self.vertices() {
            out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for f in &self.faces {
            out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        out
    }
}

fn push_box(vertices: &mut Vec<Vector3<f64>>, faces: &mut Vec<[u32; 3]>, lo: Vector3<f64>, hi: Vector3<f64>) {
    let base = vertices.len() as u32;
    for k in 0..8u32 {
        vertices.push(Vector3::new(
            if k & 1 == 0 { lo.x } else { hi.x },
            if k & 2 == 0 { lo.y } else { hi.y },
            if k & 4 == 0 { lo.z } else { hi.z },
        ));
    }
    const QUADS: [[u32; 4]; 6] = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    for q in QUADS {
        faces.push([base + q[0], base + q[1], base + q[2]]);
        faces.push([base + q[0], base + q[2], base + q[3]]);
    }
}

fn bounds(vertices: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for v in vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    (lo, hi)
}

fn max_pairwise_distance(vertices: &[Vector3<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in vertices.iter().enumerate() {
        for b in &vertices[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    best.sqrt()
}

/// Orientation of a closed, consistently wound surface, from the sign of
/// its enclosed volume.
fn closed_winding(vertices: &[Vector3<f64>], faces: &[[u32; 3]]) -> Option<Winding> {
    let mut directed = HashSet::with_capacity(faces.len() * 3);
    for f in faces {
        for k in 0..3 {
            if !directed.insert((f[k], f[(k + 1) % 3])) {
                return None;
            }
        }
    }
    if directed.iter().any(|&(i, j)| !directed.contains(&(j, i))) {
        return None;
    }
    let volume: f64 = faces
        .iter()
        .map(|f| vertices[f[0] as usize].dot(&vertices[f[1] as usize].cross(&vertices[f[2] as usize])))
        .sum();
    if volume > 0.0 {
        Some(Winding::Outward)
    } else if volume < 0.0 {
        Some(Winding::Inward)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_meshes_are_closed_and_outward() {
        for m in [
            TriangleMesh::cuboid(Vector3::new(0.1, 0.2, 0.3)).unwrap(),
            TriangleMesh::notched_block(0.1).unwrap(),
            TriangleMesh::uv_sphere(0.1, 12, 24).unwrap(),
        ] {
            assert_eq!(m.winding(), Some(Winding::Outward));
        }
    }

    #[test]
    fn flipped_and_open_meshes() {
        let cube = TriangleMesh::cuboid(Vector3::new(0.1, 0.1, 0.1)).unwrap();
        let verts: Vec<_> = cube.vertices().collect();
        let flipped: Vec<[u32; 3]> = cube.faces().iter().map(|f| [f[0], f[2], f[1]]).collect();
        assert_eq!(TriangleMesh::new(verts.clone(), flipped).unwrap().winding(), Some(Winding::Inward));
        let open = cube.faces()[1..].to_vec();
        assert_eq!(TriangleMesh::new(verts, open).unwrap().winding(), None);
    }

    #[test]
    fn cuboid_diameter_is_space_diagonal() {
        let m = TriangleMesh::cuboid(Vector3::new(1.0, 2.0, 2.0)).unwrap();
        assert!((m.diameter() - 3.0).abs() < 1e-12);
        assert_eq!(m.faces().len(), 12);
    }

    #[test]
    fn scaling_scales_diameter() {
        for mesh in [
            TriangleMesh::uv_sphere(0.05, 12, 16).unwrap(),
            TriangleMesh::notched_block(0.16).unwrap(),
        ] {
            for s in [0.1, 0.37, 3.0, 12.5] {
                let scaled = mesh.with_scale(s);
                assert!((scaled.diameter() - s * mesh.diameter()).abs() < 1e-9);
                let direct = max_pairwise_distance(&scaled.vertices().collect::<Vec<_>>());
                assert!((direct - scaled.diameter()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sphere_vertices_lie_on_sphere() {
        let m = TriangleMesh::uv_sphere(0.2, 8, 10).unwrap();
        assert!(m.vertices().all(|v| (v.norm() - 0.2).abs() < 1e-12));
        assert!((m.diameter() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_face() {
        let err = TriangleMesh::new(vec![Vector3::zeros(), Vector3::x(), Vector3::y()], vec![[0, 1, 3]]);
        assert!(matches!(err, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn obj_round_trip_and_ignored_lines() {
        let text = "# comment\no name\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nv 0 0 1\nf 1 2 3\nf 1/1/1 2/2/2 4\nusemtl x\n";
        let m = TriangleMesh::from_obj_str(text).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 1, 3]]);
        let again = TriangleMesh::from_obj_str(&m.to_obj_string()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn obj_errors_carry_line_numbers() {
        let err = TriangleMesh::from_obj_str("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3 1\n").unwrap_err();
        assert!(matches!(err, Error::ObjParse { line: 4, .. }));
        let err = TriangleMesh::from_obj_str("v 0 zero 0\n").unwrap_err();
        assert!(matches!(err, Error::ObjParse { line: 1, .. }));
    }

    #[test]
    fn notched_block_is_centred() {
        let m = TriangleMesh::notched_block(0.16).unwrap();
        let (lo, hi) = bounds(&m.vertices().collect::<Vec<_>>());
        assert!(((lo + hi) / 2.0).norm() < 1e-12);
        assert!((hi.x - lo.x - 0.16).abs() < 1e-12);
    }
}
