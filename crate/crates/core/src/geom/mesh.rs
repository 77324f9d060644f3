use std::collections::{HashMap, HashSet};

use super::{Point3, PointCloud, RigidTransform, Vector3};
use crate::{Error, Result};

/// Indexed triangle mesh. Faces are counter-clockwise seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates indices and drops zero-area faces.
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidGeometry("non-finite vertex".into()));
        }
        let n = vertices.len();
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidGeometry(format!(
                "face {f:?} out of range for {n} vertices"
            )));
        }
        let faces = faces
            .into_iter()
            .filter(|f| {
                let [a, b, c] = f.map(|i| vertices[i]);
                (b - a).cross(&(c - a)).norm() > 0.0
            })
            .collect::<Vec<_>>();
        if faces.is_empty() {
            return Err(Error::InvalidGeometry("mesh has no valid faces".into()));
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn triangle(&self, f: usize) -> [Point3; 3] {
        self.faces[f].map(|i| self.vertices[i])
    }

    pub fn face_normal(&self, f: usize) -> Vector3 {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bounds(&self) -> (Point3, Point3) {
        let first = self.vertices[0];
        self.vertices
            .iter()
            .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)))
    }

    pub fn vertex_centroid(&self) -> Point3 {
        let s = self
            .vertices
            .iter()
            .fold(Vector3::zeros(), |a, p| a + p.coords);
        Point3::from(s / self.vertices.len() as f64)
    }

    /// Area-weighted surface centroid.
    pub fn surface_centroid(&self) -> Point3 {
        let mut acc = Vector3::zeros();
        let mut area = 0.0;
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            let w = self.face_area(f);
            acc += w * (a.coords + b.coords + c.coords) / 3.0;
            area += w;
        }
        Point3::from(acc / area)
    }

    pub fn transformed(&self, t: &RigidTransform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|p| t.apply_point(p)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Disjoint union of meshes.
    pub fn merge(meshes: &[&TriangleMesh]) -> TriangleMesh {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for m in meshes {
            let off = vertices.len();
            vertices.extend_from_slice(&m.vertices);
            faces.extend(m.faces.iter().map(|f| f.map(|i| i + off)));
        }
        TriangleMesh { vertices, faces }
    }

    /// Euler characteristic V - E + F over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let used: HashSet<usize> = self.faces.iter().flatten().copied().collect();
        let edges: HashSet<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        used.len() as i64 - edges.len() as i64 + self.faces.len() as i64
    }

    /// Closed, consistently oriented 2-manifold: every directed edge appears
    /// exactly once and its reverse exactly once.
    pub fn is_watertight(&self) -> bool {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *directed.entry((a, b)).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Signed volume via the divergence theorem (positive for outward winding).
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    /// Unsigned distance from `p` to the surface (exhaustive over faces).
    pub fn distance_to_point(&self, p: &Point3) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Area-weighted uniform surface samples, deterministic for a given rng.
    pub fn sample_surface(&self, n: usize, rng: &mut impl rand::Rng) -> PointCloud {
        let mut cdf = Vec::with_capacity(self.faces.len());
        let mut acc = 0.0;
        for f in 0..self.faces.len() {
            acc += self.face_area(f);
            cdf.push(acc);
        }
        let mut points = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        for _ in 0..n {
            let r = rng.gen::<f64>() * acc;
            let f = cdf.partition_point(|&c| c < r).min(self.faces.len() - 1);
            let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let [a, b, c] = self.triangle(f);
            points.push(a + (b - a) * u + (c - a) * v);
            normals.push(self.face_normal(f));
        }
        PointCloud::with_normals(points, normals).expect("surface samples are finite")
    }
}

/// Closest point on triangle `abc` to `p` (Voronoi-region method).
pub(crate) fn closest_point_on_triangle(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Axis-aligned box `[-h, h]` around `center`, 12 outward-wound triangles.
pub fn box_mesh(center: Point3, half: Vector3) -> TriangleMesh {
    let v: Vec<Point3> = (0..8)
        .map(|i| {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            center + Vector3::new(sx * half.x, sy * half.y, sz * half.z)
        })
        .collect();
    let faces = vec![
        [0, 2, 1], [1, 2, 3], // -z
        [4, 5, 6], [5, 7, 6], // +z
        [0, 1, 4], [1, 5, 4], // -y
        [2, 6, 3], [3, 6, 7], // +y
        [0, 4, 2], [2, 4, 6], // -x
        [1, 3, 5], [3, 7, 5], // +x
    ];
    TriangleMesh::new(v, faces).expect("box is valid")
}
