use super::{Point3, TriangleMesh, Vector3, UNIT_TOL};
use crate::{Error, Result};

/// Determinant magnitude below which a ray counts as parallel to a triangle.
pub const PARALLEL_EPS: f64 = 1e-9;
/// Hits closer than this to the origin are discarded (self-intersection guard).
pub const MIN_HIT_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub point: Point3,
    pub face_normal: Vector3,
    pub distance: f64,
    pub face: usize,
}

/// Möller–Trumbore intersection; returns the ray parameter `t`.
pub fn ray_triangle(origin: &Point3, dir: &Vector3, tri: &[Point3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < PARALLEL_EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t >= MIN_HIT_DISTANCE).then_some(t)
}

fn check_direction(dir: &Vector3) -> Result<()> {
    let n = dir.norm();
    if (n - 1.0).abs() > UNIT_TOL || !n.is_finite() {
        return Err(Error::InvalidDirection(n));
    }
    Ok(())
}

fn make_hit(mesh: &TriangleMesh, origin: &Point3, dir: &Vector3, face: usize, t: f64) -> Hit {
    Hit {
        point: origin + dir * t,
        face_normal: mesh.face_normal(face),
        distance: t,
        face,
    }
}

/// Nearest hit along the ray by exhaustive search over all faces. Ties on
/// distance go to the lowest face index. For many rays use [`RayCaster`].
pub fn cast_ray(mesh: &TriangleMesh, origin: &Point3, dir: &Vector3) -> Result<Option<Hit>> {
    check_direction(dir)?;
    let mut best: Option<(usize, f64)> = None;
    for f in 0..mesh.faces().len() {
        if let Some(t) = ray_triangle(origin, dir, &mesh.triangle(f)) {
            if best.map_or(true, |(_, bt)| t < bt) {
                best = Some((f, t));
            }
        }
    }
    Ok(best.map(|(f, t)| make_hit(mesh, origin, dir, f, t)))
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Point3,
    hi: Point3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            hi: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Point3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    /// Slab test; `inv` is the componentwise reciprocal of the direction.
    fn hit(&self, origin: &Point3, inv: &Vector3, t_max: f64) -> bool {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut near = (self.lo[a] - origin[a]) * inv[a];
            let mut far = (self.hi[a] - origin[a]) * inv[a];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf means the origin lies on the slab plane: keep
            if near.is_nan() || far.is_nan() {
                continue;
            }
            t0 = t0.max(near);
            t1 = t1.min(far * (1.0 + 4.0 * f64::EPSILON));
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
struct BvhNode {
    bounds: Aabb,
    // leaf if count > 0: faces order[first..first + count]; else children first, first + 1
    first: usize,
    count: usize,
}

/// Bounding-volume hierarchy over a mesh for bulk ray queries.
#[derive(Debug, Clone)]
pub struct RayCaster<'m> {
    mesh: &'m TriangleMesh,
    nodes: Vec<BvhNode>,
    order: Vec<usize>,
}

const BVH_LEAF: usize = 4;

impl<'m> RayCaster<'m> {
    pub fn new(mesh: &'m TriangleMesh) -> Self {
        let centroids: Vec<Point3> = (0..mesh.faces().len())
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                Point3::from((a.coords + b.coords + c.coords) / 3.0)
            })
            .collect();
        let mut caster = Self {
            mesh,
            nodes: vec![BvhNode {
                bounds: Aabb::empty(),
                first: 0,
                count: 0,
            }],
            order: (0..mesh.faces().len()).collect(),
        };
        caster.build(0, 0, mesh.faces().len(), &centroids);
        caster
    }

    fn build(&mut self, node: usize, start: usize, end: usize, centroids: &[Point3]) {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &f in &self.order[start..end] {
            for p in self.mesh.triangle(f) {
                bounds.grow(&p);
            }
            cbounds.grow(&centroids[f]);
        }
        self.nodes[node].bounds = bounds;
        let extent = cbounds.hi - cbounds.lo;
        let axis = extent.imax();
        if end - start <= BVH_LEAF || extent[axis] <= 0.0 {
            self.nodes[node].first = start;
            self.nodes[node].count = end - start;
            return;
        }
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis].total_cmp(&centroids[b][axis])
        });
        let left = self.nodes.len();
        self.nodes.push(BvhNode {
            bounds: Aabb::empty(),
            first: 0,
            count: 0,
        });
        self.nodes.push(BvhNode {
            bounds: Aabb::empty(),
            first: 0,
            count: 0,
        });
        self.nodes[node].first = left;
        self.nodes[node].count = 0;
        self.build(left, start, mid, centroids);
        self.build(left + 1, mid, end, centroids);
    }

    pub fn mesh(&self) -> &TriangleMesh {
        self.mesh
    }

    /// Same contract as [`cast_ray`].
    pub fn cast(&self, origin: &Point3, dir: &Vector3) -> Result<Option<Hit>> {
        check_direction(dir)?;
        let inv = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<(usize, f64)> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let t_max = best.map_or(f64::INFINITY, |(_, t)| t);
            if !node.bounds.hit(origin, &inv, t_max) {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.first..node.first + node.count] {
                    if let Some(t) = ray_triangle(origin, dir, &self.mesh.triangle(f)) {
                        let better = match best {
                            None => true,
                            Some((bf, bt)) => t < bt || (t == bt && f < bf),
                        };
                        if better {
                            best = Some((f, t));
                        }
                    }
                }
            } else {
                stack.push(node.first + 1);
                stack.push(node.first);
            }
        }
        Ok(best.map(|(f, t)| make_hit(self.mesh, origin, dir, f, t)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::box_mesh;
    use rand::{Rng, SeedableRng};

    fn unit_cube() -> TriangleMesh {
        box_mesh(Point3::origin(), Vector3::new(0.5, 0.5, 0.5))
    }

    #[test]
    fn cube_hit_from_above() {
        let m = unit_cube();
        let hit = cast_ray(&m, &Point3::new(0.0, 0.0, 5.0), &Vector3::new(0.0, 0.0, -1.0))
            .unwrap()
            .unwrap();
        assert!((hit.point - Point3::new(0.0, 0.0, 0.5)).norm() < 1e-12);
        assert!((hit.distance - 4.5).abs() < 1e-12);
        assert!((hit.face_normal - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        let bvh = RayCaster::new(&m)
            .cast(&Point3::new(0.0, 0.0, 5.0), &Vector3::new(0.0, 0.0, -1.0))
            .unwrap()
            .unwrap();
        assert_eq!(bvh.point, hit.point);
    }

    #[test]
    fn cube_miss_pointing_away() {
        let m = unit_cube();
        let r = cast_ray(&m, &Point3::new(0.0, 0.0, 5.0), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(r.is_none());
    }

    #[test]
    fn non_unit_direction_rejected() {
        let m = unit_cube();
        let r = cast_ray(&m, &Point3::origin(), &Vector3::new(0.0, 0.0, 2.0));
        assert!(matches!(r, Err(Error::InvalidDirection(_))));
    }

    /// Plane intersection followed by a same-side (edge function) inside test.
    fn plane_oracle(o: &Point3, d: &Vector3, tri: &[Point3; 3]) -> Option<f64> {
        let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
        let denom = n.dot(d);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = n.dot(&(tri[0] - o)) / denom;
        if t < MIN_HIT_DISTANCE {
            return None;
        }
        let p = o + d * t;
        let inside = (0..3).all(|i| {
            let a = tri[i];
            let b = tri[(i + 1) % 3];
            (b - a).cross(&(p - a)).dot(&n) >= -1e-12
        });
        inside.then_some(t)
    }

    #[test]
    fn random_triangle_matches_plane_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut rp = || Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let tri = [rp(), rp(), rp()];
        let mesh = TriangleMesh::new(tri.to_vec(), vec![[0, 1, 2]]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let mut hits = 0;
        for _ in 0..100 {
            let o = Point3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            // aim near the triangle so both hits and misses occur
            let target = Point3::from(
                (tri[0].coords + tri[1].coords + tri[2].coords) / 3.0
                    + Vector3::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)),
            );
            let d = (target - o).normalize();
            let got = cast_ray(&mesh, &o, &d).unwrap();
            let want = plane_oracle(&o, &d, &tri);
            match (got, want) {
                (Some(h), Some(t)) => {
                    hits += 1;
                    assert!((h.distance - t).abs() < 1e-9);
                    assert!((h.point - (o + d * t)).norm() < 1e-9);
                }
                (None, None) => {}
                (g, w) => panic!("mismatch: {g:?} vs {w:?}"),
            }
        }
        assert!(hits > 10 && hits < 90, "hits = {hits}");
    }

    #[test]
    fn bvh_matches_exhaustive_on_random_soup() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut verts = Vec::new();
        let mut faces = Vec::new();
        for f in 0..1000 {
            let c = Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            for _ in 0..3 {
                verts.push(Point3::from(c + Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))));
            }
            faces.push([3 * f, 3 * f + 1, 3 * f + 2]);
        }
        let mesh = TriangleMesh::new(verts, faces).unwrap();
        let caster = RayCaster::new(&mesh);
        for _ in 0..300 {
            let o = Point3::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
            let d = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
            let a = cast_ray(&mesh, &o, &d).unwrap();
            let b = caster.cast(&o, &d).unwrap();
            assert_eq!(a.map(|h| (h.face, h.distance)), b.map(|h| (h.face, h.distance)));
        }
        // axis-parallel rays exercise the infinite reciprocal path
        for _ in 0..100 {
            let o = Point3::new(rng.gen_range(-5.0..5.0), 10.0, rng.gen_range(-5.0..5.0));
            let d = Vector3::new(0.0, -1.0, 0.0);
            let a = cast_ray(&mesh, &o, &d).unwrap();
            let b = caster.cast(&o, &d).unwrap();
            assert_eq!(a.map(|h| (h.face, h.distance)), b.map(|h| (h.face, h.distance)));
        }
    }
}
