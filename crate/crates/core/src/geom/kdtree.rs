use super::{Point3, PointCloud};
use crate::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static k-d tree answering exact nearest-neighbour queries. Ties on
/// distance resolve to the lowest point index.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        Self::from_points(cloud.points())
    }

    pub fn from_points(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        index.build_node(0, points.len());
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        if hi[axis] - lo[axis] == 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Returns `(index, distance)` of the nearest point.
    pub fn nearest(&self, q: &Point3) -> (usize, f64) {
        let (i, d2) = self.nearest_sq(q);
        (i, d2.sqrt())
    }

    /// Returns `(index, squared distance)` of the nearest point.
    pub fn nearest_sq(&self, q: &Point3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &Point3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = (self.points[i] - q).norm_squared();
                    if d2 < best.1 || (d2 == best.1 && i < best.0) {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // equal distance must still be visited for the index tie-break
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn brute(points: &[Point3], q: &Point3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d2 = (p - q).norm_squared();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best
    }

    #[test]
    fn single_point() {
        let c = PointCloud::from_xyz(&[[1.0, 2.0, 3.0]]).unwrap();
        let idx = SpatialIndex::build(&c).unwrap();
        assert_eq!(idx.nearest(&Point3::new(1.0, 2.0, 3.0)), (0, 0.0));
    }

    #[test]
    fn two_points() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let idx = SpatialIndex::build(&c).unwrap();
        let (i, d) = idx.nearest(&Point3::new(0.4, 0.0, 0.0));
        assert_eq!(i, 0);
        assert!((d - 0.4).abs() < 1e-15);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(SpatialIndex::build(&PointCloud::empty()), Err(Error::EmptyCloud)));
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        // integer lattice with duplicates produces many exact ties
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..500)
            .map(|_| {
                Point3::new(
                    rng.gen_range(0..4) as f64,
                    rng.gen_range(0..4) as f64,
                    rng.gen_range(0..4) as f64,
                )
            })
            .collect();
        let idx = SpatialIndex::from_points(&pts).unwrap();
        for _ in 0..300 {
            let q = Point3::new(
                rng.gen_range(0..8) as f64 * 0.5,
                rng.gen_range(0..8) as f64 * 0.5,
                rng.gen_range(0..8) as f64 * 0.5,
            );
            assert_eq!(idx.nearest_sq(&q), brute(&pts, &q));
        }
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in [64usize, 1000, 10_000] {
            let pts: Vec<Point3> = (0..n)
                .map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen()))
                .collect();
            let idx = SpatialIndex::from_points(&pts).unwrap();
            for _ in 0..64 {
                let q = Point3::new(rng.gen(), rng.gen(), rng.gen());
                assert_eq!(idx.nearest_sq(&q), brute(&pts, &q));
            }
        }
    }
}
