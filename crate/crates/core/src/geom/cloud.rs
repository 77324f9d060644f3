use serde::{Deserialize, Serialize};

use super::{Point3, Vector3, UNIT_TOL};
use crate::{Error, Result};

/// Anatomical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Ordered point set with optional unit normals, tagged with the frame it
/// is expressed in.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<Vector3>>,
    pub frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        Self::with_frame(points, None, "anatomical")
    }

    pub fn with_normals(points: Vec<Point3>, normals: Vec<Vector3>) -> Result<Self> {
        Self::with_frame(points, Some(normals), "anatomical")
    }

    pub fn with_frame(
        points: Vec<Point3>,
        normals: Option<Vec<Vector3>>,
        frame_id: impl Into<String>,
    ) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidGeometry(format!("non-finite point {p:?}")));
        }
        if let Some(n) = &normals {
            if n.len() != points.len() {
                return Err(Error::SizeMismatch(points.len(), n.len()));
            }
            if let Some(bad) = n.iter().find(|v| (v.norm() - 1.0).abs() > UNIT_TOL) {
                return Err(Error::InvalidGeometry(format!("normal not unit: {bad:?}")));
            }
        }
        Ok(Self {
            points,
            normals,
            frame_id: frame_id.into(),
        })
    }

    /// Builds from `[x, y, z]` triples.
    pub fn from_xyz(xyz: &[[f64; 3]]) -> Result<Self> {
        Self::new(xyz.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect())
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            normals: None,
            frame_id: "anatomical".into(),
        }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3]> {
        self.normals.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn to_xyz(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| [p.x, p.y, p.z]).collect()
    }

    /// Keeps the points (and normals) at the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| idx.iter().map(|&i| n[i]).collect()),
            frame_id: self.frame_id.clone(),
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(&Point3) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.points[i])).collect();
        self.select(&idx)
    }

    pub fn drop_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    pub fn centroid(&self) -> Result<Point3> {
        if self.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Ok(Point3::from(sum / self.len() as f64))
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> Result<(Point3, Point3)> {
        let first = *self.points.first().ok_or(Error::EmptyCloud)?;
        Ok(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    /// Centers on the centroid and scales so the farthest point sits at
    /// distance 0.5. Returns `(normalized, center, scale)`; invert with
    /// [`PointCloud::denormalize`].
    pub fn normalize_unit(&self) -> Result<(PointCloud, Point3, f64)> {
        let center = self.centroid()?;
        let max_dist = self
            .points
            .iter()
            .map(|p| (p - center).norm())
            .fold(0.0_f64, f64::max);
        if max_dist == 0.0 {
            return Err(Error::DegenerateCloud("all points identical".into()));
        }
        let scale = 2.0 * max_dist;
        Ok((self.normalize_with(&center, scale), center, scale))
    }

    /// Applies a precomputed normalization `(p - center) / scale`.
    pub fn normalize_with(&self, center: &Point3, scale: f64) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| Point3::from((p - center) / scale))
                .collect(),
            normals: self.normals.clone(),
            frame_id: self.frame_id.clone(),
        }
    }

    pub fn denormalize(&self, center: &Point3, scale: f64) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| Point3::from(p.coords * scale + center.coords))
                .collect(),
            normals: self.normals.clone(),
            frame_id: self.frame_id.clone(),
        }
    }

    /// Concatenates clouds; normals are kept only if every part has them.
    pub fn concat(parts: &[&PointCloud]) -> PointCloud {
        let points = parts.iter().flat_map(|c| c.points.iter().copied()).collect();
        let normals = if parts.iter().all(|c| c.normals.is_some()) {
            Some(
                parts
                    .iter()
                    .flat_map(|c| c.normals.as_ref().unwrap().iter().copied())
                    .collect(),
            )
        } else {
            None
        };
        PointCloud {
            points,
            normals,
            frame_id: parts
                .first()
                .map(|c| c.frame_id.clone())
                .unwrap_or_else(|| "anatomical".into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_two_points() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let (n, center, scale) = c.normalize_unit().unwrap();
        assert_eq!(center, Point3::new(1.0, 0.0, 0.0));
        assert_eq!(scale, 2.0);
        assert_eq!(n.to_xyz(), vec![[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]]);
    }

    #[test]
    fn normalize_is_idempotent_on_normalized_input() {
        let c = PointCloud::from_xyz(&[[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0], [0.0, 0.3, 0.0], [0.0, -0.3, 0.0]])
            .unwrap();
        let (n, center, scale) = c.normalize_unit().unwrap();
        assert!((scale - 1.0).abs() < 1e-12);
        assert!(center.coords.norm() < 1e-12);
        for (a, b) in n.points().iter().zip(c.points()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_identical_points() {
        let c = PointCloud::from_xyz(&[[1.0, 1.0, 1.0]; 3]).unwrap();
        assert!(matches!(c.normalize_unit(), Err(Error::DegenerateCloud(_))));
        assert!(matches!(PointCloud::empty().normalize_unit(), Err(Error::EmptyCloud)));
    }

    #[test]
    fn rejects_bad_normals_and_nan() {
        let p = vec![Point3::new(0.0, 0.0, 0.0)];
        assert!(PointCloud::with_normals(p.clone(), vec![Vector3::new(0.0, 0.0, 2.0)]).is_err());
        assert!(PointCloud::with_normals(p, vec![]).is_err());
        assert!(PointCloud::from_xyz(&[[f64::NAN, 0.0, 0.0]]).is_err());
    }

    proptest! {
        #[test]
        fn normalize_round_trip(pts in prop::collection::vec(prop::array::uniform3(-100.0f64..100.0), 2..64)) {
            let c = PointCloud::from_xyz(&pts).unwrap();
            if let Ok((n, center, scale)) = c.normalize_unit() {
                let back = n.denormalize(&center, scale);
                for (a, b) in back.points().iter().zip(c.points()) {
                    prop_assert!((a - b).norm() < 1e-9);
                }
                let maxd = n.points().iter().map(|p| p.coords.norm()).fold(0.0, f64::max);
                prop_assert!((maxd - 0.5).abs() < 1e-12);
            }
        }
    }
}
