//! Joint multi-modal representation: source-labeled fusion of the ultrasound
//! and X-ray partial clouds, lateral placement of externally supplied X-ray
//! footprints, and fixed-size resampling.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{pca_obb, Point3, PointCloud};
use crate::{Error, Result};

/// Origin of a labeled point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Source {
    Us = 0,
    Xray = 1,
    Coarse = 2,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Us, Source::Xray, Source::Coarse];

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self as usize] = 1.0;
        v
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Source::ALL.get(v as usize).copied()
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Us => "US",
            Source::Xray => "XRAY",
            Source::Coarse => "COARSE",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    points: Vec<Point3>,
    labels: Vec<Source>,
}

impl LabeledPointCloud {
    pub fn new(points: Vec<Point3>, labels: Vec<Source>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::SizeMismatch(points.len(), labels.len()));
        }
        Ok(Self { points, labels })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn labels(&self) -> &[Source] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, s: Source) -> usize {
        self.labels.iter().filter(|&&l| l == s).count()
    }

    /// Rows of `[x, y, z, onehot_us, onehot_xray, onehot_coarse]`.
    pub fn features(&self) -> Vec<[f64; 6]> {
        self.points
            .iter()
            .zip(&self.labels)
            .map(|(p, l)| {
                let h = l.one_hot();
                [p.x, p.y, p.z, h[0], h[1], h[2]]
            })
            .collect()
    }

    pub fn label_bytes(&self) -> Vec<u8> {
        self.labels.iter().map(|&l| l as u8).collect()
    }

    pub fn to_cloud(&self) -> PointCloud {
        PointCloud::new(self.points.clone()).expect("labeled points are finite")
    }
}

/// All US points followed by all X-ray points.
pub fn build_joint(us: &PointCloud, xray: &PointCloud) -> Result<LabeledPointCloud> {
    if us.is_empty() {
        return Err(Error::EmptyModality("US"));
    }
    if xray.is_empty() {
        return Err(Error::EmptyModality("XRAY"));
    }
    let mut points = us.points().to_vec();
    points.extend_from_slice(xray.points());
    let mut labels = vec![Source::Us; us.len()];
    labels.extend(std::iter::repeat(Source::Xray).take(xray.len()));
    LabeledPointCloud::new(points, labels)
}

/// Relative eigenvalue gap below which the second principal axis is
/// considered ambiguous.
pub const AMBIGUOUS_AXIS_GAP: f64 = 0.05;

/// Translates the planar X-ray footprint along the second principal axis of
/// the ultrasound spine segmentation so that its plane passes through the
/// midpoint of the segmentation's two outermost points along that axis.
pub fn place_xray_lateral(spine_us_seg: &PointCloud, xray_planar: &PointCloud) -> Result<PointCloud> {
    if spine_us_seg.len() < 4 {
        return Err(Error::DegenerateCloud(format!(
            "segmentation needs at least 4 points, got {}",
            spine_us_seg.len()
        )));
    }
    if xray_planar.is_empty() {
        return Err(Error::EmptyModality("XRAY"));
    }
    let obb = pca_obb(spine_us_seg)?;
    if obb.degenerate {
        return Err(Error::DegenerateCloud("segmentation bounding box is degenerate".into()));
    }
    let gaps = obb.eigen_gaps();
    if gaps[0] < AMBIGUOUS_AXIS_GAP || gaps[1] < AMBIGUOUS_AXIS_GAP {
        log::warn!("second principal axis is ambiguous (eigen gaps {gaps:?}); using eigen order");
    }
    let axis = obb.axes[1];
    let (lo, hi) = spine_us_seg
        .points()
        .iter()
        .map(|p| p.coords.dot(&axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
    let target = 0.5 * (lo + hi);
    let current = xray_planar
        .points()
        .iter()
        .map(|p| p.coords.dot(&axis))
        .sum::<f64>()
        / xray_planar.len() as f64;
    let t = axis * (target - current);
    PointCloud::with_frame(
        xray_planar.points().iter().map(|p| p + t).collect(),
        xray_planar.normals().map(|n| n.to_vec()),
        xray_planar.frame_id.clone(),
    )
}

/// Farthest-point sampling seeded at index 0; ties go to the lowest index.
pub fn farthest_point_indices(points: &[Point3], n: usize) -> Vec<usize> {
    if points.is_empty() || n == 0 {
        return Vec::new();
    }
    let n = n.min(points.len());
    let mut out = Vec::with_capacity(n);
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut cur = 0usize;
    for _ in 0..n {
        out.push(cur);
        let c = points[cur];
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, d) in dist.iter_mut().enumerate() {
            let d2 = (points[i] - c).norm_squared();
            if d2 < *d {
                *d = d2;
            }
            if *d > best.1 {
                best = (i, *d);
            }
        }
        cur = best.0;
    }
    out
}

/// Resamples to exactly `n` points: farthest-point sampling when the cloud
/// has more than `n` points, the cloud itself when sizes match, and the
/// cloud plus uniform draws with replacement when it is smaller.
pub fn resample_fixed(cloud: &PointCloud, n: usize, rng: &mut impl Rng) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if n == 0 {
        return Err(Error::InvalidConfig("resample size must be >= 1".into()));
    }
    let m = cloud.len();
    let idx: Vec<usize> = if m > n {
        farthest_point_indices(cloud.points(), n)
    } else {
        (0..m).chain((m..n).map(|_| rng.gen_range(0..m))).collect()
    };
    Ok(cloud.select(&idx))
}
