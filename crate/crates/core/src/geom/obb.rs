use nalgebra::{Matrix3, SymmetricEigen};

use super::{Point3, PointCloud, Vector3};
use crate::{Error, Result};

/// Half extent assigned to directions with no spread.
pub const DEGENERATE_HALF_EXTENT: f64 = 1e-6;

/// PCA-aligned box. `axes[0]` is the first principal direction.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedBoundingBox {
    pub center: Point3,
    pub axes: [Vector3; 3],
    pub half_extents: [f64; 3],
    /// Covariance eigenvalues matching `axes`.
    pub eigenvalues: [f64; 3],
    /// Set when the cloud is coplanar or collinear.
    pub degenerate: bool,
}

impl OrientedBoundingBox {
    pub fn contains(&self, p: &Point3, tol: f64) -> bool {
        let d = p - self.center;
        (0..3).all(|i| d.dot(&self.axes[i]).abs() <= self.half_extents[i] + tol)
    }

    /// Relative gap between consecutive eigenvalues; values near 0 mean the
    /// axis order is ambiguous.
    pub fn eigen_gaps(&self) -> [f64; 2] {
        let [a, b, c] = self.eigenvalues;
        let rel = |hi: f64, lo: f64| if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
        [rel(a, b), rel(b, c)]
    }
}

/// Flips `v` so its largest-magnitude component is positive.
fn canonical_sign(v: Vector3) -> Vector3 {
    let i = v.iamax();
    if v[i] < 0.0 {
        -v
    } else {
        v
    }
}

/// Oriented bounding box from the principal components of the centered
/// covariance, axes in descending eigenvalue order.
pub fn pca_obb(cloud: &PointCloud) -> Result<OrientedBoundingBox> {
    if cloud.len() < 2 {
        return Err(Error::DegenerateCloud(format!(
            "need at least 2 points, got {}",
            cloud.len()
        )));
    }
    let mean = cloud.centroid()?;
    let mut cov = Matrix3::zeros();
    for p in cloud.points() {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= cloud.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes = order.map(|i| canonical_sign(eig.eigenvectors.column(i).into_owned().normalize()));
    // re-orthogonalize against solver round-off
    axes[1] = canonical_sign((axes[1] - axes[0] * axes[0].dot(&axes[1])).normalize());
    axes[2] = canonical_sign(axes[0].cross(&axes[1]).normalize());
    let eigenvalues = order.map(|i| eig.eigenvalues[i].max(0.0));

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in cloud.points() {
        let d = p - mean;
        for a in 0..3 {
            let s = d.dot(&axes[a]);
            lo[a] = lo[a].min(s);
            hi[a] = hi[a].max(s);
        }
    }
    let span = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if span == 0.0 {
        return Err(Error::DegenerateCloud("all points identical".into()));
    }
    let mut degenerate = false;
    let mut half_extents = [0.0; 3];
    let mut center = mean.coords;
    for a in 0..3 {
        let h = 0.5 * (hi[a] - lo[a]);
        if h <= span * 1e-12 {
            degenerate = true;
            half_extents[a] = DEGENERATE_HALF_EXTENT;
        } else {
            half_extents[a] = h;
        }
        center += axes[a] * (0.5 * (hi[a] + lo[a]));
    }
    Ok(OrientedBoundingBox {
        center: Point3::from(center),
        axes,
        half_extents,
        eigenvalues,
        degenerate,
    })
}
