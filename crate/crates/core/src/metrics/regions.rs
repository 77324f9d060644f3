use crate::geom::{Point3, PointCloud};
use crate::Result;

/// Posterior (arch, `y > cg_y`) and anterior (body, `y <= cg_y`) parts.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSplit {
    pub arch: PointCloud,
    pub body: PointCloud,
    pub cg: Point3,
}

/// Splits at the cloud's own centre of gravity. Points exactly on the
/// boundary go to the body.
pub fn split_arch_body(cloud: &PointCloud) -> Result<RegionSplit> {
    let cg = cloud.centroid()?;
    Ok(split_at(cloud, cg))
}

/// Splits at a given centre of gravity (e.g. the ground truth's).
pub fn split_at(cloud: &PointCloud, cg: Point3) -> RegionSplit {
    RegionSplit {
        arch: cloud.filter(|p| p.y > cg.y),
        body: cloud.filter(|p| p.y <= cg.y),
        cg,
    }
}
