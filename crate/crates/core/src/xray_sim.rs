//! Lateral X-ray observation: points are projected along the left-right axis
//! and placed on the mid slice, giving a planar footprint in 3D.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geom::{Axis, Point3, PointCloud};
use crate::{Error, Result};

/// Points closer than this after projection collapse into one.
pub const DEDUP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MidValue {
    /// Midpoint of the input extent along the projection axis.
    #[default]
    Auto,
    #[serde(untagged)]
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LateralProjectionConfig {
    pub projection_axis: Axis,
    pub mid_value: MidValue,
}

impl Default for LateralProjectionConfig {
    fn default() -> Self {
        Self {
            projection_axis: Axis::X,
            mid_value: MidValue::Auto,
        }
    }
}

impl LateralProjectionConfig {
    pub fn resolve_mid(&self, cloud: &PointCloud) -> Result<f64> {
        match self.mid_value {
            MidValue::Fixed(v) => Ok(v),
            MidValue::Auto => {
                let (lo, hi) = cloud.bounds()?;
                let a = self.projection_axis.index();
                Ok(0.5 * (lo[a] + hi[a]))
            }
        }
    }
}

fn grid_key(p: &Point3, cell: f64) -> [i64; 3] {
    [0, 1, 2].map(|a| (p[a] / cell).floor() as i64)
}

/// Greedy dedup keeping the lowest-index representative of each cluster of
/// points within `tol` of a kept point.
fn dedup(points: Vec<Point3>, tol: f64) -> Vec<Point3> {
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut kept: Vec<Point3> = Vec::new();
    let t2 = tol * tol;
    for p in points {
        let k = grid_key(&p, tol);
        let mut dup = false;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(v) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if v.iter().any(|&i| (kept[i] - p).norm_squared() <= t2) {
                            dup = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
        if !dup {
            grid.entry(k).or_default().push(kept.len());
            kept.push(p);
        }
    }
    kept
}

/// Overwrites the projection-axis coordinate with the mid value and removes
/// points that collapse onto each other. Normals are dropped.
pub fn project_lateral(cloud: &PointCloud, config: &LateralProjectionConfig) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mid = config.resolve_mid(cloud)?;
    let a = config.projection_axis.index();
    let projected = cloud
        .points()
        .iter()
        .map(|p| {
            let mut q = *p;
            q[a] = mid;
            q
        })
        .collect();
    PointCloud::with_frame(dedup(projected, DEDUP_TOL), None, cloud.frame_id.clone())
}

/// Projects, then keeps the first point of every `cell`-sized square of the
/// projection plane.
pub fn silhouette_filter(cloud: &PointCloud, config: &LateralProjectionConfig, cell: f64) -> Result<PointCloud> {
    if !(cell > 0.0) {
        return Err(Error::InvalidConfig("silhouette cell must be > 0".into()));
    }
    let projected = project_lateral(cloud, config)?;
    let a = config.projection_axis.index();
    let (u, v) = ((a + 1) % 3, (a + 2) % 3);
    let mut seen = std::collections::HashSet::new();
    Ok(projected.filter(|p| seen.insert(((p[u] / cell).floor() as i64, (p[v] / cell).floor() as i64))))
}

/// Welford variance; exactly zero when all values are identical.
pub fn variance(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in values {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    if n > 0.0 {
        m2 / n
    } else {
        0.0
    }
}
