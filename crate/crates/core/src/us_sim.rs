//! Ultrasound-consistent partial observations: parallel rays cast from a
//! virtual probe above the posterior surface, incidence-angle culling,
//! visibility intersection across perturbed acquisitions, and vertebra-level
//! box masking.

use serde::{Deserialize, Serialize};

use crate::geom::{Point3, PointCloud, RayCaster, RigidTransform, SpatialIndex, TriangleMesh, Vector3};
use crate::{Error, Result};

/// Probe geometry and acquisition perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct UsScanConfig {
    /// Probe height (mm) above the highest posterior point.
    pub camera_height: f64,
    /// Spacing (mm) between transverse scan lines along z.
    pub sweep_step: f64,
    /// `(n_lateral, n_depth)`: rays across x per scan line, and sub-lines per
    /// sweep step.
    pub ray_grid: (usize, usize),
    /// Acquisitions; must contain the identity.
    pub shift_set: Vec<RigidTransform>,
    pub max_incidence_deg: f64,
    /// Correspondence radius (mm) for matching hits across shifts.
    pub match_radius: f64,
}

impl Default for UsScanConfig {
    fn default() -> Self {
        Self {
            camera_height: 30.0,
            sweep_step: 1.0,
            ray_grid: (128, 1),
            shift_set: default_shifts(3.0),
            max_incidence_deg: 89.0,
            match_radius: 0.5,
        }
    }
}

/// Identity plus `±d` lateral (x) and `±d` anteroposterior (y) translations.
pub fn default_shifts(d: f64) -> Vec<RigidTransform> {
    vec![
        RigidTransform::identity(),
        RigidTransform::translation(Vector3::new(-d, 0.0, 0.0)),
        RigidTransform::translation(Vector3::new(d, 0.0, 0.0)),
        RigidTransform::translation(Vector3::new(0.0, -d, 0.0)),
        RigidTransform::translation(Vector3::new(0.0, d, 0.0)),
    ]
}

impl UsScanConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("us_sim: {m}")));
        if !(self.camera_height > 0.0) {
            return bad("camera_height must be > 0");
        }
        if !(self.sweep_step > 0.0) {
            return bad("sweep_step must be > 0");
        }
        if self.ray_grid.0 < 1 || self.ray_grid.1 < 1 {
            return bad("ray counts must be >= 1");
        }
        if !self.shift_set.iter().any(RigidTransform::is_identity) {
            return bad("shift_set must contain the identity");
        }
        if !(self.max_incidence_deg > 0.0 && self.max_incidence_deg < 90.0) {
            return bad("max_incidence_deg must lie in (0, 90)");
        }
        if !(self.match_radius > 0.0) {
            return bad("match_radius must be > 0");
        }
        Ok(())
    }

    /// Ray origins over the unshifted mesh footprint; all rays point along -y.
    pub fn ray_origins(&self, mesh: &TriangleMesh) -> Vec<Point3> {
        let (lo, hi) = mesh.bounds();
        let (nl, nd) = self.ray_grid;
        let y0 = hi.y + self.camera_height;
        let xs: Vec<f64> = if nl == 1 {
            vec![0.5 * (lo.x + hi.x)]
        } else {
            (0..nl)
                .map(|i| lo.x + (hi.x - lo.x) * i as f64 / (nl - 1) as f64)
                .collect()
        };
        let lines = ((hi.z - lo.z) / self.sweep_step).floor() as usize + 1;
        let mut origins = Vec::with_capacity(lines * nd * nl);
        for l in 0..lines {
            for d in 0..nd {
                let z = lo.z + self.sweep_step * (l as f64 + d as f64 / nd as f64);
                if z > hi.z {
                    continue;
                }
                origins.extend(xs.iter().map(|&x| Point3::new(x, y0, z)));
            }
        }
        origins
    }
}

/// Serializable form of [`UsScanConfig`]; shifts are pure translations (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UsSimSettings {
    pub camera_height: f64,
    pub sweep_step: f64,
    pub ray_grid: [usize; 2],
    /// Translations applied to the mesh; the identity is added if missing.
    pub shifts: Vec<[f64; 3]>,
    pub max_incidence_deg: f64,
    pub match_radius: f64,
    /// Level mask z half extent as a fraction of the median level spacing.
    pub mask_z_fraction: f64,
}

impl Default for UsSimSettings {
    fn default() -> Self {
        let d = UsScanConfig::default();
        Self {
            camera_height: d.camera_height,
            sweep_step: d.sweep_step,
            ray_grid: [d.ray_grid.0, d.ray_grid.1],
            shifts: d
                .shift_set
                .iter()
                .map(|t| {
                    let v = t.translation_vector();
                    [v.x, v.y, v.z]
                })
                .collect(),
            max_incidence_deg: d.max_incidence_deg,
            match_radius: d.match_radius,
            mask_z_fraction: 0.55,
        }
    }
}

impl UsSimSettings {
    pub fn to_scan_config(&self) -> Result<UsScanConfig> {
        let mut shift_set: Vec<RigidTransform> = self
            .shifts
            .iter()
            .map(|s| RigidTransform::translation(Vector3::from(*s)))
            .collect();
        if !shift_set.iter().any(RigidTransform::is_identity) {
            shift_set.insert(0, RigidTransform::identity());
        }
        let cfg = UsScanConfig {
            camera_height: self.camera_height,
            sweep_step: self.sweep_step,
            ray_grid: (self.ray_grid[0], self.ray_grid[1]),
            shift_set,
            max_incidence_deg: self.max_incidence_deg,
            match_radius: self.match_radius,
        };
        cfg.validate()?;
        if !(self.mask_z_fraction > 0.0) {
            return Err(Error::InvalidConfig("us_sim: mask_z_fraction must be > 0".into()));
        }
        Ok(cfg)
    }
}

pub const RAY_DIRECTION: Vector3 = Vector3::new(0.0, -1.0, 0.0);

/// True when the surface normal faces the incoming ray within the incidence
/// limit: angle(normal, -ray) < `max_incidence_deg`.
pub fn passes_incidence(normal: &Vector3, ray_dir: &Vector3, max_incidence_deg: f64) -> bool {
    normal.dot(&(-ray_dir)) > max_incidence_deg.to_radians().cos()
}

/// Hits of the ray grid on `shift`-ed mesh that pass incidence culling,
/// mapped back into the unshifted frame (with face normals).
pub fn visible_surface(mesh: &TriangleMesh, config: &UsScanConfig, shift: &RigidTransform) -> Result<PointCloud> {
    config.validate()?;
    let origins = config.ray_origins(mesh);
    let shifted = mesh.transformed(shift);
    let caster = RayCaster::new(&shifted);
    let back = shift.inverse();
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for o in &origins {
        if let Some(hit) = caster.cast(o, &RAY_DIRECTION)? {
            if passes_incidence(&hit.face_normal, &RAY_DIRECTION, config.max_incidence_deg) {
                points.push(back.apply_point(&hit.point));
                normals.push(back.apply_vector(&hit.face_normal).normalize());
            }
        }
    }
    if points.is_empty() {
        return Err(Error::NoVisibleSurface);
    }
    PointCloud::with_normals(points, normals)
}

/// Identity-acquisition points that remain visible (a hit within
/// `match_radius`) under every shift of the configuration.
pub fn simulate_us_partial(mesh: &TriangleMesh, config: &UsScanConfig) -> Result<PointCloud> {
    config.validate()?;
    let (lo, hi) = mesh.bounds();
    let spacing = (hi.x - lo.x) / (config.ray_grid.0.max(2) - 1) as f64;
    if spacing.max(config.sweep_step) > 2.0 * config.match_radius {
        // Shifted scans sample between the identity rays and can miss every match.
        log::warn!(
            "ray spacing {:.3} mm exceeds twice the match radius {:.3} mm",
            spacing.max(config.sweep_step),
            config.match_radius
        );
    }
    let base = visible_surface(mesh, config, &RigidTransform::identity())?;
    let mut keep = vec![true; base.len()];
    let r2 = config.match_radius * config.match_radius;
    for shift in config.shift_set.iter().filter(|s| !s.is_identity()) {
        let surface = visible_surface(mesh, config, shift)?;
        let index = SpatialIndex::build(&surface)?;
        for (k, p) in keep.iter_mut().zip(base.points()) {
            if *k {
                *k = index.nearest_sq(p).1 <= r2;
            }
        }
    }
    let idx: Vec<usize> = (0..base.len()).filter(|&i| keep[i]).collect();
    if idx.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    Ok(base.select(&idx))
}

/// Axis-aligned box centered on a vertebral centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelMask {
    pub centroid: [f64; 3],
    pub box_half_extents: [f64; 3],
}

impl LevelMask {
    pub fn new(centroid: Point3, half: [f64; 3]) -> Result<Self> {
        if half.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::InvalidConfig("mask half extents must be > 0".into()));
        }
        Ok(Self {
            centroid: [centroid.x, centroid.y, centroid.z],
            box_half_extents: half,
        })
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| (p[a] - self.centroid[a]).abs() <= self.box_half_extents[a])
    }

    /// Dataset-wide fixed masks: z half extent `z_fraction` of the median
    /// inter-centroid spacing, x/y covering the full spine extent around each
    /// centroid.
    pub fn for_levels(centroids: &[Point3], spine_bounds: (Point3, Point3), z_fraction: f64) -> Result<Vec<Self>> {
        if centroids.len() < 2 {
            return Err(Error::InvalidConfig("need at least two levels to derive mask size".into()));
        }
        let mut zs: Vec<f64> = centroids.iter().map(|c| c.z).collect();
        zs.sort_by(f64::total_cmp);
        let mut gaps: Vec<f64> = zs.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(f64::total_cmp);
        let median = if gaps.len() % 2 == 1 {
            gaps[gaps.len() / 2]
        } else {
            0.5 * (gaps[gaps.len() / 2 - 1] + gaps[gaps.len() / 2])
        };
        let (lo, hi) = spine_bounds;
        centroids
            .iter()
            .map(|c| {
                let hx = (c.x - lo.x).abs().max((hi.x - c.x).abs());
                let hy = (c.y - lo.y).abs().max((hi.y - c.y).abs());
                LevelMask::new(*c, [hx, hy, z_fraction * median])
            })
            .collect()
    }
}

/// Points of the spine cloud inside the level box, spill-over included.
pub fn mask_level(spine_cloud: &PointCloud, mask: &LevelMask) -> Result<PointCloud> {
    if spine_cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let out = spine_cloud.filter(|p| mask.contains(p));
    if out.is_empty() {
        return Err(Error::EmptyLevel);
    }
    Ok(out)
}
