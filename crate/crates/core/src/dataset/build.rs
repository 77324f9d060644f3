use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::split::{make_split, DatasetManifest, ManifestEntry, Split, SplitRatios, MIN_SPLIT_IDS};
use crate::geom::io::read_mesh;
use crate::geom::{Point3, PointCloud, TriangleMesh};
use crate::joint::{place_xray_lateral, resample_fixed};
use crate::rng::{digest_hex, stream_rng};
use crate::sample::{Normalization, SampleMeta, VertebraSample};
use crate::us_sim::{mask_level, simulate_us_partial, LevelMask, UsSimSettings};
use crate::xray_sim::{project_lateral, LateralProjectionConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Counts {
    pub us: usize,
    pub xray: usize,
    pub gt: usize,
}

impl Default for Counts {
    fn default() -> Self {
        Self {
            us: 1024,
            xray: 512,
            gt: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildConfig {
    pub us: UsSimSettings,
    pub xray: LateralProjectionConfig,
    pub counts: Counts,
    /// Dense surface samples per ground-truth point before FPS.
    pub dense_factor: usize,
    pub split: SplitRatios,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            us: UsSimSettings::default(),
            xray: LateralProjectionConfig::default(),
            counts: Counts::default(),
            dense_factor: 4,
            split: SplitRatios::default(),
            seed: 0,
        }
    }
}

impl BuildConfig {
    fn validate(&self) -> Result<()> {
        let c = self.counts;
        if c.us == 0 || c.xray == 0 || c.gt == 0 || self.dense_factor == 0 {
            return Err(Error::InvalidConfig("counts and dense_factor must be >= 1".into()));
        }
        self.us.to_scan_config().map(|_| ())
    }
}

/// One spine: level meshes in craniocaudal order, already in a common frame.
#[derive(Debug, Clone)]
pub struct SpineInput {
    pub id: String,
    pub levels: Vec<TriangleMesh>,
    pub provenance: serde_json::Value,
}

impl SpineInput {
    pub fn level_id(&self, k: usize) -> String {
        format!("{}_L{}", self.id, k + 1)
    }
}

/// Reads every `.ply` / `.obj` file in `dir` (sorted by name) as one level.
pub fn load_spine_meshes(dir: &Path) -> Result<SpineInput> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("ply") || e.eq_ignore_ascii_case("obj"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::parse(dir, "no .ply or .obj meshes"));
    }
    let levels = paths.iter().map(read_mesh).collect::<Result<Vec<_>>>()?;
    let id = dir
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("spine")
        .to_string();
    let files: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    Ok(SpineInput {
        id,
        levels,
        provenance: serde_json::json!({ "source": "files", "files": files }),
    })
}

fn level_masks(levels: &[TriangleMesh], spine: &TriangleMesh, z_fraction: f64) -> Result<Vec<LevelMask>> {
    let centroids: Vec<Point3> = levels.iter().map(TriangleMesh::surface_centroid).collect();
    if centroids.len() >= 2 {
        return LevelMask::for_levels(&centroids, spine.bounds(), z_fraction);
    }
    // a lone level has no spacing; its own z extent stands in
    let (lo, hi) = spine.bounds();
    let c = centroids[0];
    let half = [
        (c.x - lo.x).abs().max((hi.x - c.x).abs()),
        (c.y - lo.y).abs().max((hi.y - c.y).abs()),
        z_fraction * (hi.z - lo.z),
    ];
    Ok(vec![LevelMask::new(c, half)?])
}

fn finish_sample(
    level_id: String,
    us: PointCloud,
    xray: PointCloud,
    gt: PointCloud,
    provenance: serde_json::Value,
) -> Result<VertebraSample> {
    // normalization from the US partial alone: never sees GT, and the
    // US-only baseline is not informed by the X-ray through the frame
    let (_, center, scale) = us.normalize_unit()?;
    Ok(VertebraSample {
        us_partial: us.normalize_with(&center, scale),
        xray_partial: xray.normalize_with(&center, scale),
        complete: gt.normalize_with(&center, scale),
        meta: SampleMeta {
            level_id,
            normalization: Normalization {
                center: [center.x, center.y, center.z],
                scale,
            },
            provenance,
        },
    })
}

/// Simulates both modalities for every level of one spine. The outer error
/// is a spine-wide failure (US scan); inner errors are per level.
pub fn build_spine_samples(
    spine: &SpineInput,
    cfg: &BuildConfig,
) -> Result<Vec<(String, Result<VertebraSample>)>> {
    cfg.validate()?;
    if spine.levels.is_empty() {
        return Err(Error::InvalidGeometry(format!("spine {} has no levels", spine.id)));
    }
    let scan = cfg.us.to_scan_config()?;
    let refs: Vec<&TriangleMesh> = spine.levels.iter().collect();
    let spine_mesh = TriangleMesh::merge(&refs);
    let us_spine = simulate_us_partial(&spine_mesh, &scan)?.drop_normals();
    let masks = level_masks(&spine.levels, &spine_mesh, cfg.us.mask_z_fraction)?;
    let c = cfg.counts;
    Ok(spine
        .levels
        .iter()
        .zip(&masks)
        .enumerate()
        .map(|(k, (mesh, mask))| {
            let id = spine.level_id(k);
            let res = (|| {
                let mut rng = stream_rng(cfg.seed, &id);
                let us_level = mask_level(&us_spine, mask)?;
                let dense = mesh.sample_surface(c.gt * cfg.dense_factor, &mut rng).drop_normals();
                let gt = resample_fixed(&dense, c.gt, &mut rng)?;
                let xray = resample_fixed(&project_lateral(&dense, &cfg.xray)?, c.xray, &mut rng)?;
                let us = resample_fixed(&us_level, c.us, &mut rng)?;
                let prov = serde_json::json!({
                    "spine": spine.id,
                    "level": k + 1,
                    "spine_provenance": spine.provenance,
                    "us_points_in_mask": us_level.len(),
                });
                finish_sample(id.clone(), us, xray, gt, prov)
            })();
            (id, res)
        })
        .collect())
}

/// Assembles a sample from externally segmented clouds (mm, common frame
/// except for the X-ray plane, which is placed laterally on the US spine
/// segmentation).
pub fn assemble_external_sample(
    level_id: &str,
    us_level: &PointCloud,
    spine_us_seg: &PointCloud,
    xray_planar: &PointCloud,
    gt: &PointCloud,
    counts: Counts,
    seed: u64,
) -> Result<VertebraSample> {
    let mut rng = stream_rng(seed, level_id);
    let xray = place_xray_lateral(spine_us_seg, xray_planar)?;
    let gt = resample_fixed(gt, counts.gt, &mut rng)?;
    let xray = resample_fixed(&xray, counts.xray, &mut rng)?;
    let us = resample_fixed(us_level, counts.us, &mut rng)?;
    finish_sample(
        level_id.to_string(),
        us,
        xray,
        gt,
        serde_json::json!({ "source": "external" }),
    )
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub manifest: DatasetManifest,
    pub failed: Vec<(String, String)>,
}

pub fn sample_dir(root: &Path, id: &str) -> PathBuf {
    root.join("samples").join(id)
}

fn payload_digest(dir: &Path) -> Result<String> {
    let mut bytes = Vec::new();
    for f in ["us.ply", "xray.ply", "gt.ply", "meta.json"] {
        bytes.extend(std::fs::read(dir.join(f))?);
    }
    Ok(digest_hex(&bytes))
}

/// Builds and persists every spine under `out`, then writes `manifest.json`
/// once. Failing levels are logged and listed in the report.
pub fn build_dataset(
    spines: &[SpineInput],
    cfg: &BuildConfig,
    out: &Path,
    jobs: usize,
    digests: &[(String, String)],
    comments: &[String],
) -> Result<BuildReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Vec<(String, Result<String>)>>>> =
        Mutex::new((0..spines.len()).map(|_| None).collect());
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(spine) = spines.get(i) else { break };
        let per_level = match build_spine_samples(spine, cfg) {
            Ok(levels) => levels
                .into_iter()
                .map(|(id, r)| {
                    let r = r.and_then(|s| {
                        let dir = sample_dir(out, &id);
                        s.save(&dir, comments)?;
                        payload_digest(&dir)
                    });
                    (id, r)
                })
                .collect(),
            Err(e) => (0..spine.levels.len().max(1))
                .map(|k| (spine.level_id(k), Err(Error::InvalidGeometry(format!("spine {}: {e}", spine.id)))))
                .collect(),
        };
        results.lock().unwrap()[i] = Some(per_level);
    };
    std::thread::scope(|s| {
        for _ in 1..jobs.max(1) {
            s.spawn(work);
        }
        work();
    });
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (id, r) in results.into_inner().unwrap().into_iter().flatten().flatten() {
        match r {
            Ok(d) => ok.push((id, d)),
            Err(e) => {
                log::warn!("sample {id} skipped: {e}");
                failed.push((id, e.to_string()));
            }
        }
    }
    let ids: Vec<String> = ok.iter().map(|(id, _)| id.clone()).collect();
    let mut manifest = if ids.len() < MIN_SPLIT_IDS {
        // Too few to split; a handful of meshes is still useful for inference.
        log::warn!("only {} samples, all assigned to the test split", ids.len());
        DatasetManifest {
            seed: cfg.seed,
            ratios: cfg.split,
            samples: ids.iter().map(|id| ManifestEntry { id: id.clone(), split: Split::Test }).collect(),
            digests: Default::default(),
        }
    } else {
        make_split(&ids, cfg.split, cfg.seed)?
    };
    for (k, v) in digests {
        manifest.digests.insert(k.clone(), v.clone());
    }
    for (id, d) in ok {
        manifest.digests.insert(format!("sample:{id}"), d);
    }
    manifest.save(&out.join("manifest.json"))?;
    Ok(BuildReport { manifest, failed })
}
