use serde::{Deserialize, Serialize};

use super::emd::{emd, EmdOptions};
use super::{chamfer, f1_score, split_at};
use crate::geom::PointCloud;
use crate::joint::farthest_point_indices;
use crate::{Error, Result};

/// CD and EMD are reported multiplied by this factor.
pub const REPORT_SCALE: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Whole,
    Arch,
    Body,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Whole, Region::Arch, Region::Body];

    pub fn name(self) -> &'static str {
        match self {
            Region::Whole => "whole",
            Region::Arch => "arch",
            Region::Body => "body",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// F1 distance threshold in normalized units.
    pub tau: f64,
    pub emd: EmdOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            tau: 0.01,
            emd: EmdOptions::default(),
        }
    }
}

/// Metrics of one region; CD and EMD already scaled by [`REPORT_SCALE`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub cd: f64,
    pub emd: f64,
    pub f1: f64,
}

/// One vertebra; a region is `None` ("undefined") when either cloud has no
/// points in it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub whole: Option<RegionMetrics>,
    pub arch: Option<RegionMetrics>,
    pub body: Option<RegionMetrics>,
}

impl EvalRow {
    pub fn get(&self, r: Region) -> Option<RegionMetrics> {
        match r {
            Region::Whole => self.whole,
            Region::Arch => self.arch,
            Region::Body => self.body,
        }
    }
}

/// EMD between clouds of possibly different size: the larger one is reduced
/// by farthest-point sampling to the size of the smaller.
fn emd_equalized(a: &PointCloud, b: &PointCloud, opts: &EmdOptions) -> Result<f64> {
    let n = a.len().min(b.len());
    let shrink = |c: &PointCloud| {
        if c.len() == n {
            c.clone()
        } else {
            c.select(&farthest_point_indices(c.points(), n))
        }
    };
    emd(&shrink(a), &shrink(b), opts)
}

fn region_metrics(pred: &PointCloud, gt: &PointCloud, opts: &EvalOptions) -> Result<Option<RegionMetrics>> {
    if pred.is_empty() || gt.is_empty() {
        return Ok(None);
    }
    Ok(Some(RegionMetrics {
        cd: chamfer(pred, gt)? * REPORT_SCALE,
        emd: emd_equalized(pred, gt, &opts.emd)? * REPORT_SCALE,
        f1: f1_score(pred, gt, opts.tau)?,
    }))
}

/// Whole, arch and body metrics; both clouds are split at the ground truth's
/// centre of gravity.
pub fn evaluate(pred: &PointCloud, gt: &PointCloud, opts: &EvalOptions) -> Result<EvalRow> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let cg = gt.centroid()?;
    let sp = split_at(pred, cg);
    let sg = split_at(gt, cg);
    Ok(EvalRow {
        whole: region_metrics(pred, gt, opts)?,
        arch: region_metrics(&sp.arch, &sg.arch, opts)?,
        body: region_metrics(&sp.body, &sg.body, opts)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Rows where the region was defined.
    pub n: usize,
    pub cd_mean: f64,
    pub cd_std: f64,
    pub emd_mean: f64,
    pub emd_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Mean and sample standard deviation over rows where `region` is defined.
pub fn aggregate(rows: &[EvalRow], region: Region) -> Option<Aggregate> {
    let cells: Vec<RegionMetrics> = rows.iter().filter_map(|r| r.get(region)).collect();
    if cells.is_empty() {
        return None;
    }
    let (cd_mean, cd_std) = mean_std(&cells.iter().map(|c| c.cd).collect::<Vec<_>>());
    let (emd_mean, emd_std) = mean_std(&cells.iter().map(|c| c.emd).collect::<Vec<_>>());
    let (f1_mean, f1_std) = mean_std(&cells.iter().map(|c| c.f1).collect::<Vec<_>>());
    Some(Aggregate {
        n: cells.len(),
        cd_mean,
        cd_std,
        emd_mean,
        emd_std,
        f1_mean,
        f1_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::split_arch_body;
    use rand::{Rng, SeedableRng};

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]).collect();
        PointCloud::from_xyz(&pts).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let gt = random_cloud(64, 1);
        let row = evaluate(&gt, &gt, &EvalOptions::default()).unwrap();
        for r in Region::ALL {
            let m = row.get(r).unwrap();
            assert_eq!((m.cd, m.emd, m.f1), (0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn arch_only_prediction_leaves_body_undefined() {
        let gt = random_cloud(64, 2);
        let arch = split_arch_body(&gt).unwrap().arch;
        let row = evaluate(&arch, &gt, &EvalOptions::default()).unwrap();
        assert_eq!(row.arch.unwrap().cd, 0.0);
        assert!(row.body.is_none());
        assert!(row.whole.unwrap().cd > 0.0);
        assert_eq!(aggregate(&[row], Region::Body), None);
        assert_eq!(aggregate(&[row], Region::Arch).unwrap().n, 1);
    }

    #[test]
    fn cells_equal_standalone_ops() {
        let gt = random_cloud(80, 3);
        let pred = random_cloud(80, 4);
        let opts = EvalOptions::default();
        let row = evaluate(&pred, &gt, &opts).unwrap();
        let w = row.whole.unwrap();
        assert_eq!(w.cd, chamfer(&pred, &gt).unwrap() * REPORT_SCALE);
        assert_eq!(w.emd, emd(&pred, &gt, &opts.emd).unwrap() * REPORT_SCALE);
        assert_eq!(w.f1, f1_score(&pred, &gt, opts.tau).unwrap());
        let cg = gt.centroid().unwrap();
        let (pa, ga) = (pred.filter(|p| p.y > cg.y), gt.filter(|p| p.y > cg.y));
        assert_eq!(row.arch.unwrap().cd, chamfer(&pa, &ga).unwrap() * REPORT_SCALE);
        let (pb, gb) = (pred.filter(|p| p.y <= cg.y), gt.filter(|p| p.y <= cg.y));
        assert_eq!(row.body.unwrap().f1, f1_score(&pb, &gb, opts.tau).unwrap());
    }

    #[test]
    fn aggregate_mean_std() {
        let mk = |cd| EvalRow {
            whole: Some(RegionMetrics { cd, emd: 2.0 * cd, f1: 0.5 }),
            arch: None,
            body: None,
        };
        let a = aggregate(&[mk(1.0), mk(3.0)], Region::Whole).unwrap();
        assert_eq!((a.cd_mean, a.emd_mean, a.f1_mean, a.f1_std), (2.0, 4.0, 0.5, 0.0));
        assert!((a.cd_std - 2f64.sqrt()).abs() < 1e-15);
    }
}
