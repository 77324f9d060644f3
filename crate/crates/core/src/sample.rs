//! A vertebra sample (US partial, X-ray partial, ground truth) and its
//! on-disk layout: `us.ply`, `xray.ply`, `gt.ply`, `meta.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::io::{read_ply_cloud, write_ply_cloud, PlyWriteOptions};
use crate::geom::{Point3, PointCloud};
use crate::joint::Source;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: [f64; 3],
    pub scale: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            center: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn center_point(&self) -> Point3 {
        Point3::from(self.center)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub level_id: String,
    pub normalization: Normalization,
    /// Free-form generator provenance (generator name, seeds, digests).
    pub provenance: serde_json::Value,
}

/// All three clouds share the frame and normalization in `meta`.
#[derive(Debug, Clone, PartialEq)]
pub struct VertebraSample {
    pub us_partial: PointCloud,
    pub xray_partial: PointCloud,
    pub complete: PointCloud,
    pub meta: SampleMeta,
}

impl VertebraSample {
    pub fn level_id(&self) -> &str {
        &self.meta.level_id
    }

    /// Writes the sample directory. `comments` go into every PLY header.
    pub fn save(&self, dir: &Path, comments: &[String]) -> Result<()> {
        fs::create_dir_all(dir)?;
        let us_src = vec![Source::Us as u8; self.us_partial.len()];
        let xr_src = vec![Source::Xray as u8; self.xray_partial.len()];
        let opts = |sources| PlyWriteOptions {
            comments: comments.to_vec(),
            sources,
            colors: false,
        };
        write_ply_cloud(dir.join("us.ply"), &self.us_partial, &opts(Some(&us_src)))?;
        write_ply_cloud(dir.join("xray.ply"), &self.xray_partial, &opts(Some(&xr_src)))?;
        write_ply_cloud(dir.join("gt.ply"), &self.complete, &opts(None))?;
        let mut meta = serde_json::to_string_pretty(&self.meta)?;
        meta.push('\n');
        fs::write(dir.join("meta.json"), meta)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: SampleMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
        let us = read_ply_cloud(dir.join("us.ply"))?.cloud;
        let xr = read_ply_cloud(dir.join("xray.ply"))?.cloud;
        let gt = read_ply_cloud(dir.join("gt.ply"))?.cloud;
        if gt.is_empty() {
            return Err(Error::parse(dir.join("gt.ply"), "ground truth is empty"));
        }
        Ok(Self {
            us_partial: us,
            xray_partial: xr,
            complete: gt,
            meta,
        })
    }
}
