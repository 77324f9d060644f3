use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::stream_rng;
use crate::{Error, Result};

pub const MIN_SPLIT_IDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    /// Split sizes for `n` ids: floors first, then leftover slots go to the
    /// largest fractional remainders (earlier split wins ties).
    pub fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        let r = [self.train, self.val, self.test];
        let total: f64 = r.iter().sum();
        if r.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !(total > 0.0) {
            return Err(Error::InvalidConfig("split ratios must be >= 0 with positive sum".into()));
        }
        let exact: Vec<f64> = r.iter().map(|x| x / total * n as f64).collect();
        let mut sizes = [0usize; 3];
        for (s, e) in sizes.iter_mut().zip(&exact) {
            *s = e.floor() as usize;
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let mut left = n - sizes.iter().sum::<usize>();
        for k in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[*k] += 1;
            left -= 1;
        }
        Ok(sizes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub ratios: SplitRatios,
    /// In shuffled order: all train, then val, then test.
    pub samples: Vec<ManifestEntry>,
    /// Named digests (generator, configuration, per-sample payloads).
    #[serde(default)]
    pub digests: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.samples
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.id.as_str())
            .collect()
    }

    pub fn size(&self, split: Split) -> usize {
        self.samples.iter().filter(|e| e.split == split).count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Seeded shuffle followed by a contiguous train/val/test partition.
pub fn make_split(ids: &[String], ratios: SplitRatios, seed: u64) -> Result<DatasetManifest> {
    if ids.len() < MIN_SPLIT_IDS {
        return Err(Error::TooFewSamples(ids.len()));
    }
    let mut unique = ids.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() != ids.len() {
        return Err(Error::InvalidConfig("duplicate sample ids".into()));
    }
    let [ntr, nva, _] = ratios.sizes(ids.len())?;
    // shuffle a canonical order so the caller's ordering does not matter
    let mut order = unique;
    order.shuffle(&mut stream_rng(seed, "split"));
    let samples = order
        .into_iter()
        .enumerate()
        .map(|(i, id)| ManifestEntry {
            id,
            split: if i < ntr {
                Split::Train
            } else if i < ntr + nva {
                Split::Val
            } else {
                Split::Test
            },
        })
        .collect();
    Ok(DatasetManifest {
        seed,
        ratios,
        samples,
        digests: BTreeMap::new(),
    })
}
