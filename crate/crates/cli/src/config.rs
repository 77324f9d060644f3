//! Experiment configuration (TOML). Unknown keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use usx_core::dataset::{BuildConfig, Counts, SplitRatios, ToySpineConfig};
use usx_core::metrics::EvalOptions;
use usx_core::rng::digest_hex;
use usx_core::us_sim::UsSimSettings;
use usx_core::xray_sim::LateralProjectionConfig;
use usx_net::{Mode, NetConfig, TrainConfig};

use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Procedural toy spines.
    Toy,
    /// Meshes named on the command line.
    Meshes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub source: DataSource,
    /// Number of toy spines (each contributes `toy.levels` vertebrae).
    pub toy_spines: usize,
    pub toy: ToySpineConfig,
    pub split: SplitRatios,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            source: DataSource::Toy,
            toy_spines: 30,
            toy: ToySpineConfig::default(),
            split: SplitRatios::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JointRepSection {
    pub us_points: usize,
    pub xray_points: usize,
    pub gt_points: usize,
    /// Dense surface samples per ground-truth point before FPS.
    pub dense_factor: usize,
}

impl Default for JointRepSection {
    fn default() -> Self {
        let c = Counts::default();
        Self {
            us_points: c.us,
            xray_points: c.xray,
            gt_points: c.gt,
            dense_factor: BuildConfig::default().dense_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub coarse_points: usize,
    pub up_ratio: usize,
    pub feat_dim: usize,
    pub latent_dim: usize,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: usize,
    pub width: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ffn_mult: usize,
    pub detach_coarse: bool,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let n = NetConfig::default();
        Self {
            coarse_points: n.coarse_points,
            up_ratio: n.up_ratio,
            feat_dim: n.feat_dim,
            latent_dim: n.latent_dim,
            enc_hidden: n.enc_hidden,
            dec_hidden: n.dec_hidden,
            width: n.width,
            heads: n.heads,
            blocks: n.blocks,
            ffn_mult: n.ffn_mult,
            detach_coarse: n.detach_coarse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_train: usize,
    pub batch_eval: usize,
    pub kl_weight: f64,
    pub kl_warmup: f64,
    pub rec_weight: f64,
    pub max_steps: Option<usize>,
    pub grad_clip: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_train: t.batch_train,
            batch_eval: t.batch_eval,
            kl_weight: t.kl_weight,
            kl_warmup: t.kl_warmup,
            rec_weight: t.rec_weight,
            max_steps: t.max_steps,
            grad_clip: t.grad_clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSection {
    pub mode: Mode,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self { mode: Mode::Ours }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetSection,
    pub us_sim: UsSimSettings,
    pub xray_sim: LateralProjectionConfig,
    pub joint_rep: JointRepSection,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub eval: EvalOptions,
    pub ablation: AblationSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text).ctx(format!("config {}", p.display()))
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.build_config().validate_all()?;
        self.net_config(self.ablation.mode).validate()?;
        self.train_config().validate()?;
        if !(self.eval.tau > 0.0) {
            return Err(CliError::usage("eval.tau must be > 0"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form; recorded in every output.
    pub fn digest(&self) -> String {
        digest_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn counts(&self) -> Counts {
        Counts {
            us: self.joint_rep.us_points,
            xray: self.joint_rep.xray_points,
            gt: self.joint_rep.gt_points,
        }
    }

    pub fn build_config(&self) -> BuildConfig {
        BuildConfig {
            us: self.us_sim.clone(),
            xray: self.xray_sim,
            counts: self.counts(),
            dense_factor: self.joint_rep.dense_factor,
            split: self.dataset.split,
            seed: self.seed,
        }
    }

    pub fn net_config(&self, mode: Mode) -> NetConfig {
        let n = &self.network;
        NetConfig {
            n_us: self.joint_rep.us_points,
            n_xray: self.joint_rep.xray_points,
            n_gt: self.joint_rep.gt_points,
            coarse_points: n.coarse_points,
            up_ratio: n.up_ratio,
            feat_dim: n.feat_dim,
            latent_dim: n.latent_dim,
            enc_hidden: n.enc_hidden.clone(),
            dec_hidden: n.dec_hidden,
            width: n.width,
            heads: n.heads,
            blocks: n.blocks,
            ffn_mult: n.ffn_mult,
            mode,
            detach_coarse: n.detach_coarse,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_train: t.batch_train,
            batch_eval: t.batch_eval,
            kl_weight: t.kl_weight,
            kl_warmup: t.kl_warmup,
            rec_weight: t.rec_weight,
            max_steps: t.max_steps,
            grad_clip: t.grad_clip,
            seed: self.seed,
        }
    }
}

trait ValidateAll {
    fn validate_all(&self) -> CliResult<()>;
}

impl ValidateAll for BuildConfig {
    fn validate_all(&self) -> CliResult<()> {
        let c = self.counts;
        if c.us == 0 || c.xray == 0 || c.gt == 0 || self.dense_factor == 0 {
            return Err(CliError::usage("joint_rep point counts and dense_factor must be >= 1"));
        }
        self.us.to_scan_config()?;
        self.split.sizes(10)?;
        Ok(())
    }
}
