//! Adam training with KL warm-up, per-epoch validation and best-val
//! snapshotting.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use usx_core::rng::stream_rng;
use usx_core::sample::VertebraSample;
use usx_core::PointCloud;

use crate::error::{NetError, Result};
use crate::mat::Mat;
use crate::model::{loss, Model, NetConfig};
use crate::tape::Tape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_train: usize,
    /// Chunk size for validation passes.
    pub batch_eval: usize,
    /// Final KL weight λ.
    pub kl_weight: f64,
    /// Fraction of all steps over which λ ramps linearly from 0.
    pub kl_warmup: f64,
    /// Weight of the prior-path complete-shape reconstruction term.
    pub rec_weight: f64,
    /// Optional hard cap on optimizer steps.
    pub max_steps: Option<usize>,
    /// Global gradient-norm clip, if any.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1e-4,
            batch_train: 4,
            batch_eval: 2,
            kl_weight: 0.01,
            kl_warmup: 0.1,
            rec_weight: 1.0,
            max_steps: None,
            grad_clip: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.batch_train > 0
            && self.batch_eval > 0
            && self.kl_weight >= 0.0
            && (0.0..=1.0).contains(&self.kl_warmup)
            && self.rec_weight >= 0.0
            && self.grad_clip.map_or(true, |c| c > 0.0);
        if !ok {
            return Err(NetError::InvalidConfig("train: values out of range".into()));
        }
        Ok(())
    }

    fn total_steps(&self, n_train: usize) -> usize {
        let per_epoch = n_train.div_ceil(self.batch_train);
        let all = per_epoch * self.epochs;
        self.max_steps.map_or(all, |m| m.min(all))
    }

    /// λ at a 0-based optimizer step.
    pub fn kl_weight_at(&self, step: usize, total_steps: usize) -> f64 {
        let warm = (self.kl_warmup * total_steps as f64).ceil();
        if warm <= 0.0 {
            return self.kl_weight;
        }
        self.kl_weight * ((step + 1) as f64 / warm).min(1.0)
    }
}

/// One normalized sample as network-ready matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub id: String,
    pub us: Mat,
    pub xray: Mat,
    pub gt: Mat,
}

pub fn cloud_to_mat(c: &PointCloud) -> Mat {
    Mat::from_rows(&c.to_xyz())
}

pub fn mat_to_cloud(m: &Mat) -> Result<PointCloud> {
    let xyz: Vec<[f64; 3]> = (0..m.rows).map(|i| [m.get(i, 0), m.get(i, 1), m.get(i, 2)]).collect();
    Ok(PointCloud::from_xyz(&xyz)?)
}

impl TrainSample {
    pub fn from_sample(s: &VertebraSample) -> Self {
        Self {
            id: s.meta.level_id.clone(),
            us: cloud_to_mat(&s.us_partial),
            xray: cloud_to_mat(&s.xray_partial),
            gt: cloud_to_mat(&s.complete),
        }
    }

    fn check(&self, c: &NetConfig) -> Result<()> {
        for (what, m, n) in [("us", &self.us, c.n_us), ("xray", &self.xray, c.n_xray), ("gt", &self.gt, c.n_gt)] {
            if m.rows != n || m.cols != 3 {
                return Err(NetError::BadInputSize {
                    what,
                    expected: n,
                    got: m.rows,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub kl_weight: f64,
    pub train_loss: f64,
    pub train_cd_refined: f64,
    pub train_cd_coarse: f64,
    pub train_kl: f64,
    pub val_cd: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation epoch.
    pub model: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

struct Adam {
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(model: &Model) -> Self {
        Self {
            m: model.params.zeros_like(),
            v: model.params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut Model, grads: &[Mat], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (i, g) in grads.iter().enumerate() {
            let p = model.params.get_mut(i);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..g.len() {
                let gk = g.data[k];
                m.data[k] = BETA1 * m.data[k] + (1.0 - BETA1) * gk;
                v.data[k] = BETA2 * v.data[k] + (1.0 - BETA2) * gk * gk;
                let mh = m.data[k] / c1;
                let vh = v.data[k] / c2;
                p.data[k] -= lr * mh / (vh.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// A `1 x d` standard normal latent sample.
pub fn standard_noise(rng: &mut impl Rng, d: usize) -> Mat {
    Mat::from_vec(1, d, (0..d).map(|_| rng.sample(StandardNormal)).collect())
}

/// Mean refined-output chamfer distance over `samples` using the posterior
/// mean latent.
pub fn evaluate_cd(model: &Model, samples: &[TrainSample], chunk: usize) -> Result<f64> {
    let mut total = 0.0;
    for batch in samples.chunks(chunk.max(1)) {
        for s in batch {
            let mut t = Tape::new();
            let (_, refined) = model.forward_infer(&mut t, &s.us, Some(&s.xray), None)?;
            let gt = t.constant(s.gt.clone());
            let cd = t.chamfer(refined, gt);
            total += t.scalar(cd);
        }
    }
    Ok(total / samples.len() as f64)
}

/// Initializes from `cfg.seed` and trains.
pub fn train(net: &NetConfig, train_set: &[TrainSample], val_set: &[TrainSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let model = Model::new(net.clone(), &mut stream_rng(cfg.seed, "init"))?;
    train_from(model, train_set, val_set, cfg)
}

pub fn train_from(
    mut model: Model,
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NetError::InvalidConfig("train and val splits must be non-empty".into()));
    }
    for s in train_set.iter().chain(val_set) {
        s.check(&model.config)?;
    }
    let total_steps = cfg.total_steps(train_set.len());
    let d = model.config.latent_dim;
    let mut adam = Adam::new(&model);
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut step = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        if step >= total_steps {
            break;
        }
        order.shuffle(&mut stream_rng(cfg.seed, &format!("epoch-{epoch}")));
        let (mut sum_loss, mut sum_cd, mut sum_cdc, mut sum_kl, mut seen) = (0.0, 0.0, 0.0, 0.0, 0usize);
        let mut lambda = 0.0;
        for batch in order.chunks(cfg.batch_train) {
            if step >= total_steps {
                break;
            }
            lambda = cfg.kl_weight_at(step, total_steps);
            let mut grads = model.params.zeros_like();
            for (slot, &i) in batch.iter().enumerate() {
                let s = &train_set[i];
                let mut rng = stream_rng(cfg.seed, &format!("noise-{step}-{slot}"));
                let (np, nq) = (standard_noise(&mut rng, d), standard_noise(&mut rng, d));
                let mut t = Tape::new();
                let f = model.forward_train(&mut t, &s.us, &s.xray, &s.gt, &np, &nq)?;
                let terms = loss(&mut t, &f, lambda, cfg.rec_weight);
                let l = t.scalar(terms.total);
                if !l.is_finite() {
                    return Err(diverged(epoch, step, best));
                }
                sum_loss += l;
                sum_cd += t.scalar(terms.cd_refined);
                sum_cdc += t.scalar(terms.cd_coarse);
                sum_kl += t.scalar(terms.kl);
                seen += 1;
                let g = t.backward(terms.total);
                for (p, gm) in t.param_grads(&g) {
                    grads[p].add_assign(gm);
                }
            }
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.data.iter_mut().for_each(|v| *v *= inv));
            if let Some(clip) = cfg.grad_clip {
                let norm = grads.iter().map(Mat::sq_norm).sum::<f64>().sqrt();
                if norm > clip {
                    let s = clip / norm;
                    grads.iter_mut().for_each(|g| g.data.iter_mut().for_each(|v| *v *= s));
                }
            }
            adam.step(&mut model, &grads, cfg.learning_rate);
            step += 1;
        }
        let mut snapshot = model.clone();
        snapshot.params.round_f32();
        let val_cd = evaluate_cd(&snapshot, val_set, cfg.batch_eval)?;
        if !val_cd.is_finite() || !snapshot.params.is_finite() {
            return Err(diverged(epoch, step, best));
        }
        let n = seen.max(1) as f64;
        let entry = EpochLog {
            epoch,
            steps: step,
            kl_weight: lambda,
            train_loss: sum_loss / n,
            train_cd_refined: sum_cd / n,
            train_cd_coarse: sum_cdc / n,
            train_kl: sum_kl / n,
            val_cd,
        };
        log::debug!(
            "epoch {epoch} step {step} loss {:.6} cd {:.6} val {:.6}",
            entry.train_loss,
            entry.train_cd_refined,
            val_cd
        );
        log.push(entry);
        if best.as_ref().map_or(true, |(b, _, _)| val_cd < *b) {
            best = Some((val_cd, epoch, snapshot));
        }
    }
    let (_, best_epoch, model) = best.ok_or_else(|| NetError::InvalidConfig("no training step ran".into()))?;
    Ok(TrainOutcome { model, best_epoch, log })
}

fn diverged(epoch: usize, step: usize, best: Option<(f64, usize, Model)>) -> NetError {
    NetError::TrainingDiverged {
        epoch,
        step,
        last_good: best.map(|(_, _, m)| Box::new(m)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;
    use rand::SeedableRng;

    fn tiny_net() -> NetConfig {
        NetConfig {
            n_us: 32,
            n_xray: 16,
            n_gt: 48,
            coarse_points: 16,
            up_ratio: 3,
            feat_dim: 16,
            latent_dim: 16,
            enc_hidden: vec![16],
            dec_hidden: 32,
            width: 16,
            heads: 2,
            blocks: 1,
            ffn_mult: 2,
            mode: Mode::Ours,
            detach_coarse: false,
        }
    }

    /// A ring with a bump, sampled at `n` points, plus its lateral shadow.
    fn sample(id: &str, shift: f64) -> TrainSample {
        let ring = |n: usize, f: &dyn Fn(f64) -> [f64; 3]| {
            Mat::from_rows(&(0..n).map(|i| f(i as f64 / n as f64 * std::f64::consts::TAU)).collect::<Vec<_>>())
        };
        let shape = move |a: f64| [0.3 * a.cos(), 0.3 * a.sin() + shift, 0.1 * (3.0 * a).sin()];
        TrainSample {
            id: id.into(),
            us: ring(32, &|a| {
                let p = shape(a * 0.5);
                [p[0], p[1], p[2]]
            }),
            xray: ring(16, &|a| {
                let p = shape(a);
                [0.0, p[1], p[2]]
            }),
            gt: ring(48, &shape),
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bit_exact() {
        let m = Model::new(tiny_net(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = vec![sample("a", 0.0)];
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            ..Default::default()
        };
        let out = train_from(m.clone(), &s, &s, &cfg).unwrap();
        assert_eq!(out.model.params, m.params);
    }

    #[test]
    fn same_seed_same_log_and_weights() {
        let s = vec![sample("a", 0.0), sample("b", 0.1)];
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 1e-3,
            batch_train: 2,
            seed: 4,
            ..Default::default()
        };
        let a = train(&tiny_net(), &s, &s, &cfg).unwrap();
        let b = train(&tiny_net(), &s, &s, &cfg).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn one_sample_overfits() {
        let s = vec![sample("a", 0.05)];
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 3e-3,
            batch_train: 1,
            seed: 2,
            ..Default::default()
        };
        let out = train(&tiny_net(), &s, &s, &cfg).unwrap();
        let first = out.log[0].train_cd_refined;
        let last = out.log.last().unwrap().train_cd_refined;
        assert!(last <= 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn kl_warmup_is_linear_then_flat() {
        let cfg = TrainConfig {
            kl_weight: 0.01,
            kl_warmup: 0.1,
            ..Default::default()
        };
        assert!((cfg.kl_weight_at(0, 100) - 0.001).abs() < 1e-15);
        assert!((cfg.kl_weight_at(4, 100) - 0.005).abs() < 1e-15);
        assert_eq!(cfg.kl_weight_at(9, 100), 0.01);
        assert_eq!(cfg.kl_weight_at(50, 100), 0.01);
    }

    #[test]
    fn wrong_sizes_rejected() {
        let mut s = sample("a", 0.0);
        s.us = Mat::zeros(5, 3);
        let r = train(&tiny_net(), &[s.clone()], &[s], &TrainConfig::default());
        assert!(matches!(r, Err(NetError::BadInputSize { what: "us", .. })));
    }
}
