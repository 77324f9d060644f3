use usx_core::PointCloud;

use crate::error::{NetError, Result};
use crate::mat::Mat;
use crate::model::Model;
use crate::tape::Tape;
use crate::train::{cloud_to_mat, mat_to_cloud};

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub coarse: PointCloud,
    pub refined: PointCloud,
}

/// Completes one vertebra from its normalized partial observations. There is
/// deliberately no ground-truth argument. `noise = None` uses the posterior
/// mean and is deterministic.
pub fn complete(model: &Model, us: &PointCloud, xray: Option<&PointCloud>, noise: Option<&Mat>) -> Result<Completion> {
    model.validate()?;
    if let Some(n) = noise {
        if n.shape() != (1, model.config.latent_dim) {
            return Err(NetError::BadFeatureDim {
                expected: model.config.latent_dim,
                got: n.len(),
            });
        }
    }
    let us = cloud_to_mat(us);
    let xray = if model.config.mode.uses_xray() {
        xray.map(cloud_to_mat)
    } else {
        None
    };
    let mut t = Tape::new();
    let (c, r) = model.forward_infer(&mut t, &us, xray.as_ref(), noise)?;
    let (coarse, refined) = (t.value(c), t.value(r));
    if !coarse.is_finite() || !refined.is_finite() {
        return Err(NetError::InvalidModel("non-finite output".into()));
    }
    Ok(Completion {
        coarse: mat_to_cloud(coarse)?,
        refined: mat_to_cloud(refined)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Mode, NetConfig};
    use rand::{Rng, SeedableRng};

    fn cloud(r: &mut impl Rng, n: usize) -> PointCloud {
        PointCloud::from_xyz(&(0..n).map(|_| [r.gen(), r.gen(), r.gen()]).collect::<Vec<_>>()).unwrap()
    }

    fn cfg(mode: Mode) -> NetConfig {
        NetConfig {
            n_us: 10,
            n_xray: 5,
            n_gt: 10,
            coarse_points: 4,
            up_ratio: 2,
            feat_dim: 8,
            latent_dim: 8,
            enc_hidden: vec![8],
            dec_hidden: 8,
            width: 8,
            heads: 2,
            blocks: 1,
            ffn_mult: 1,
            mode,
            detach_coarse: false,
        }
    }

    #[test]
    fn mean_latent_is_deterministic() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = Model::new(cfg(Mode::Ours), &mut r).unwrap();
        let (u, x) = (cloud(&mut r, 10), cloud(&mut r, 5));
        let a = complete(&m, &u, Some(&x), None).unwrap();
        let b = complete(&m, &u, Some(&x), None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.refined.len(), 8);
        assert_eq!(a.coarse.len(), 4);
        let zero = complete(&m, &u, Some(&x), Some(&Mat::zeros(1, 8))).unwrap();
        assert_eq!(zero, a);
    }

    #[test]
    fn baseline_runs_without_xray_and_ignores_it() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let m = Model::new(cfg(Mode::Baseline), &mut r).unwrap();
        let (u, x) = (cloud(&mut r, 10), cloud(&mut r, 5));
        let a = complete(&m, &u, None, None).unwrap();
        assert_eq!(complete(&m, &u, Some(&x), None).unwrap(), a);
        let ours = Model::new(cfg(Mode::Ours), &mut r).unwrap();
        assert!(complete(&ours, &u, None, None).is_err());
    }

    #[test]
    fn nan_parameters_are_rejected() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut m = Model::new(cfg(Mode::Ours), &mut r).unwrap();
        m.params.get_mut(0).data[0] = f64::NAN;
        let (u, x) = (cloud(&mut r, 10), cloud(&mut r, 5));
        assert!(matches!(complete(&m, &u, Some(&x), None), Err(NetError::InvalidModel(_))));
    }
}
