//! Central finite-difference check of the full training loss against the
//! tape gradient, one parameter tensor at a time.

use crate::error::Result;
use crate::mat::Mat;
use crate::model::{loss, Model};
use crate::tape::Tape;
use crate::train::TrainSample;

#[derive(Debug, Clone)]
pub struct BlockCheck {
    pub name: String,
    pub entries: usize,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`, or 0 when both
    /// vanish.
    pub rel_error: f64,
    pub analytic_norm: f64,
    /// Entries left out because a `±h` probe crossed a kink (ReLU, max-pool
    /// or nearest-neighbour switch), where central differences are invalid.
    pub kinks: usize,
}

pub struct LossInputs<'a> {
    pub sample: &'a TrainSample,
    pub noise_post: &'a Mat,
    pub noise_prior: &'a Mat,
    pub kl_weight: f64,
    pub rec_weight: f64,
}

fn eval(model: &Model, x: &LossInputs) -> Result<(Tape, crate::tape::Var)> {
    let mut t = Tape::new();
    let s = x.sample;
    let f = model.forward_train(&mut t, &s.us, &s.xray, &s.gt, x.noise_post, x.noise_prior)?;
    let l = loss(&mut t, &f, x.kl_weight, x.rec_weight).total;
    Ok((t, l))
}

pub fn loss_value(model: &Model, x: &LossInputs) -> Result<f64> {
    let (t, l) = eval(model, x)?;
    Ok(t.scalar(l))
}

fn loss_and_signature(model: &Model, x: &LossInputs) -> Result<(f64, u64)> {
    let (t, l) = eval(model, x)?;
    Ok((t.scalar(l), t.branch_signature()))
}

/// Analytic parameter gradients, summed per tensor.
pub fn analytic_gradients(model: &Model, x: &LossInputs) -> Result<Vec<Mat>> {
    let (t, l) = eval(model, x)?;
    let g = t.backward(l);
    let mut out = model.params.zeros_like();
    for (p, m) in t.param_grads(&g) {
        out[p].add_assign(m);
    }
    Ok(out)
}

/// Below this norm a block's gradient counts as vanishing.
const VANISHING: f64 = 1e-10;

pub fn check_blocks(model: &Model, x: &LossInputs, h: f64) -> Result<Vec<BlockCheck>> {
    let analytic = analytic_gradients(model, x)?;
    let (_, base_sig) = loss_and_signature(model, x)?;
    let mut probe = model.clone();
    let mut out = Vec::new();
    for (i, t) in model.params.tensors().iter().enumerate() {
        let (mut a, mut num) = (Vec::new(), Vec::new());
        let mut kinks = 0;
        for k in 0..t.value.len() {
            let orig = t.value.data[k];
            probe.params.get_mut(i).data[k] = orig + h;
            let (up, s_up) = loss_and_signature(&probe, x)?;
            probe.params.get_mut(i).data[k] = orig - h;
            let (down, s_down) = loss_and_signature(&probe, x)?;
            probe.params.get_mut(i).data[k] = orig;
            if s_up != base_sig || s_down != base_sig {
                kinks += 1;
                continue;
            }
            a.push(analytic[i].data[k]);
            num.push((up - down) / (2.0 * h));
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff = a.iter().zip(&num).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let (na, nn) = (norm(&a), norm(&num));
        let denom = na.max(nn);
        out.push(BlockCheck {
            name: t.name.clone(),
            entries: t.value.len(),
            rel_error: if denom < VANISHING { 0.0 } else { diff / denom },
            analytic_norm: na,
            kinks,
        });
    }
    Ok(out)
}
