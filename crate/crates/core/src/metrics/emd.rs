//! Earth Mover's Distance between equal-size clouds with uniform weights:
//! exact assignment (shortest augmenting path Hungarian) up to a size
//! threshold, entropic optimal transport with epsilon annealing above it.

use serde::{Deserialize, Serialize};

use crate::geom::PointCloud;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmdMode {
    Exact,
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmdOptions {
    /// Largest size solved exactly.
    pub exact_threshold: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub max_iterations: usize,
}

impl Default for EmdOptions {
    fn default() -> Self {
        Self {
            exact_threshold: 512,
            eps_start: 0.05,
            eps_end: 0.002,
            max_iterations: 500,
        }
    }
}

impl EmdOptions {
    pub fn mode_for(&self, n: usize) -> EmdMode {
        if n <= self.exact_threshold {
            EmdMode::Exact
        } else {
            EmdMode::Approximate
        }
    }
}

fn cost_matrix(a: &PointCloud, b: &PointCloud) -> Vec<f64> {
    let n = a.len();
    let mut c = vec![0.0; n * n];
    for (i, p) in a.points().iter().enumerate() {
        for (j, q) in b.points().iter().enumerate() {
            c[i * n + j] = (p - q).norm();
        }
    }
    c
}

/// Mean Euclidean matching cost under the optimal (or, above the threshold,
/// a feasible entropic) transport plan.
pub fn emd(a: &PointCloud, b: &PointCloud, opts: &EmdOptions) -> Result<f64> {
    emd_with_mode(a, b, opts.mode_for(a.len()), opts)
}

pub fn emd_with_mode(a: &PointCloud, b: &PointCloud, mode: EmdMode, opts: &EmdOptions) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let n = a.len();
    let cost = cost_matrix(a, b);
    Ok(match mode {
        EmdMode::Exact => {
            let assignment = hungarian(&cost, n);
            assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64
        }
        EmdMode::Approximate => sinkhorn_cost(&cost, n, opts),
    })
}

/// Minimum-cost perfect matching on a dense `n x n` row-major cost matrix.
/// Returns `assignment[row] = column`.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    // 1-based potentials formulation; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn with geometric epsilon annealing, followed by
/// rounding onto the transport polytope so the returned cost is that of a
/// feasible plan (hence never below the exact optimum).
fn sinkhorn_cost(cost: &[f64], n: usize, opts: &EmdOptions) -> f64 {
    let log_w = -(n as f64).ln();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let stages = 8usize;
    let per_stage = (opts.max_iterations / stages).max(1);
    let ratio = (opts.eps_end / opts.eps_start).powf(1.0 / (stages - 1) as f64);
    let mut eps = opts.eps_start;
    for stage in 0..stages {
        for _ in 0..per_stage {
            for i in 0..n {
                let row = &cost[i * n..(i + 1) * n];
                f[i] = -eps * log_sum_exp((0..n).map(|j| (g[j] - row[j]) / eps + log_w));
            }
            for j in 0..n {
                g[j] = -eps * log_sum_exp((0..n).map(|i| (f[i] - cost[i * n + j]) / eps + log_w));
            }
        }
        if stage + 1 < stages {
            eps *= ratio;
        }
    }
    let w = 1.0 / n as f64;
    let mut plan: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            ((f[i] + g[j] - cost[k]) / eps + 2.0 * log_w).exp()
        })
        .collect();
    round_to_polytope(&mut plan, n, w);
    plan.iter().zip(cost).map(|(p, c)| p * c).sum()
}

/// Projects a nonnegative plan onto couplings with uniform marginals `w`.
fn round_to_polytope(plan: &mut [f64], n: usize, w: f64) {
    for i in 0..n {
        let r: f64 = plan[i * n..(i + 1) * n].iter().sum();
        if r > w {
            let s = w / r;
            plan[i * n..(i + 1) * n].iter_mut().for_each(|x| *x *= s);
        }
    }
    for j in 0..n {
        let c: f64 = (0..n).map(|i| plan[i * n + j]).sum();
        if c > w {
            let s = w / c;
            (0..n).for_each(|i| plan[i * n + j] *= s);
        }
    }
    let err_r: Vec<f64> = (0..n).map(|i| (w - plan[i * n..(i + 1) * n].iter().sum::<f64>()).max(0.0)).collect();
    let err_c: Vec<f64> = (0..n).map(|j| (w - (0..n).map(|i| plan[i * n + j]).sum::<f64>()).max(0.0)).collect();
    let total: f64 = err_r.iter().sum();
    if total > 0.0 {
        for i in 0..n {
            for j in 0..n {
                plan[i * n + j] += err_r[i] * err_c[j] / total;
            }
        }
    }
}
