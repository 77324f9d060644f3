//! Reverse-mode automatic differentiation over [`Mat`] values.
//!
//! A [`Tape`] records one forward pass. Parameters enter through
//! [`Tape::param`] and their gradients come back keyed by parameter index.

use crate::mat::{dot, matmul, matmul_nt, matmul_tn, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(usize, usize),
    /// `a + b` with `b` a single row broadcast over the rows of `a`.
    AddRow(usize, usize),
    /// `a * b` with `b` a single row broadcast over the rows of `a`.
    MulRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Exp(usize),
    Clamp(usize, f64, f64),
    MaxPoolRows(usize, Vec<usize>),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceRows(usize, usize),
    SliceCols(usize, usize),
    Reshape(usize),
    RepeatRows(usize, usize),
    SoftmaxRows(usize),
    Transpose(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Mat,
        rstd: Vec<f64>,
    },
    Chamfer {
        a: usize,
        b: usize,
        nn_ab: Vec<usize>,
        nn_ba: Vec<usize>,
    },
    Kl {
        mu_q: usize,
        lv_q: usize,
        mu_p: usize,
        lv_p: usize,
    },
    Sum(usize),
}

struct Node {
    value: Mat,
    op: Op,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradient of a scalar with respect to every node of the tape.
pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    pub fn wrt(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }
}

fn nearest(from: &Mat, to: &Mat) -> (Vec<usize>, f64) {
    let mut idx = Vec::with_capacity(from.rows);
    let mut total = 0.0;
    for i in 0..from.rows {
        let p = from.row(i);
        let mut best = (0, f64::INFINITY);
        for j in 0..to.rows {
            let q = to.row(j);
            let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            if d < best.1 {
                best = (j, d);
            }
        }
        idx.push(best.0);
        total += best.1;
    }
    (idx, total / from.rows as f64)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.len(), 1, "scalar() on non-scalar");
        m.data[0]
    }

    /// Hash of every discrete choice made by the recorded ops (ReLU and clamp
    /// regions, max-pool winners, chamfer neighbours). Two evaluations with
    /// equal signatures lie on the same smooth piece of the function.
    pub fn branch_signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for n in &self.nodes {
            match &n.op {
                Op::Relu(a) => self.nodes[*a].value.data.iter().for_each(|x| (*x > 0.0).hash(&mut h)),
                Op::Clamp(a, lo, hi) => self.nodes[*a].value.data.iter().for_each(|x| ((x < lo) as u8 + 2 * (x > hi) as u8).hash(&mut h)),
                Op::MaxPoolRows(_, arg) => arg.hash(&mut h),
                Op::Chamfer { nn_ab, nn_ba, .. } => {
                    nn_ab.hash(&mut h);
                    nn_ba.hash(&mut h);
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// A constant: no gradient flows out of it.
    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn param(&mut self, index: usize, m: &Mat) -> Var {
        self.push(m.clone(), Op::Param(index))
    }

    /// Same value, gradient stopped.
    pub fn detach(&mut self, a: Var) -> Var {
        let v = self.value(a).clone();
        self.constant(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = matmul(self.value(a), self.value(b));
        self.push(v, Op::MatMul(a.0, b.0))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((r.rows, r.cols), (1, x.cols), "add_row shape");
        let mut v = x.clone();
        for i in 0..v.rows {
            v.row_mut(i).iter_mut().zip(&r.data).for_each(|(p, q)| *p += q);
        }
        self.push(v, Op::AddRow(a.0, row.0))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((r.rows, r.cols), (1, x.cols), "mul_row shape");
        let mut v = x.clone();
        for i in 0..v.rows {
            v.row_mut(i).iter_mut().zip(&r.data).for_each(|(p, q)| *p *= q);
        }
        self.push(v, Op::MulRow(a.0, row.0))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shape");
        let v = Mat::from_vec(x.rows, x.cols, x.data.iter().zip(&y.data).map(|(p, q)| f(*p, *q)).collect());
        self.push(v, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p + q, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p - q, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p * q, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a.0, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a.0))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a.0, lo, hi))
    }

    /// Column-wise max over rows; ties resolve to the lowest row.
    pub fn max_pool_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        assert!(x.rows > 0, "max_pool_rows on empty");
        let mut arg = vec![0usize; x.cols];
        let mut out = x.row(0).to_vec();
        for i in 1..x.rows {
            for (j, v) in x.row(i).iter().enumerate() {
                if *v > out[j] {
                    out[j] = *v;
                    arg[j] = i;
                }
            }
        }
        self.push(Mat::from_vec(1, x.cols, out), Op::MaxPoolRows(a.0, arg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut v = Mat::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for p in parts {
                let x = self.value(*p);
                assert_eq!(x.rows, rows, "concat_cols rows");
                v.data[i * cols + off..i * cols + off + x.cols].copy_from_slice(x.row(i));
                off += x.cols;
            }
        }
        self.push(v, Op::ConcatCols(parts.iter().map(|p| p.0).collect()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        for p in parts {
            let x = self.value(*p);
            assert_eq!(x.cols, cols, "concat_rows cols");
            data.extend_from_slice(&x.data);
        }
        let rows = data.len() / cols.max(1);
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(parts.iter().map(|p| p.0).collect()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.rows, "slice_rows range");
        let v = Mat::from_vec(len, x.cols, x.data[start * x.cols..(start + len) * x.cols].to_vec());
        self.push(v, Op::SliceRows(a.0, start))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols, "slice_cols range");
        let mut v = Mat::zeros(x.rows, len);
        for i in 0..x.rows {
            v.row_mut(i).copy_from_slice(&x.row(i)[start..start + len]);
        }
        self.push(v, Op::SliceCols(a.0, start))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.len(), rows * cols, "reshape size");
        let v = Mat::from_vec(rows, cols, x.data.clone());
        self.push(v, Op::Reshape(a.0))
    }

    /// Each row repeated `r` times consecutively.
    pub fn repeat_rows(&mut self, a: Var, r: usize) -> Var {
        let x = self.value(a);
        let mut data = Vec::with_capacity(x.len() * r);
        for i in 0..x.rows {
            for _ in 0..r {
                data.extend_from_slice(x.row(i));
            }
        }
        let v = Mat::from_vec(x.rows * r, x.cols, data);
        self.push(v, Op::RepeatRows(a.0, r))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for i in 0..v.rows {
            let row = v.row_mut(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            row.iter_mut().for_each(|x| *x /= s);
            debug_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9, "softmax row does not sum to 1");
        }
        self.push(v, Op::SoftmaxRows(a.0))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a.0))
    }

    /// Per-row normalization followed by `gain` / `bias` (both 1 × cols).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xm = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        assert_eq!((g.rows, g.cols, b.rows, b.cols), (1, xm.cols, 1, xm.cols), "layer_norm shape");
        let c = xm.cols as f64;
        let mut xhat = xm.clone();
        let mut rstd = Vec::with_capacity(xm.rows);
        let mut out = xm.clone();
        for i in 0..xm.rows {
            let row = xhat.row_mut(i);
            let mean = row.iter().sum::<f64>() / c;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * r);
            rstd.push(r);
            for (j, o) in out.row_mut(i).iter_mut().enumerate() {
                *o = xhat.data[i * xm.cols + j] * g.data[j] + b.data[j];
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat,
                rstd,
            },
        )
    }

    /// Symmetric chamfer distance between two `n × 3` clouds: the sum of
    /// the mean squared nearest-neighbour distance in each direction.
    pub fn chamfer(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert!(x.cols == 3 && y.cols == 3 && x.rows > 0 && y.rows > 0, "chamfer needs non-empty n x 3");
        let (nn_ab, d_ab) = nearest(x, y);
        let (nn_ba, d_ba) = nearest(y, x);
        self.push(
            Mat::from_vec(1, 1, vec![d_ab + d_ba]),
            Op::Chamfer {
                a: a.0,
                b: b.0,
                nn_ab,
                nn_ba,
            },
        )
    }

    /// KL(q ‖ p) between diagonal Gaussians given means and log-variances.
    pub fn kl_diag(&mut self, mu_q: Var, lv_q: Var, mu_p: Var, lv_p: Var) -> Var {
        let (mq, lq, mp, lp) = (self.value(mu_q), self.value(lv_q), self.value(mu_p), self.value(lv_p));
        assert!(mq.shape() == lq.shape() && mq.shape() == mp.shape() && mq.shape() == lp.shape());
        let mut kl = 0.0;
        for k in 0..mq.len() {
            let d = mq.data[k] - mp.data[k];
            kl += 0.5 * (lp.data[k] - lq.data[k] + (lq.data[k].exp() + d * d) / lp.data[k].exp() - 1.0);
        }
        self.push(
            Mat::from_vec(1, 1, vec![kl]),
            Op::Kl {
                mu_q: mu_q.0,
                lv_q: lv_q.0,
                mu_p: mu_p.0,
                lv_p: lv_p.0,
            },
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Mat::from_vec(1, 1, vec![s]), Op::Sum(a.0))
    }

    /// Reverse sweep from scalar `out`.
    pub fn backward(&self, out: Var) -> Grads {
        assert_eq!(self.value(out).len(), 1, "backward from non-scalar");
        let mut g: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        g[out.0] = Some(Mat::from_vec(1, 1, vec![1.0]));
        fn acc(g: &mut [Option<Mat>], i: usize, d: Mat) {
            match &mut g[i] {
                Some(m) => m.add_assign(&d),
                slot => *slot = Some(d),
            }
        }
        for i in (0..=out.0).rev() {
            let Some(dy) = g[i].take() else { continue };
            let node = &self.nodes[i];
            let val = |j: usize| &self.nodes[j].value;
            match &node.op {
                Op::Leaf => continue,
                Op::Param(_) => {
                    g[i] = Some(dy);
                    continue;
                }
                Op::MatMul(a, b) => {
                    acc(&mut g, *a, matmul_nt(&dy, val(*b)));
                    acc(&mut g, *b, matmul_tn(val(*a), &dy));
                }
                Op::AddRow(a, r) => {
                    let mut dr = Mat::zeros(1, dy.cols);
                    for k in 0..dy.rows {
                        dr.data.iter_mut().zip(dy.row(k)).for_each(|(p, q)| *p += q);
                    }
                    acc(&mut g, *r, dr);
                    acc(&mut g, *a, dy);
                }
                Op::MulRow(a, r) => {
                    let (x, rv) = (val(*a), val(*r));
                    let mut dr = Mat::zeros(1, dy.cols);
                    let mut da = dy.clone();
                    for k in 0..dy.rows {
                        for j in 0..dy.cols {
                            dr.data[j] += dy.get(k, j) * x.get(k, j);
                            da.data[k * dy.cols + j] *= rv.data[j];
                        }
                    }
                    acc(&mut g, *r, dr);
                    acc(&mut g, *a, da);
                }
                Op::Add(a, b) => {
                    acc(&mut g, *b, dy.clone());
                    acc(&mut g, *a, dy);
                }
                Op::Sub(a, b) => {
                    acc(&mut g, *b, dy.map(|v| -v));
                    acc(&mut g, *a, dy);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (val(*a), val(*b));
                    let da = Mat::from_vec(dy.rows, dy.cols, dy.data.iter().zip(&y.data).map(|(d, v)| d * v).collect());
                    let db = Mat::from_vec(dy.rows, dy.cols, dy.data.iter().zip(&x.data).map(|(d, v)| d * v).collect());
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::Scale(a, s) => acc(&mut g, *a, dy.map(|v| v * s)),
                Op::Relu(a) => {
                    let x = val(*a);
                    let d = dy.data.iter().zip(&x.data).map(|(d, v)| if *v > 0.0 { *d } else { 0.0 });
                    acc(&mut g, *a, Mat::from_vec(dy.rows, dy.cols, d.collect()));
                }
                Op::Exp(a) => {
                    let d = dy.data.iter().zip(&node.value.data).map(|(d, v)| d * v);
                    acc(&mut g, *a, Mat::from_vec(dy.rows, dy.cols, d.collect()));
                }
                Op::Clamp(a, lo, hi) => {
                    let x = val(*a);
                    let d = dy
                        .data
                        .iter()
                        .zip(&x.data)
                        .map(|(d, v)| if *v > *lo && *v < *hi { *d } else { 0.0 });
                    acc(&mut g, *a, Mat::from_vec(dy.rows, dy.cols, d.collect()));
                }
                Op::MaxPoolRows(a, arg) => {
                    let x = val(*a);
                    let mut da = Mat::zeros(x.rows, x.cols);
                    for (j, r) in arg.iter().enumerate() {
                        da.data[r * x.cols + j] = dy.data[j];
                    }
                    acc(&mut g, *a, da);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let c = val(*p).cols;
                        let mut d = Mat::zeros(dy.rows, c);
                        for k in 0..dy.rows {
                            d.row_mut(k).copy_from_slice(&dy.row(k)[off..off + c]);
                        }
                        off += c;
                        acc(&mut g, *p, d);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = val(*p).len();
                        let (r, c) = val(*p).shape();
                        acc(&mut g, *p, Mat::from_vec(r, c, dy.data[off..off + n].to_vec()));
                        off += n;
                    }
                }
                Op::SliceRows(a, start) => {
                    let x = val(*a);
                    let mut da = Mat::zeros(x.rows, x.cols);
                    da.data[start * x.cols..start * x.cols + dy.len()].copy_from_slice(&dy.data);
                    acc(&mut g, *a, da);
                }
                Op::SliceCols(a, start) => {
                    let x = val(*a);
                    let mut da = Mat::zeros(x.rows, x.cols);
                    for k in 0..x.rows {
                        da.row_mut(k)[*start..start + dy.cols].copy_from_slice(dy.row(k));
                    }
                    acc(&mut g, *a, da);
                }
                Op::Reshape(a) => {
                    let (r, c) = val(*a).shape();
                    acc(&mut g, *a, Mat::from_vec(r, c, dy.data));
                }
                Op::RepeatRows(a, r) => {
                    let x = val(*a);
                    let mut da = Mat::zeros(x.rows, x.cols);
                    for k in 0..dy.rows {
                        da.row_mut(k / r).iter_mut().zip(dy.row(k)).for_each(|(p, q)| *p += q);
                    }
                    acc(&mut g, *a, da);
                }
                Op::SoftmaxRows(a) => {
                    let s = &node.value;
                    let mut da = Mat::zeros(s.rows, s.cols);
                    for k in 0..s.rows {
                        let (sr, dr) = (s.row(k), dy.row(k));
                        let inner = dot(sr, dr);
                        for (j, o) in da.row_mut(k).iter_mut().enumerate() {
                            *o = sr[j] * (dr[j] - inner);
                        }
                    }
                    acc(&mut g, *a, da);
                }
                Op::Transpose(a) => acc(&mut g, *a, dy.transpose()),
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let gv = val(*gain);
                    let c = dy.cols as f64;
                    let mut dg = Mat::zeros(1, dy.cols);
                    let mut db = Mat::zeros(1, dy.cols);
                    let mut dx = Mat::zeros(dy.rows, dy.cols);
                    for k in 0..dy.rows {
                        let (dr, xr) = (dy.row(k), xhat.row(k));
                        let dxhat: Vec<f64> = dr.iter().zip(&gv.data).map(|(d, w)| d * w).collect();
                        let s1: f64 = dxhat.iter().sum();
                        let s2: f64 = dxhat.iter().zip(xr).map(|(d, h)| d * h).sum();
                        for j in 0..dy.cols {
                            dg.data[j] += dr[j] * xr[j];
                            db.data[j] += dr[j];
                            dx.data[k * dy.cols + j] = rstd[k] / c * (c * dxhat[j] - s1 - xr[j] * s2);
                        }
                    }
                    acc(&mut g, *gain, dg);
                    acc(&mut g, *bias, db);
                    acc(&mut g, *x, dx);
                }
                Op::Chamfer { a, b, nn_ab, nn_ba } => {
                    let (x, y) = (val(*a), val(*b));
                    let s = dy.data[0];
                    let mut da = Mat::zeros(x.rows, 3);
                    let mut db = Mat::zeros(y.rows, 3);
                    let wa = 2.0 * s / x.rows as f64;
                    for (i, &j) in nn_ab.iter().enumerate() {
                        for c in 0..3 {
                            let d = wa * (x.get(i, c) - y.get(j, c));
                            da.data[i * 3 + c] += d;
                            db.data[j * 3 + c] -= d;
                        }
                    }
                    let wb = 2.0 * s / y.rows as f64;
                    for (j, &i) in nn_ba.iter().enumerate() {
                        for c in 0..3 {
                            let d = wb * (y.get(j, c) - x.get(i, c));
                            db.data[j * 3 + c] += d;
                            da.data[i * 3 + c] -= d;
                        }
                    }
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::Kl { mu_q, lv_q, mu_p, lv_p } => {
                    let s = dy.data[0];
                    let (mq, lq, mp, lp) = (val(*mu_q), val(*lv_q), val(*mu_p), val(*lv_p));
                    let (r, c) = mq.shape();
                    let n = mq.len();
                    let (mut dmq, mut dlq, mut dmp, mut dlp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
                    for k in 0..n {
                        let ip = (-lp.data[k]).exp();
                        let eq = lq.data[k].exp();
                        let d = mq.data[k] - mp.data[k];
                        dmq[k] = s * d * ip;
                        dmp[k] = -s * d * ip;
                        dlq[k] = s * 0.5 * (eq * ip - 1.0);
                        dlp[k] = s * 0.5 * (1.0 - (eq + d * d) * ip);
                    }
                    acc(&mut g, *mu_q, Mat::from_vec(r, c, dmq));
                    acc(&mut g, *lv_q, Mat::from_vec(r, c, dlq));
                    acc(&mut g, *mu_p, Mat::from_vec(r, c, dmp));
                    acc(&mut g, *lv_p, Mat::from_vec(r, c, dlp));
                }
                Op::Sum(a) => {
                    let (r, c) = val(*a).shape();
                    acc(&mut g, *a, Mat::from_vec(r, c, vec![dy.data[0]; r * c]));
                }
            }
        }
        Grads { grads: g }
    }

    /// Parameter gradients as `(param index, gradient)`, in tape order. A
    /// parameter entered twice yields two entries.
    pub fn param_grads<'a>(&'a self, grads: &'a Grads) -> impl Iterator<Item = (usize, &'a Mat)> + 'a {
        self.nodes.iter().enumerate().filter_map(move |(i, n)| match n.op {
            Op::Param(p) => grads.grads[i].as_ref().map(|g| (p, g)),
            _ => None,
        })
    }
}
