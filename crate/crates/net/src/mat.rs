//! Dense row-major f64 matrices and the few kernels the tape needs.

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::from_vec shape");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[[f64; 3]]) -> Self {
        Self::from_vec(rows.len(), 3, rows.iter().flatten().copied().collect())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(self.rows, self.cols, self.data.iter().map(|v| f(*v)).collect())
    }

    pub fn add_assign(&mut self, o: &Mat) {
        debug_assert_eq!(self.shape(), o.shape());
        self.data.iter_mut().zip(&o.data).for_each(|(a, b)| *a += b);
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `a · b`
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.rows, "matmul inner dims");
    let mut c = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let ci = &mut c.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            axpy(ci, aik, b.row(k));
        }
    }
    c
}

/// `aᵀ · b`
pub fn matmul_tn(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.rows, b.rows, "matmul_tn inner dims");
    let mut c = Mat::zeros(a.cols, b.cols);
    for i in 0..a.rows {
        let bi = b.row(i);
        for (p, &aip) in a.row(i).iter().enumerate() {
            axpy(&mut c.data[p * b.cols..(p + 1) * b.cols], aip, bi);
        }
    }
    c
}

/// `a · bᵀ`
pub fn matmul_nt(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.cols, "matmul_nt inner dims");
    let mut c = Mat::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ai = a.row(i);
        for j in 0..b.rows {
            c.data[i * b.rows + j] = dot(ai, b.row(j));
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Mat, b: &Mat) -> Mat {
        let mut c = Mat::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut s = 0.0;
                for k in 0..a.cols {
                    s += a.get(i, k) * b.get(k, j);
                }
                c.data[i * b.cols + j] = s;
            }
        }
        c
    }

    fn filled(r: usize, c: usize, seed: f64) -> Mat {
        Mat::from_vec(r, c, (0..r * c).map(|i| ((i as f64 + seed) * 0.731).sin()).collect())
    }

    #[test]
    fn kernels_match_naive_product() {
        let a = filled(7, 5, 0.3);
        let b = filled(5, 9, 1.1);
        let close = |x: &Mat, y: &Mat| x.data.iter().zip(&y.data).all(|(p, q)| (p - q).abs() < 1e-12);
        assert!(close(&matmul(&a, &b), &naive(&a, &b)));
        assert!(close(&matmul_tn(&a.transpose(), &b), &naive(&a, &b)));
        assert!(close(&matmul_nt(&a, &b.transpose()), &naive(&a, &b)));
    }
}
