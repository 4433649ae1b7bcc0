//! Row-major `f64` matrix with the handful of kernels the models need.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Row blocks below this many multiply-adds run on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

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
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn row_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::from_vec(1, n, data)
    }

    pub fn randn(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::from_vec(rows, cols, data)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat::from_vec(self.rows, self.cols, self.data.iter().map(|x| x * s).collect())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Mat::zeros(self.rows, other.cols);
        let n = other.cols;
        let kernel = |(i, crow): (usize, &mut [f64])| {
            let arow = self.row(i);
            for (k, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                for (c, &b) in crow.iter_mut().zip(brow) {
                    *c += a * b;
                }
            }
        };
        if self.rows * self.cols * n >= PAR_THRESHOLD && n > 0 {
            out.data.par_chunks_mut(n).enumerate().for_each(kernel);
        } else if n > 0 {
            out.data.chunks_mut(n).enumerate().for_each(kernel);
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_nt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_nt inner dimension");
        let mut out = Mat::zeros(self.rows, other.rows);
        let m = other.rows;
        let kernel = |(i, crow): (usize, &mut [f64])| {
            let arow = self.row(i);
            for (j, c) in crow.iter_mut().enumerate() {
                *c = dot(arow, other.row(j));
            }
        };
        if self.rows * self.cols * m >= PAR_THRESHOLD && m > 0 {
            out.data.par_chunks_mut(m).enumerate().for_each(kernel);
        } else if m > 0 {
            out.data.chunks_mut(m).enumerate().for_each(kernel);
        }
        out
    }

    /// `self^T * other`.
    pub fn matmul_tn(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "matmul_tn inner dimension");
        let n = other.cols;
        let mut out = Mat::zeros(self.cols, n);
        let kernel = |(i, crow): (usize, &mut [f64])| {
            for k in 0..self.rows {
                let a = self.data[k * self.cols + i];
                if a == 0.0 {
                    continue;
                }
                for (c, &b) in crow.iter_mut().zip(other.row(k)) {
                    *c += a * b;
                }
            }
        };
        if self.rows * self.cols * n >= PAR_THRESHOLD && n > 0 {
            out.data.par_chunks_mut(n).enumerate().for_each(kernel);
        } else if n > 0 {
            out.data.chunks_mut(n).enumerate().for_each(kernel);
        }
        out
    }

    /// Column sums as a `1 x cols` matrix.
    pub fn col_sums(&self) -> Mat {
        let mut out = Mat::zeros(1, self.cols);
        for r in self.data.chunks_exact(self.cols.max(1)) {
            out.data.iter_mut().zip(r).for_each(|(o, x)| *o += x);
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
