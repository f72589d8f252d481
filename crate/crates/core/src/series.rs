//! Row-major `n × d` observation / residual arrays.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n × d` array; row `t` holds the observation at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl SeriesMatrix {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { n, d, data: vec![0.0; n * d] }
    }

    /// Builds from row-major data.
    pub fn from_row_major(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("series dimension must be positive"));
        }
        if data.len() != n * d {
            return Err(Error::dims(format!("expected {} values for a {n}x{d} series, got {}", n * d, data.len())));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if let Some((t, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::dims(format!("row {} has {} columns, expected {d}", t + 1, r.len())));
        }
        Self::from_row_major(rows.len(), d, rows.iter().flatten().copied().collect())
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let (n, d) = m.shape();
        let mut data = Vec::with_capacity(n * d);
        for t in 0..n {
            data.extend(m.row(t).iter());
        }
        Self { n, d, data }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.d..(t + 1) * self.d]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.d..(t + 1) * self.d]
    }

    pub fn row_vector(&self, t: usize) -> DVector<f64> {
        DVector::from_column_slice(self.row(t))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Fails on the first NaN or infinite entry (1-based row/column).
    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFinite { row: k / self.d + 1, col: k % self.d + 1 }),
            None => Ok(()),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.rows() {
            for (acc, v) in m.iter_mut().zip(r) {
                *acc += v;
            }
        }
        if self.n > 0 {
            m.iter_mut().for_each(|v| *v /= self.n as f64);
        }
        m
    }

    pub fn demeaned(&self) -> Self {
        let m = self.mean();
        let mut out = self.clone();
        for t in 0..self.n {
            for (v, mu) in out.row_mut(t).iter_mut().zip(&m) {
                *v -= mu;
            }
        }
        out
    }

    /// First differences; one row shorter.
    pub fn differenced(&self) -> Self {
        let n = self.n.saturating_sub(1);
        let mut data = Vec::with_capacity(n * self.d);
        for t in 1..self.n {
            data.extend(self.row(t).iter().zip(self.row(t - 1)).map(|(a, b)| a - b));
        }
        Self { n, d: self.d, data }
    }

    /// Drops the first `k` rows.
    pub fn skip_rows(&self, k: usize) -> Self {
        let k = k.min(self.n);
        Self { n: self.n - k, d: self.d, data: self.data[k * self.d..].to_vec() }
    }

    /// Applies `x ↦ B x` to every row.
    pub fn transformed(&self, b: &DMatrix<f64>) -> Result<Self> {
        if b.ncols() != self.d {
            return Err(Error::dims("transform has wrong column count"));
        }
        let out = self.to_dmatrix() * b.transpose();
        Ok(Self::from_dmatrix(&out))
    }

    /// `n⁻¹ Σ x_t x_t'` (second moment around zero).
    pub fn second_moment(&self) -> DMatrix<f64> {
        let x = self.to_dmatrix();
        (x.transpose() * &x) / self.n.max(1) as f64
    }
}
