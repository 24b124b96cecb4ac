//! Symmetric positive-definite banded matrices with an in-place Cholesky
//! factorization.

use crate::error::{Error, Result};

/// Lower band of an SPD matrix: `data[k * (bw + 1) + d] = A[k][k - d]`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `v` to `A[r][c]` (and implicitly to `A[c][r]`).
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        let d = r - c;
        debug_assert!(d <= self.bw, "entry ({r}, {c}) outside band {}", self.bw);
        self.data[r * (self.bw + 1) + d] += v;
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        let d = r - c;
        if d > self.bw {
            0.0
        } else {
            self.data[r * (self.bw + 1) + d]
        }
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            let row = &self.data[r * (self.bw + 1)..(r + 1) * (self.bw + 1)];
            y[r] += row[0] * x[r];
            for d in 1..=self.bw.min(r) {
                let c = r - d;
                y[r] += row[d] * x[c];
                y[c] += row[d] * x[r];
            }
        }
        y
    }

    /// Factors `A = L Lᵀ` in place.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let w = self.bw + 1;
        for k in 0..self.n {
            // L[k][k-d] for d = bw..1, then the diagonal.
            let lo = k.saturating_sub(self.bw);
            for c in lo..k {
                let mut s = self.data[k * w + (k - c)];
                let start = lo.max(c.saturating_sub(self.bw));
                for m in start..c {
                    s -= self.data[k * w + (k - m)] * self.data[c * w + (c - m)];
                }
                self.data[k * w + (k - c)] = s / self.data[c * w];
            }
            let mut diag = self.data[k * w];
            for m in lo..k {
                let l = self.data[k * w + (k - m)];
                diag -= l * l;
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::Numeric(format!(
                    "banded Cholesky: non-positive pivot {diag:e} at row {k}"
                )));
            }
            self.data[k * w] = diag.sqrt();
        }
        Ok(BandedCholesky { inner: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    inner: BandedSpd,
}

impl BandedCholesky {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let BandedSpd { n, bw, ref data } = self.inner;
        let w = bw + 1;
        for k in 0..n {
            let mut s = b[k];
            for m in k.saturating_sub(bw)..k {
                s -= data[k * w + (k - m)] * b[m];
            }
            b[k] = s / data[k * w];
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for r in k + 1..(k + bw + 1).min(n) {
                s -= data[r * w + (r - k)] * b[r];
            }
            b[k] = s / data[k * w];
        }
    }
}
