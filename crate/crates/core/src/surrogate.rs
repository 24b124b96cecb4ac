//! Linear physics-informing module: normalized density profile → potential
//! profile, fitted by minimum-norm least squares on low-bias snapshots.
//!
//! After discretization the Poisson problem for a fixed charge is linear, so
//! an affine map `φ = W ñ + b` can stand in for the inverted operator. With
//! far fewer snapshots than nodes the fit interpolates its training set and
//! `W` has rank at most `snapshots − 1`; [`LowRankMap`] exploits that when the
//! map is applied inside the training loop.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::oracle::Snapshot;

/// Added to the density before normalization, cm⁻³.
pub const DENSITY_OFFSET: f64 = 1e10;
/// Normalization scale of the density, cm⁻³.
pub const DENSITY_SCALE: f64 = 1e19;

/// `ñ = (n + 1e10) / 1e19`
pub fn normalize_density(n: &[f64]) -> Vec<f64> {
    n.iter().map(|&v| (v + DENSITY_OFFSET) / DENSITY_SCALE).collect()
}

/// Inverse of [`normalize_density`].
pub fn denormalize_density(ntilde: &[f64]) -> Vec<f64> {
    ntilde.iter().map(|&v| v * DENSITY_SCALE - DENSITY_OFFSET).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Singular values below `rcond · s_max` are discarded.
    pub rcond: f64,
    /// Tikhonov parameter; zero gives the minimum-norm pseudoinverse.
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { rcond: 1e-12, ridge: 0.0 }
    }
}

/// What the surrogate was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub biases: Vec<f64>,
    pub rank: usize,
    pub rcond: f64,
    pub ridge: f64,
}

impl TrainingMeta {
    pub fn max_bias(&self) -> f64 {
        self.biases.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_bias(&self) -> f64 {
        self.biases.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSurrogate {
    dim: usize,
    /// Row-major `dim × dim`.
    weights: Vec<f64>,
    intercept: Vec<f64>,
    pub meta: TrainingMeta,
}

impl LinearSurrogate {
    pub fn from_parts(dim: usize, weights: Vec<f64>, intercept: Vec<f64>, meta: TrainingMeta) -> Result<Self> {
        if weights.len() != dim * dim || intercept.len() != dim {
            return Err(Error::Shape(format!(
                "surrogate of dim {dim} needs {} weights and {dim} intercepts, got {} and {}",
                dim * dim,
                weights.len(),
                intercept.len()
            )));
        }
        Ok(Self { dim, weights, intercept, meta })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> &[f64] {
        &self.intercept
    }

    /// `φ = W ñ + b`
    pub fn predict_phi(&self, ntilde: &[f64]) -> Result<Vec<f64>> {
        if ntilde.len() != self.dim {
            return Err(Error::Shape(format!("expected {} inputs, got {}", self.dim, ntilde.len())));
        }
        Ok(self
            .weights
            .chunks_exact(self.dim)
            .zip(&self.intercept)
            .map(|(row, b)| b + dot(row, ntilde))
            .collect())
    }

    /// Compact factorization `W = L R` used on the hot path.
    pub fn low_rank(&self) -> LowRankMap {
        LowRankMap::from_dense(self.dim, &self.weights, self.intercept.clone())
    }
}

fn column_mean<'a>(rows: impl Iterator<Item = &'a [f64]>, p: usize) -> Vec<f64> {
    let mut acc = vec![0.0; p];
    let mut count = 0usize;
    for row in rows {
        acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        count += 1;
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    acc
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits `φ ≈ W ñ + b` to the given snapshots.
pub fn fit(snapshots: &[Snapshot], opts: &FitOptions) -> Result<LinearSurrogate> {
    let m = snapshots.len();
    if m == 0 {
        return Err(Error::Shape("need at least one snapshot to fit".into()));
    }
    let p = snapshots[0].phi.len();
    for (k, s) in snapshots.iter().enumerate() {
        if s.phi.len() != p || s.n.len() != p {
            return Err(Error::Shape(format!(
                "snapshot {k} has {} / {} values, expected {p}",
                s.phi.len(),
                s.n.len()
            )));
        }
    }

    let inputs: Vec<Vec<f64>> = snapshots.iter().map(|s| normalize_density(&s.n)).collect();
    let x_mean = column_mean(inputs.iter().map(Vec::as_slice), p);
    let y_mean = column_mean(snapshots.iter().map(|s| s.phi.as_slice()), p);

    // Columns are samples: Xcᵀ is p × m.
    let xt = DMatrix::from_fn(p, m, |i, k| inputs[k][i] - x_mean[i]);
    let yt = DMatrix::from_fn(p, m, |i, k| snapshots[k].phi[i] - y_mean[i]);

    // Xcᵀ = U S Vᵀ  ⇒  Xc⁺ = U S⁻¹ Vᵀ (transposed roles), W = Ycᵀ V S⁻¹ Uᵀ.
    let svd = xt.svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::Numeric("SVD did not return U".into()))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Numeric("SVD did not return Vᵀ".into()))?;
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut rank = 0;
    let inv: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| {
            if s > opts.rcond * s_max && s > 0.0 {
                rank += 1;
                s / (s * s + opts.ridge)
            } else {
                0.0
            }
        })
        .collect();
    // M = Ycᵀ V S⁻¹ (p × r), W = M Uᵀ.
    let mut ycv = &yt * v_t.transpose();
    for (c, &w) in inv.iter().enumerate() {
        ycv.column_mut(c).scale_mut(w);
    }
    let w = ycv * u.transpose();

    let mut weights = vec![0.0; p * p];
    for r in 0..p {
        for c in 0..p {
            weights[r * p + c] = w[(r, c)];
        }
    }
    let intercept: Vec<f64> = (0..p)
        .map(|r| y_mean[r] - dot(&weights[r * p..(r + 1) * p], &x_mean))
        .collect();

    Ok(LinearSurrogate {
        dim: p,
        weights,
        intercept,
        meta: TrainingMeta {
            biases: snapshots.iter().map(|s| s.v_gate).collect(),
            rank,
            rcond: opts.rcond,
            ridge: opts.ridge,
        },
    })
}

/// `y = L (R x) + b` with `L` (`dim × rank`) orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankMap {
    dim: usize,
    rank: usize,
    /// Column-major `dim × rank`: column `c` at `left[c*dim..(c+1)*dim]`.
    left: Vec<f64>,
    /// Row-major `rank × dim`.
    right: Vec<f64>,
    intercept: Vec<f64>,
}

impl LowRankMap {
    /// Factors a dense row-major matrix by column-pivoted modified
    /// Gram–Schmidt, stopping once the remaining columns are negligible.
    pub fn from_dense(dim: usize, weights: &[f64], intercept: Vec<f64>) -> Self {
        // Work on columns of W: col c = weights[r*dim + c].
        let mut cols: Vec<Vec<f64>> = (0..dim)
            .map(|c| (0..dim).map(|r| weights[r * dim + c]).collect())
            .collect();
        let mut norms: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
        let scale = norms.iter().cloned().fold(0.0, f64::max);
        let mut left: Vec<f64> = Vec::new();
        let mut rank = 0;
        if scale > 0.0 {
            loop {
                let (best, &best_norm) = norms
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                    .unwrap();
                if best_norm <= 1e-26 * scale || rank == dim {
                    break;
                }
                let mut q = cols[best].clone();
                // Re-orthogonalize against the basis so far.
                for c in 0..rank {
                    let basis = &left[c * dim..(c + 1) * dim];
                    let proj = dot(basis, &q);
                    q.iter_mut().zip(basis).for_each(|(v, b)| *v -= proj * b);
                }
                let nq = dot(&q, &q).sqrt();
                if nq == 0.0 {
                    norms[best] = 0.0;
                    continue;
                }
                q.iter_mut().for_each(|v| *v /= nq);
                for (col, norm) in cols.iter_mut().zip(norms.iter_mut()) {
                    let proj = dot(&q, col);
                    col.iter_mut().zip(&q).for_each(|(v, b)| *v -= proj * b);
                    *norm = dot(col, col);
                }
                left.extend_from_slice(&q);
                rank += 1;
            }
        }
        // R = Lᵀ W, row-major rank × dim.
        let mut right = vec![0.0; rank * dim];
        for r in 0..dim {
            let wrow = &weights[r * dim..(r + 1) * dim];
            for c in 0..rank {
                let l = left[c * dim + r];
                if l != 0.0 {
                    right[c * dim..(c + 1) * dim]
                        .iter_mut()
                        .zip(wrow)
                        .for_each(|(acc, w)| *acc += l * w);
                }
            }
        }
        Self { dim, rank, left, right, intercept }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `y = W x + b`
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut z = vec![0.0; self.rank];
        for (c, zc) in z.iter_mut().enumerate() {
            *zc = dot(&self.right[c * self.dim..(c + 1) * self.dim], x);
        }
        y.copy_from_slice(&self.intercept);
        for (c, zc) in z.iter().enumerate() {
            let col = &self.left[c * self.dim..(c + 1) * self.dim];
            y.iter_mut().zip(col).for_each(|(v, l)| *v += zc * l);
        }
    }

    /// `gx += Wᵀ gy`
    pub fn adjoint_accumulate(&self, gy: &[f64], gx: &mut [f64]) {
        for c in 0..self.rank {
            let zc = dot(&self.left[c * self.dim..(c + 1) * self.dim], gy);
            gx.iter_mut()
                .zip(&self.right[c * self.dim..(c + 1) * self.dim])
                .for_each(|(g, r)| *g += zc * r);
        }
    }
}

/// Coefficient of determination over every (snapshot, node) pair.
pub fn r_squared(predicted: &[Vec<f64>], actual: &[Vec<f64>]) -> f64 {
    let count: usize = actual.iter().map(Vec::len).sum();
    let mean = actual.iter().flatten().sum::<f64>() / count as f64;
    let ss_tot: f64 = actual.iter().flatten().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = predicted
        .iter()
        .flatten()
        .zip(actual.iter().flatten())
        .map(|(p, a)| (p - a).powi(2))
        .sum();
    1.0 - ss_res / ss_tot
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn normalization_values() {
        assert_eq!(normalize_density(&[0.0]), vec![1e-9]);
        let close = |a: f64, b: f64| (a - b).abs() <= 2.0 * f64::EPSILON * b;
        assert!(close(normalize_density(&[1e19])[0], 1.0 + 1e-9));
        assert!(close(normalize_density(&[1e20])[0], 10.000000001));
        let back = denormalize_density(&normalize_density(&[0.0, 3e17]));
        assert_eq!(back[0], 0.0);
        assert!((back[1] / 3e17 - 1.0).abs() < 1e-15);
    }

    fn synthetic(m: usize, p: usize, seed: u64) -> Vec<Snapshot> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..p * p).map(|_| rng.random_range(-1.0..1.0)).collect();
        (0..m)
            .map(|k| {
                let n: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1e19)).collect();
                let nt = normalize_density(&n);
                let phi = (0..p).map(|r| 0.1 * dot(&a[r * p..(r + 1) * p], &nt) + 0.2).collect();
                Snapshot {
                    v_gate: k as f64 * 0.01,
                    phi,
                    n,
                    net_charge: vec![0.0; p],
                    converged: true,
                    residual_norm: 0.0,
                    iterations: 0,
                }
            })
            .collect()
    }

    #[test]
    fn interpolates_training_set() {
        let snaps = synthetic(6, 20, 1);
        let s = fit(&snaps, &FitOptions::default()).unwrap();
        assert_eq!(s.meta.rank, 5);
        for snap in &snaps {
            let pred = s.predict_phi(&normalize_density(&snap.n)).unwrap();
            for (a, b) in pred.iter().zip(&snap.phi) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn duplicate_snapshot_changes_nothing() {
        let snaps = synthetic(6, 20, 2);
        let base = fit(&snaps, &FitOptions::default()).unwrap();
        let mut dup = snaps.clone();
        dup.push(snaps[3].clone());
        let other = fit(&dup, &FitOptions::default()).unwrap();
        for snap in &snaps {
            let x = normalize_density(&snap.n);
            let a = base.predict_phi(&x).unwrap();
            let b = other.predict_phi(&x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn single_snapshot_gives_constant_map() {
        let snaps = synthetic(1, 5, 3);
        let s = fit(&snaps, &FitOptions::default()).unwrap();
        assert_eq!(s.meta.rank, 0);
        assert!(s.weights().iter().all(|&w| w == 0.0));
        assert_eq!(s.predict_phi(&[7.0; 5]).unwrap(), snaps[0].phi);
    }

    #[test]
    fn shape_errors() {
        assert!(fit(&[], &FitOptions::default()).is_err());
        let mut snaps = synthetic(3, 5, 3);
        snaps[1].phi.pop();
        assert!(matches!(fit(&snaps, &FitOptions::default()), Err(Error::Shape(_))));
        let s = fit(&synthetic(3, 5, 4), &FitOptions::default()).unwrap();
        assert!(s.predict_phi(&[1.0; 4]).is_err());
    }

    #[test]
    fn low_rank_matches_dense_and_adjoint() {
        let snaps = synthetic(5, 30, 5);
        let s = fit(&snaps, &FitOptions::default()).unwrap();
        let lr = s.low_rank();
        assert_eq!(lr.rank(), 4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..3.0)).collect();
        let dense = s.predict_phi(&x).unwrap();
        let mut y = vec![0.0; 30];
        lr.apply(&x, &mut y);
        for (a, b) in y.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        let g: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut gx = vec![0.0; 30];
        lr.adjoint_accumulate(&g, &mut gx);
        let w = s.weights();
        for c in 0..30 {
            let expect: f64 = (0..30).map(|r| w[r * 30 + c] * g[r]).sum();
            assert!((gx[c] - expect).abs() < 1e-10 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn ridge_shrinks_weights() {
        let snaps = synthetic(6, 20, 6);
        let a = fit(&snaps, &FitOptions::default()).unwrap();
        let b = fit(&snaps, &FitOptions { ridge: 1e3, ..Default::default() }).unwrap();
        let na: f64 = a.weights().iter().map(|v| v * v).sum();
        let nb: f64 = b.weights().iter().map(|v| v * v).sum();
        assert!(nb < na);
    }
}
