//! Principal component compression by deterministic subspace iteration.
//!
//! The covariance is never formed: it is applied as
//! `C·V = (Xᵀ(X·V) − μ·(nμᵀV)) / (n − 1)`, which keeps the cost linear in
//! the number of stored entries when `X` is the sparse relation matrix.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::RelationMatrix;
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize_columns, symmetric_eigen};

/// Minimal matrix interface needed to fit a PCA without densifying.
pub trait RowMatrix {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `X · V`
    fn mul(&self, v: &Array2<f64>) -> Array2<f64>;
    /// `Xᵀ · W`
    fn tmul(&self, w: &Array2<f64>) -> Array2<f64>;
    fn column_means(&self) -> Array1<f64>;
    fn sum_squares(&self) -> f64;
}

impl RowMatrix for Array2<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn mul(&self, v: &Array2<f64>) -> Array2<f64> {
        self.dot(v)
    }
    fn tmul(&self, w: &Array2<f64>) -> Array2<f64> {
        self.t().dot(w)
    }
    fn column_means(&self) -> Array1<f64> {
        self.mean_axis(Axis(0)).expect("non-empty matrix")
    }
    fn sum_squares(&self) -> f64 {
        self.iter().map(|v| v * v).sum()
    }
}

impl RowMatrix for RelationMatrix {
    fn nrows(&self) -> usize {
        RelationMatrix::nrows(self)
    }
    fn ncols(&self) -> usize {
        RelationMatrix::ncols(self)
    }
    fn mul(&self, v: &Array2<f64>) -> Array2<f64> {
        self.mul_dense(v)
    }
    fn tmul(&self, w: &Array2<f64>) -> Array2<f64> {
        self.tmul_dense(w)
    }
    fn column_means(&self) -> Array1<f64> {
        RelationMatrix::column_means(self)
    }
    fn sum_squares(&self) -> f64 {
        RelationMatrix::sum_squares(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcaOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Extra block columns beyond the requested rank.
    pub oversample: usize,
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, oversample: 8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Array1<f64>,
    /// One principal axis per column, ordered by decreasing variance.
    pub components: Array2<f64>,
    /// Variance captured by each component.
    pub variances: Array1<f64>,
    pub total_variance: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Pca {
    pub fn fit<M: RowMatrix>(x: &M, rank: usize, seed: u64, opts: &PcaOptions) -> Result<Self> {
        let (n, m) = (x.nrows(), x.ncols());
        if rank == 0 || rank >= n || rank > m {
            return Err(Error::Config(format!(
                "compressed width must satisfy 1 <= m' < n and m' <= m, got m'={rank}, n={n}, m={m}"
            )));
        }
        let mean = x.column_means();
        let denom = (n - 1) as f64;
        let total_variance = ((x.sum_squares() - n as f64 * mean.dot(&mean)) / denom).max(0.0);

        let apply_cov = |v: &Array2<f64>| -> Array2<f64> {
            // Xc·V = X·V − 1·(μᵀV)
            let mut xv = x.mul(v);
            let mu_v = mean.dot(v);
            xv -= &mu_v;
            // Xcᵀ·W = Xᵀ·W − μ·(1ᵀW)
            let mut out = x.tmul(&xv);
            let col_sums = xv.sum_axis(Axis(0));
            for (mut row, &mu) in out.rows_mut().into_iter().zip(mean.iter()) {
                row.scaled_add(-mu, &col_sums);
            }
            out / denom
        };

        let block = (rank + opts.oversample).min(m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut basis = Array2::from_shape_fn((m, block), |_| rng.sample::<f64, _>(StandardNormal));
        orthonormalize_columns(&mut basis);

        let mut iterations = 0;
        let mut converged = false;
        let (mut ritz_vals, mut ritz_vecs);
        loop {
            iterations += 1;
            let image = apply_cov(&basis);
            let projected = basis.t().dot(&image);
            let sym = (&projected + &projected.t()) * 0.5;
            let (vals, rot) = symmetric_eigen(sym.view());
            ritz_vecs = basis.dot(&rot);
            let ritz_image = image.dot(&rot);
            ritz_vals = vals;

            let scale = ritz_vals[0].abs().max(f64::MIN_POSITIVE);
            let mut worst = 0.0f64;
            for j in 0..rank {
                let r = &ritz_image.column(j) - &(&ritz_vecs.column(j) * ritz_vals[j]);
                worst = worst.max(r.dot(&r).sqrt());
            }
            if worst <= opts.tol * scale || total_variance == 0.0 {
                converged = true;
                break;
            }
            if iterations >= opts.max_iter {
                break;
            }
            basis = ritz_image;
            orthonormalize_columns(&mut basis);
        }

        let mut components = ritz_vecs.slice(ndarray::s![.., ..rank]).to_owned();
        for mut col in components.columns_mut() {
            let mut lead = 0;
            for (i, v) in col.iter().enumerate() {
                if v.abs() > col[lead].abs() {
                    lead = i;
                }
            }
            if col[lead] < 0.0 {
                col.mapv_inplace(|v| -v);
            }
        }
        let variances = ritz_vals.slice(ndarray::s![..rank]).mapv(|v| v.max(0.0));
        Ok(Self { mean, components, variances, total_variance, iterations, converged })
    }

    pub fn transform<M: RowMatrix>(&self, x: &M) -> Array2<f64> {
        let mut out = x.mul(&self.components);
        out -= &self.mean.dot(&self.components);
        out
    }

    /// Share of the total variance captured by the kept components.
    pub fn retained_variance_ratio(&self) -> f64 {
        if self.total_variance == 0.0 {
            1.0
        } else {
            (self.variances.sum() / self.total_variance).min(1.0)
        }
    }
}

/// Default compressed width: `min(64, n − 1)`.
pub fn default_compressed_width(n: usize) -> usize {
    64.min(n.saturating_sub(1)).max(1)
}

/// Projects mean-centered relation rows onto their top `rank` principal
/// axes.
pub fn compress_rows(h: &RelationMatrix, rank: usize, seed: u64) -> Result<Array2<f64>> {
    let pca = Pca::fit(h, rank, seed, &PcaOptions::default())?;
    Ok(pca.transform(h))
}
