use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::NnlsOptions;

/// Which clustering path feeds the close sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Hyperedges, affinities, self-loops, compression and clustering.
    #[default]
    Full,
    /// As `Full` but the relation matrix is built without self-loops.
    NoSelfLoop,
    /// No hypergraph: close sets are the `h` cosine nearest neighbors.
    Pairwise,
}

/// Every adaptation hyperparameter. Serialized as JSON for config files and
/// run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// Hyperedge degree (anchor plus `k − 1` neighbors).
    pub k: usize,
    /// Hypergraph refresh interval in iterations.
    pub t_in: u64,
    /// Weight of the norm penalty in the affinity solve.
    pub alpha: f64,
    /// Close-set size.
    pub h: usize,
    /// Distance sharpness in the relation weights.
    pub gamma: f64,
    /// EMA factor of the target predictions.
    pub delta: f64,
    /// Weight of the KL regularizer.
    pub eta: f64,
    /// Decay exponent of the push weight λ.
    pub beta: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Compressed relation width; `None` means `min(64, n − 1)`.
    pub m_prime: Option<usize>,
    pub seed: u64,
    pub open_set: bool,
    pub variant: Variant,
    pub nnls: NnlsOptions,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            k: 6,
            t_in: 50,
            alpha: 2.0,
            h: 3,
            gamma: 7.0,
            delta: 0.8,
            eta: 2.0,
            beta: 0.25,
            batch_size: 64,
            lr: 1e-3,
            momentum: 0.9,
            epochs: 40,
            m_prime: None,
            seed: 0,
            open_set: false,
            variant: Variant::Full,
            nnls: NnlsOptions::default(),
        }
    }
}

impl AdaptConfig {
    /// Checks every field against a training set of `n` samples.
    pub fn validate(&self, n: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.k <= 2 {
            return fail(format!("k must exceed 2, got {}", self.k));
        }
        if self.k > n {
            return fail(format!("k={} needs at least {} samples, have {n}", self.k, self.k));
        }
        if self.h == 0 || self.h >= n {
            return fail(format!("h must satisfy 1 <= h < n, got h={}, n={n}", self.h));
        }
        if self.t_in == 0 {
            return fail("t_in must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return fail(format!("delta must lie in [0, 1), got {}", self.delta));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return fail(format!("eta must be >= 0, got {}", self.eta));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if let Some(m) = self.m_prime {
            if m == 0 || m >= n {
                return fail(format!("m_prime must satisfy 1 <= m' < n, got {m}"));
            }
        }
        Ok(())
    }

    pub fn iters_per_epoch(&self, n: usize) -> u64 {
        n.div_ceil(self.batch_size) as u64
    }

    pub fn max_iter(&self, n: usize) -> u64 {
        self.epochs as u64 * self.iters_per_epoch(n)
    }
}
