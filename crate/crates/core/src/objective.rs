//! Adaptive relation loss, λ schedule, EMA target predictions and the KL
//! regularizer, with gradients with respect to each anchor prediction.
//!
//! Neighbor and background predictions, the `(1 − d^γ)` weights and the EMA
//! targets are all constants for differentiation: only `p_i` carries a
//! gradient in the terms anchored at sample `i`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::ClusterAssignment;

/// Probabilities are floored here before logs and divisions.
pub const PROB_FLOOR: f64 = 1e-12;

/// `‖p_i − p_j‖₂ / √2`, clamped to `[0, 1]`.
pub fn prediction_distance(p_i: ArrayView1<f64>, p_j: ArrayView1<f64>) -> f64 {
    let diff = &p_i - &p_j;
    (diff.dot(&diff).sqrt() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// `1 − d^γ`.
pub fn relation_weight(distance: f64, gamma: f64) -> f64 {
    1.0 - distance.powf(gamma)
}

/// `λ = (1 + 10·iter/max_iter)^(−β)`.
pub fn lambda_schedule(iter: u64, max_iter: u64, beta: f64) -> Result<f64> {
    if max_iter == 0 {
        return Err(Error::Config("max_iter must be positive".into()));
    }
    if iter > max_iter {
        return Err(Error::Config(format!("iteration {iter} beyond max_iter {max_iter}")));
    }
    if !(beta >= 0.0) {
        return Err(Error::Config(format!("beta must be >= 0, got {beta}")));
    }
    Ok((1.0 + 10.0 * iter as f64 / max_iter as f64).powf(-beta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveTerm {
    /// `−Σ_{j∈A} w_ij p_iᵀp_j`
    pub pull: f64,
    /// `λ Σ_{k∈B} w_ik p_iᵀp_k`
    pub push: f64,
    pub grad: Array1<f64>,
}

impl AdaptiveTerm {
    pub fn value(&self) -> f64 {
        self.pull + self.push
    }
}

/// Pull/push loss of one anchor prediction against its close set (rows of
/// `close`) and background set (rows of `background`).
pub fn adaptive_loss(
    p_i: ArrayView1<f64>,
    close: ArrayView2<f64>,
    background: ArrayView2<f64>,
    gamma: f64,
    lambda: f64,
) -> Result<AdaptiveTerm> {
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    if close.nrows() == 0 {
        return Err(Error::Validation("close set is empty".into()));
    }
    let c = p_i.len();
    if close.ncols() != c || (background.nrows() > 0 && background.ncols() != c) {
        return Err(Error::Shape("neighbor predictions have the wrong class count".into()));
    }
    let mut grad = Array1::<f64>::zeros(c);
    let mut pull = 0.0;
    for p_j in close.rows() {
        let w = relation_weight(prediction_distance(p_i, p_j), gamma);
        pull -= w * p_i.dot(&p_j);
        grad.scaled_add(-w, &p_j);
    }
    let mut push = 0.0;
    for p_k in background.rows() {
        let w = lambda * relation_weight(prediction_distance(p_i, p_k), gamma);
        push += w * p_i.dot(&p_k);
        grad.scaled_add(w, &p_k);
    }
    Ok(AdaptiveTerm { pull, push, grad })
}

/// Exponential moving average of each sample's predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    pub q: Array2<f64>,
    pub last_update_iter: Vec<Option<u64>>,
}

impl EmaState {
    /// All-zero targets, never updated.
    pub fn new(samples: usize, classes: usize) -> Self {
        Self { q: Array2::zeros((samples, classes)), last_update_iter: vec![None; samples] }
    }

    /// `q ← δ·q + (1 − δ)·p` for one sample. Iteration stamps must strictly
    /// increase per sample.
    pub fn update(&mut self, sample: usize, p: ArrayView1<f64>, delta: f64, iter: u64) -> Result<()> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::Config(format!("delta must lie in [0, 1), got {delta}")));
        }
        if sample >= self.q.nrows() || p.len() != self.q.ncols() {
            return Err(Error::Shape(format!("EMA update for sample {sample} with {} classes", p.len())));
        }
        if let Some(prev) = self.last_update_iter[sample] {
            if iter <= prev {
                return Err(Error::Validation(format!(
                    "sample {sample} already updated at iteration {prev}, got {iter}"
                )));
            }
        }
        let mut row = self.q.row_mut(sample);
        row.zip_mut_with(&p, |q, &p| *q = delta * *q + (1.0 - delta) * p);
        self.last_update_iter[sample] = Some(iter);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlTerm {
    pub value: f64,
    pub grad: Array1<f64>,
}

/// `KL(q ‖ p) = Σ q_c log(q_c / p_c)` with `0·log 0 = 0`; `q` need not be
/// normalized. Gradient with respect to `p` is `−q / p`, zero where `p` is
/// below the floor.
pub fn kl_regularizer(q: ArrayView1<f64>, p: ArrayView1<f64>) -> Result<KlTerm> {
    if q.len() != p.len() {
        return Err(Error::Shape(format!("q has {} classes, p {}", q.len(), p.len())));
    }
    let mut value = 0.0;
    let mut grad = Array1::<f64>::zeros(p.len());
    for ((g, &qc), &pc) in grad.iter_mut().zip(q.iter()).zip(p.iter()) {
        if qc > 0.0 {
            value += qc * (qc / pc.max(PROB_FLOOR)).ln();
            // flat below the floor
            if pc >= PROB_FLOOR {
                *g = -qc / pc;
            }
        }
    }
    Ok(KlTerm { value, grad })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ada_pull: f64,
    pub l_ada_push: f64,
    pub l_reg: f64,
    pub total: f64,
    pub lambda_used: f64,
}

/// Sums per-sample terms into `L = L_ada + η·L_reg`.
pub fn total_loss(ada: &[AdaptiveTerm], reg: &[KlTerm], eta: f64, lambda: f64) -> Result<LossBreakdown> {
    if ada.len() != reg.len() {
        return Err(Error::Shape(format!("{} adaptive terms, {} KL terms", ada.len(), reg.len())));
    }
    let l_ada_pull: f64 = ada.iter().map(|t| t.pull).sum();
    let l_ada_push: f64 = ada.iter().map(|t| t.push).sum();
    let l_reg: f64 = reg.iter().map(|t| t.value).sum();
    Ok(LossBreakdown {
        l_ada_pull,
        l_ada_push,
        l_reg,
        total: l_ada_pull + l_ada_push + eta * l_reg,
        lambda_used: lambda,
    })
}

/// Per-sample background sets within a mini-batch: every other batch
/// position whose sample is neither the anchor nor in its close set.
pub fn batch_background(batch: &[usize], clusters: &ClusterAssignment) -> Vec<Vec<usize>> {
    batch
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            let close = &clusters.close[i];
            batch
                .iter()
                .enumerate()
                .filter(|&(other, &k)| other != pos && k != i && !close.contains(&k))
                .map(|(other, _)| other)
                .collect()
        })
        .collect()
}

/// Inputs of the batch objective. Row `r` of every matrix belongs to the
/// `r`-th batch sample.
pub struct BatchInputs<'a> {
    /// Live predictions of the batch.
    pub probs: ArrayView2<'a, f64>,
    /// Close-set predictions for each sample (`h × |C|`).
    pub close: &'a [Array2<f64>],
    /// Background positions into `probs` for each sample.
    pub background: &'a [Vec<usize>],
    /// EMA targets, already updated with the live predictions.
    pub targets: ArrayView2<'a, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub gamma: f64,
    pub lambda: f64,
    pub eta: f64,
}

/// Loss of a whole mini-batch and its gradient with respect to every live
/// prediction row.
pub fn batch_objective(inputs: &BatchInputs<'_>, w: &ObjectiveWeights) -> Result<(LossBreakdown, Array2<f64>)> {
    let b = inputs.probs.nrows();
    if inputs.close.len() != b || inputs.background.len() != b || inputs.targets.nrows() != b {
        return Err(Error::Shape("batch inputs are not aligned".into()));
    }
    let mut ada = Vec::with_capacity(b);
    let mut reg = Vec::with_capacity(b);
    let mut upstream = Array2::<f64>::zeros(inputs.probs.raw_dim());
    for r in 0..b {
        let p = inputs.probs.row(r);
        let background = inputs.probs.select(ndarray::Axis(0), &inputs.background[r]);
        let term = adaptive_loss(p, inputs.close[r].view(), background.view(), w.gamma, w.lambda)?;
        let kl = kl_regularizer(inputs.targets.row(r), p)?;
        let mut g = upstream.row_mut(r);
        g.assign(&term.grad);
        g.scaled_add(w.eta, &kl.grad);
        ada.push(term);
        reg.push(kl);
    }
    Ok((total_loss(&ada, &reg, w.eta, w.lambda)?, upstream))
}
