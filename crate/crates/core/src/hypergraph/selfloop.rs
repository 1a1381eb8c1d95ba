//! Self-loop affinities: each node's uncertainty, read from the normalized
//! entropy of the mean prediction over its hyperedge neighbors.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::Hyperedge;
use crate::error::{Error, Result};

/// One self-loop weight per node, each in `[1, e]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfLoopSet {
    pub values: Vec<f64>,
}

impl SelfLoopSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Mean prediction over the hyperedge members other than the anchor.
pub fn neighbor_mean_prediction(edge: &Hyperedge, predictions: ArrayView2<f64>) -> Result<Array1<f64>> {
    if edge.neighbors.len() < 2 {
        return Err(Error::Config(format!(
            "hyperedge anchored at {} has {} neighbors, need at least 2",
            edge.anchor,
            edge.neighbors.len()
        )));
    }
    let mut mean = Array1::<f64>::zeros(predictions.ncols());
    for &j in &edge.neighbors {
        if j >= predictions.nrows() {
            return Err(Error::Shape(format!(
                "neighbor {j} outside prediction matrix of {} rows",
                predictions.nrows()
            )));
        }
        mean += &predictions.row(j);
    }
    mean /= edge.neighbors.len() as f64;
    Ok(mean)
}

/// Shannon entropy divided by `ln |C|`, in `[0, 1]`. Zero entries
/// contribute nothing.
pub fn normalized_entropy(p: ArrayView1<f64>) -> Result<f64> {
    let c = p.len();
    if c < 2 {
        return Err(Error::Validation(format!(
            "normalized entropy needs at least 2 classes, got {c}"
        )));
    }
    let sum: f64 = p.sum();
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Validation(format!("not a probability vector (sum {sum})")));
    }
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    Ok((h / (c as f64).ln()).clamp(0.0, 1.0))
}

/// `W_s(v_i) = exp(φ(p̄_i))` for every node, where `edges[i]` is anchored
/// at node `i`.
pub fn self_loop_affinities(edges: &[Hyperedge], predictions: ArrayView2<f64>) -> Result<SelfLoopSet> {
    let mut values = Vec::with_capacity(edges.len());
    for (i, edge) in edges.iter().enumerate() {
        if edge.anchor != i {
            return Err(Error::Validation(format!(
                "hyperedge {i} is anchored at {}, expected one edge per node in order",
                edge.anchor
            )));
        }
        let mean = neighbor_mean_prediction(edge, predictions)?;
        values.push(normalized_entropy(mean.view())?.exp());
    }
    Ok(SelfLoopSet { values })
}

/// Adds each member's self-loop weight to its entry in the hyperedge
/// affinity vector.
pub fn merge_self_loops(edges: &[Hyperedge], self_loops: &SelfLoopSet) -> Result<Vec<Hyperedge>> {
    edges
        .iter()
        .map(|edge| {
            let mut merged = edge.clone();
            for (slot, node) in merged.affinity.iter_mut().zip(edge.members()) {
                let w = self_loops.values.get(node).ok_or_else(|| {
                    Error::Shape(format!("no self-loop weight for node {node}"))
                })?;
                *slot += w;
            }
            Ok(merged)
        })
        .collect()
}
