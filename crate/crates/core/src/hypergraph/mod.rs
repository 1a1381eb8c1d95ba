//! Hypergraph over target samples.
//!
//! Every node anchors one hyperedge made of itself and its `k − 1` cosine
//! nearest neighbors. Affinities come from a non-negative reconstruction of
//! the anchor (anchor coefficient fixed at 1), optionally raised by per-node
//! self-loop weights. Rows of the node × hyperedge relation matrix are
//! compressed by PCA and clustered by Euclidean nearest neighbors.

mod cluster;
mod knn;
mod nnls;
mod pca;
mod relation;
mod selfloop;

pub use cluster::{cluster_high_order, ClusterAssignment};
pub use knn::{cosine_knn, normalize_rows};
pub use nnls::{affinity_objective, kkt_residual, solve_affinity, AffinitySolution, NnlsOptions};
pub use pca::{compress_rows, default_compressed_width, Pca, PcaOptions, RowMatrix};
pub use relation::{build_relation_matrix, RelationMatrix};
pub use selfloop::{
    merge_self_loops, neighbor_mean_prediction, normalized_entropy, self_loop_affinities, SelfLoopSet,
};

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperedge {
    pub anchor: usize,
    /// Neighbors ordered by decreasing cosine similarity.
    pub neighbors: Vec<usize>,
    /// Anchor entry first, then one entry per neighbor.
    pub affinity: Vec<f64>,
    /// Whether the affinity solve met its tolerances.
    #[serde(skip)]
    pub converged: bool,
}

impl Hyperedge {
    pub fn degree(&self) -> usize {
        1 + self.neighbors.len()
    }

    /// Anchor followed by the neighbors, aligned with `affinity`.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.anchor).chain(self.neighbors.iter().copied())
    }

    pub fn contains(&self, node: usize) -> bool {
        self.anchor == node || self.neighbors.contains(&node)
    }
}

/// One hyperedge per node with affinity `{1} ∪ a_i`.
pub fn build_hyperedges(
    features: ArrayView2<f64>,
    k: usize,
    alpha: f64,
    opts: &NnlsOptions,
) -> Result<Vec<Hyperedge>> {
    if k < 3 {
        return Err(Error::Config(format!("hyperedge degree k must exceed 2, got {k}")));
    }
    let neighbors = cosine_knn(features, k - 1)?;
    neighbors
        .into_par_iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let stacked = features.select(Axis(0), &nbrs);
            let sol = solve_affinity(features.row(i), stacked.view(), alpha, opts)?;
            let mut affinity = Vec::with_capacity(k);
            affinity.push(1.0);
            affinity.extend(sol.coefficients.iter());
            Ok(Hyperedge { anchor: i, neighbors: nbrs, affinity, converged: sol.converged })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypergraphParams {
    pub k: usize,
    pub alpha: f64,
    pub h: usize,
    /// Compressed width; `None` uses [`default_compressed_width`].
    pub m_prime: Option<usize>,
    pub self_loops: bool,
    pub seed: u64,
    pub nnls: NnlsOptions,
}

/// Everything produced by one hypergraph construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    /// Hyperedges before self-loop merging.
    pub raw_edges: Vec<Hyperedge>,
    /// Hyperedges whose affinities feed the relation matrix.
    pub edges: Vec<Hyperedge>,
    pub self_loops: Option<SelfLoopSet>,
    pub relation: RelationMatrix,
    pub compressed: Array2<f64>,
    pub clusters: ClusterAssignment,
}

#[derive(Serialize)]
struct DebugDump<'a> {
    nodes: usize,
    edges: &'a [Hyperedge],
    selfloops: &'a [f64],
}

impl Hypergraph {
    pub fn unconverged_solves(&self) -> usize {
        self.raw_edges.iter().filter(|e| !e.converged).count()
    }

    /// JSON inspection dump `{nodes, edges, selfloops}`.
    pub fn to_debug_json(&self) -> Result<String> {
        let dump = DebugDump {
            nodes: self.edges.len(),
            edges: &self.edges,
            selfloops: self.self_loops.as_ref().map_or(&[], |s| &s.values),
        };
        Ok(serde_json::to_string(&dump)?)
    }
}

/// Full construction: KNN, affinities, self-loops, relation matrix,
/// compression and clustering.
pub fn build_hypergraph(
    features: ArrayView2<f64>,
    predictions: ArrayView2<f64>,
    params: &HypergraphParams,
) -> Result<Hypergraph> {
    let n = features.nrows();
    if predictions.nrows() != n {
        return Err(Error::Shape(format!(
            "{} prediction rows for {n} feature rows",
            predictions.nrows()
        )));
    }
    let raw_edges = build_hyperedges(features, params.k, params.alpha, &params.nnls)?;
    let (edges, self_loops) = if params.self_loops {
        let loops = self_loop_affinities(&raw_edges, predictions)?;
        (merge_self_loops(&raw_edges, &loops)?, Some(loops))
    } else {
        (raw_edges.clone(), None)
    };
    let relation = build_relation_matrix(&edges)?;
    let width = params.m_prime.unwrap_or_else(|| default_compressed_width(n));
    let compressed = compress_rows(&relation, width, params.seed)?;
    let clusters = cluster_high_order(compressed.view(), params.h)?;
    Ok(Hypergraph { raw_edges, edges, self_loops, relation, compressed, clusters })
}
