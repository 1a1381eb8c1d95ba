//! Source-free domain adaptation driven by hypergraph neighborhood clustering.
//!
//! A source-pretrained [`AdaptModel`] is adapted to an unlabeled target
//! [`EmbeddingDataset`]: every target sample anchors a hyperedge over its
//! cosine nearest neighbors, hyperedge affinities come from a non-negative
//! reconstruction of the anchor, per-node self-loops encode prediction
//! uncertainty, and rows of the resulting relation matrix are compressed and
//! clustered. The clusters drive a pull/push objective on predictions, and an
//! exponential moving average of past predictions regularizes training.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`datagen`]: embedding datasets, CSV format, synthetic shifted domains
//! - [`model`]: adapter + classifier with hand-written gradients and SGD
//! - [`hypergraph`]: KNN hyperedges, affinities, self-loops, relation matrix,
//!   compression and high-order clustering
//! - [`objective`]: adaptive relation loss, λ schedule, EMA and KL terms
//! - [`trainer`]: the adaptation loop, evaluation, open-set split, checkpoints

pub mod datagen;
pub mod error;
pub mod hypergraph;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod trainer;

pub use datagen::{Domain, EmbeddingDataset, ShiftSpec};
pub use error::{Error, Result};
pub use model::{AdaptModel, GradientSet};
pub use trainer::{AdaptConfig, MetricsRecord, Trainer};
