use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::knn::top_by;
use crate::error::{Error, Result};

/// Close set `A_i` of every node. The background set is resolved per
/// mini-batch by the objective and is not stored here.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub close: Vec<Vec<usize>>,
}

impl ClusterAssignment {
    pub fn len(&self) -> usize {
        self.close.len()
    }

    pub fn is_empty(&self) -> bool {
        self.close.is_empty()
    }

    pub fn cluster_size(&self) -> usize {
        self.close.first().map_or(0, Vec::len)
    }
}

/// `A_i` = the `h` rows nearest to row `i` in Euclidean distance, self
/// excluded, ties broken by lower index.
pub fn cluster_high_order(compressed: ArrayView2<f64>, h: usize) -> Result<ClusterAssignment> {
    let n = compressed.nrows();
    if h == 0 || h >= n {
        return Err(Error::Config(format!("cluster size must satisfy 1 <= h < n, got h={h}, n={n}")));
    }
    let close = (0..n)
        .into_par_iter()
        .map(|i| {
            let ri = compressed.row(i);
            top_by(n, i, h, |j| {
                let d = &ri - &compressed.row(j);
                -d.dot(&d)
            })
        })
        .collect();
    Ok(ClusterAssignment { close })
}
