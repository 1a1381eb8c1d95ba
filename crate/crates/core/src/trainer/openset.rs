//! Known/unknown split for open-set targets: 1-D two-means on per-sample
//! normalized entropy.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::normalized_entropy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSetSplit {
    pub known: Vec<usize>,
    pub unknown: Vec<usize>,
    pub entropies: Vec<f64>,
}

/// Two-means on the real line, solved exactly: the split of the sorted
/// values with the least within-cluster sum of squares. Returns `true` for
/// members of the high cluster. Equal values always share a cluster and
/// all-equal input yields no high members.
///
/// Lloyd iterations from the minimum and maximum can stop at a worse fixed
/// point when one cluster is wide, so the split is searched directly.
pub fn two_means_high(values: &[f64]) -> Vec<bool> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    // prefix sums of centered values keep the cancellation small
    let mut sum = vec![0.0; n + 1];
    let mut sq = vec![0.0; n + 1];
    for (r, &i) in order.iter().enumerate() {
        let v = values[i] - mean;
        sum[r + 1] = sum[r] + v;
        sq[r + 1] = sq[r] + v * v;
    }
    let sse = |a: usize, b: usize| {
        let (s, m) = (sum[b] - sum[a], (b - a) as f64);
        sq[b] - sq[a] - s * s / m
    };
    let mut best: Option<(f64, usize)> = None;
    for cut in 1..n {
        if values[order[cut - 1]] == values[order[cut]] {
            continue;
        }
        let cost = sse(0, cut) + sse(cut, n);
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, cut));
        }
    }
    let mut high = vec![false; n];
    if let Some((_, cut)) = best {
        for &i in &order[cut..] {
            high[i] = true;
        }
    }
    high
}

/// High-entropy cluster is unknown, the rest known.
pub fn open_set_split(predictions: ArrayView2<f64>) -> Result<OpenSetSplit> {
    let n = predictions.nrows();
    if n < 2 {
        return Err(Error::Config(format!("open-set split needs at least 2 samples, got {n}")));
    }
    let entropies = predictions
        .rows()
        .into_iter()
        .map(normalized_entropy)
        .collect::<Result<Vec<_>>>()?;
    let high = two_means_high(&entropies);
    let (mut known, mut unknown) = (Vec::new(), Vec::new());
    for (i, &h) in high.iter().enumerate() {
        if h {
            unknown.push(i);
        } else {
            known.push(i);
        }
    }
    Ok(OpenSetSplit { known, unknown, entropies })
}
