use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Indices of the `count` best candidates by `score` (higher first), ties
/// broken by lower index. `i` itself is excluded.
pub(crate) fn top_by<F>(n: usize, i: usize, count: usize, score: F) -> Vec<usize>
where
    F: Fn(usize) -> f64,
{
    let mut cands: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (score(j), j)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
    };
    if count < cands.len() {
        cands.select_nth_unstable_by(count, cmp);
        cands.truncate(count);
    }
    cands.sort_by(cmp);
    cands.into_iter().map(|(_, j)| j).collect()
}

/// Rows scaled to unit Euclidean norm; zero rows are an error.
pub fn normalize_rows(features: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = features.to_owned();
    for (row_idx, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroNorm { row: row_idx });
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

/// Brute-force cosine nearest neighbors.
///
/// For every row, returns the `count` other rows of highest cosine
/// similarity, most similar first, ties broken by lower index.
pub fn cosine_knn(features: ArrayView2<f64>, count: usize) -> Result<Vec<Vec<usize>>> {
    let n = features.nrows();
    if count == 0 || count >= n {
        return Err(Error::Config(format!(
            "neighbor count must satisfy 1 <= count < n, got count={count}, n={n}"
        )));
    }
    let unit = normalize_rows(features)?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let ri = unit.row(i);
            top_by(n, i, count, |j| ri.dot(&unit.row(j)))
        })
        .collect())
}
