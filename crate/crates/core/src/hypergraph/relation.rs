use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::Hyperedge;
use crate::error::{Error, Result};

/// Sparse node × hyperedge incidence matrix weighted by hyperedge
/// affinities. Column `j` stores the members of hyperedge `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMatrix {
    nodes: usize,
    degree: usize,
    /// Column-major member rows, `degree` per column.
    rows: Vec<usize>,
    values: Vec<f64>,
}

impl RelationMatrix {
    pub fn nrows(&self) -> usize {
        self.nodes
    }

    pub fn ncols(&self) -> usize {
        self.rows.len() / self.degree
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = j * self.degree..(j + 1) * self.degree;
        self.rows[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.column(j).find(|&(r, _)| r == i).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows(), self.ncols()));
        for j in 0..self.ncols() {
            for (i, v) in self.column(j) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// `H · V` for a dense `V` with one row per hyperedge.
    pub fn mul_dense(&self, v: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows(), v.ncols()));
        for j in 0..self.ncols() {
            let vj = v.row(j);
            for (i, h) in self.column(j) {
                out.row_mut(i).scaled_add(h, &vj);
            }
        }
        out
    }

    /// `Hᵀ · W` for a dense `W` with one row per node.
    pub fn tmul_dense(&self, w: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.ncols(), w.ncols()));
        for j in 0..self.ncols() {
            let mut row = out.row_mut(j);
            for (i, h) in self.column(j) {
                row.scaled_add(h, &w.row(i));
            }
        }
        out
    }

    pub fn column_means(&self) -> Array1<f64> {
        let n = self.nrows() as f64;
        Array1::from_iter((0..self.ncols()).map(|j| self.column(j).map(|(_, v)| v).sum::<f64>() / n))
    }

    pub fn sum_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Builds `H(v_i, e_j) = W(e_j)|_{v_i}` for members and 0 elsewhere.
pub fn build_relation_matrix(edges: &[Hyperedge]) -> Result<RelationMatrix> {
    let n = edges.len();
    let degree = edges
        .first()
        .map(|e| e.degree())
        .ok_or_else(|| Error::Validation("no hyperedges".into()))?;
    let mut rows = Vec::with_capacity(n * degree);
    let mut values = Vec::with_capacity(n * degree);
    for (j, e) in edges.iter().enumerate() {
        if e.degree() != degree || e.affinity.len() != degree {
            return Err(Error::Validation(format!(
                "hyperedge {j} has degree {} (affinity length {}), expected {degree}",
                e.degree(),
                e.affinity.len()
            )));
        }
        for (node, &w) in e.members().zip(&e.affinity) {
            if node >= n {
                return Err(Error::Validation(format!("hyperedge {j} references node {node} of {n}")));
            }
            rows.push(node);
            values.push(w);
        }
    }
    Ok(RelationMatrix { nodes: n, degree, rows, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_and_sparse_products_agree() {
        let edges = vec![
            Hyperedge { anchor: 0, neighbors: vec![1, 2], affinity: vec![2.0, 0.5, 1.5], converged: true },
            Hyperedge { anchor: 1, neighbors: vec![2, 3], affinity: vec![2.5, 1.0, 1.25], converged: true },
            Hyperedge { anchor: 2, neighbors: vec![0, 1], affinity: vec![2.2, 1.1, 1.3], converged: true },
            Hyperedge { anchor: 3, neighbors: vec![0, 2], affinity: vec![2.7, 1.7, 1.2], converged: true },
        ];
        let h = build_relation_matrix(&edges).unwrap();
        let dense = h.to_dense();
        assert_eq!(h.nnz(), 12);
        assert_eq!(h.get(3, 0), 0.0);
        assert_eq!(h.get(0, 0), 2.0);
        assert_eq!(h.get(2, 1), 1.0);
        let v = Array2::from_shape_fn((4, 2), |(i, j)| (i * 2 + j) as f64 - 1.5);
        let close = |a: Array2<f64>, b: Array2<f64>| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(h.mul_dense(&v), dense.dot(&v)));
        assert!(close(h.tmul_dense(&v), dense.t().dot(&v)));
        let means = dense.mean_axis(ndarray::Axis(0)).unwrap();
        for (a, b) in h.column_means().iter().zip(means.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
