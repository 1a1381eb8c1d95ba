//! Small dense helpers shared by the solvers.

use ndarray::{Array1, Array2, ArrayView2, Axis};

/// Orthonormalizes the columns of `m` in place with two passes of modified
/// Gram-Schmidt. Columns that become numerically zero are replaced by the
/// first canonical basis vector orthogonal to the previous columns.
pub fn orthonormalize_columns(m: &mut Array2<f64>) {
    let (rows, cols) = m.dim();
    for j in 0..cols {
        for _pass in 0..2 {
            for i in 0..j {
                let proj = m.column(i).dot(&m.column(j));
                let ci = m.column(i).to_owned();
                m.column_mut(j).scaled_add(-proj, &ci);
            }
        }
        let norm = m.column(j).dot(&m.column(j)).sqrt();
        if norm > 1e-12 {
            m.column_mut(j).mapv_inplace(|v| v / norm);
        } else {
            // deflated column: pick a basis vector that survives projection
            for e in 0..rows {
                let mut cand = Array1::<f64>::zeros(rows);
                cand[e] = 1.0;
                for i in 0..j {
                    let proj = m.column(i).dot(&cand);
                    cand.scaled_add(-proj, &m.column(i));
                }
                let n = cand.dot(&cand).sqrt();
                if n > 1e-6 {
                    m.column_mut(j).assign(&(cand / n));
                    break;
                }
            }
        }
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues sorted in descending order and the matching
/// eigenvectors as columns.
pub fn symmetric_eigen(a: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    let mut a = a.to_owned();
    let mut v = Array2::<f64>::eye(n);

    for _sweep in 0..100 {
        let mut off = 0.0;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = a[[i, j]] * a[[i, j]];
                total += x;
                if i != j {
                    off += x;
                }
            }
        }
        if off <= 1e-30 * total.max(1e-300) || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    (values, vectors)
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
///
/// Power iteration gives a lower estimate; the Gershgorin row bound gives an
/// upper one. The result is the power estimate inflated by 1% but never above
/// the Gershgorin bound, so it is safe to use as a Lipschitz constant.
pub fn psd_max_eigenvalue(g: ArrayView2<f64>) -> f64 {
    let n = g.nrows();
    if n == 0 {
        return 0.0;
    }
    let gershgorin = g
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut x = Array1::from_iter((0..n).map(|i| 1.0 + 0.01 * i as f64));
    let mut lambda = 0.0;
    for _ in 0..200 {
        let y = g.dot(&x);
        let norm = y.dot(&y).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = x.dot(&y) / x.dot(&x);
        x = y / norm;
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    (lambda * 1.01).min(gershgorin)
}
