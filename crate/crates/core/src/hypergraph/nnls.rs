//! Non-negative reconstruction of an anchor feature from its neighbors.
//!
//! Minimizes `‖Σ_j a_j·n_j − x‖² + α‖a‖₂` subject to `a ≥ 0` with an
//! accelerated proximal gradient method. The proximal map of
//! `α‖·‖₂ + ι(a ≥ 0)` is the orthant projection followed by a radial
//! shrink, so the iterates stay exactly non-negative and can reach `a = 0`.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::psd_max_eigenvalue;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NnlsOptions {
    pub max_iter: usize,
    /// Stop once the max-abs iterate change falls below this...
    pub step_tol: f64,
    /// ...and the KKT residual is at most this.
    pub kkt_tol: f64,
    /// Added to the Gram spectrum bound before taking the step size.
    pub ridge: f64,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        Self { max_iter: 2000, step_tol: 1e-8, kkt_tol: 1e-7, ridge: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinitySolution {
    pub coefficients: Array1<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `‖Nᵀa − x‖² + α‖a‖₂`, evaluated from the residual vector.
pub fn affinity_objective(
    anchor: ArrayView1<f64>,
    neighbors: ArrayView2<f64>,
    alpha: f64,
    a: ArrayView1<f64>,
) -> f64 {
    let resid = neighbors.t().dot(&a) - anchor;
    resid.dot(&resid) + alpha * a.dot(&a).sqrt()
}

/// Distance of zero from the subdifferential of the objective plus the
/// normal cone of the orthant, measured coordinate-wise.
///
/// At `a = 0` the norm term contributes the whole ball of radius `α`, so the
/// residual is how far the positive part of the descent direction pokes out
/// of that ball.
pub fn kkt_residual(
    anchor: ArrayView1<f64>,
    neighbors: ArrayView2<f64>,
    alpha: f64,
    a: ArrayView1<f64>,
) -> f64 {
    let resid = neighbors.t().dot(&a) - anchor;
    let mut grad = neighbors.dot(&resid) * 2.0;
    let norm = a.dot(&a).sqrt();
    if norm == 0.0 {
        let pushing: f64 = grad.iter().map(|&g| (-g).max(0.0).powi(2)).sum::<f64>().sqrt();
        return (pushing - alpha).max(0.0);
    }
    grad.scaled_add(alpha / norm, &a);
    grad.iter()
        .zip(a.iter())
        .map(|(&g, &aj)| if aj > 0.0 { g.abs() } else { (-g).max(0.0) })
        .fold(0.0, f64::max)
}

fn prox(v: &Array1<f64>, threshold: f64) -> Array1<f64> {
    let mut out = v.mapv(|x| x.max(0.0));
    let norm = out.dot(&out).sqrt();
    if norm <= threshold {
        out.fill(0.0);
    } else {
        out *= 1.0 - threshold / norm;
    }
    out
}

/// Affinity coefficients of one hyperedge.
///
/// `neighbors` holds one neighbor feature per row. Running out of iterations
/// is not an error: the best iterate is returned with `converged == false`.
pub fn solve_affinity(
    anchor: ArrayView1<f64>,
    neighbors: ArrayView2<f64>,
    alpha: f64,
    opts: &NnlsOptions,
) -> Result<AffinitySolution> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    if neighbors.ncols() != anchor.len() {
        return Err(Error::Shape(format!(
            "neighbor rows have length {}, anchor {}",
            neighbors.ncols(),
            anchor.len()
        )));
    }
    if anchor.iter().chain(neighbors.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Validation("affinity inputs must be finite".into()));
    }
    let m = neighbors.nrows();
    let gram = neighbors.dot(&neighbors.t());
    let rhs = neighbors.dot(&anchor);
    let lipschitz = 2.0 * (psd_max_eigenvalue(gram.view()) + opts.ridge);
    let step = 1.0 / lipschitz;
    let grad = |y: &Array1<f64>| (gram.dot(y) - &rhs) * 2.0;
    let objective = |a: &Array1<f64>| affinity_objective(anchor, neighbors, alpha, a.view());

    let mut a = Array1::<f64>::zeros(m);
    let mut f_a = objective(&a);
    let mut y = a.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let candidate = prox(&(&y - &(grad(&y) * step)), alpha * step);
        let f_c = objective(&candidate);
        if f_c > f_a && t > 1.0 {
            // momentum overshot: restart from the current iterate
            t = 1.0;
            y.assign(&a);
            continue;
        }
        let change = candidate
            .iter()
            .zip(a.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &candidate + &((&candidate - &a) * ((t - 1.0) / t_next));
        t = t_next;
        a = candidate;
        f_a = f_c;
        if change < opts.step_tol
            && kkt_residual(anchor, neighbors, alpha, a.view()) <= opts.kkt_tol
        {
            converged = true;
            break;
        }
    }

    let kkt = kkt_residual(anchor, neighbors, alpha, a.view());
    Ok(AffinitySolution {
        objective: objective(&a),
        coefficients: a,
        kkt_residual: kkt,
        iterations,
        converged,
    })
}
