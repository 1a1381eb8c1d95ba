//! Independent reference implementations used as test oracles.
//!
//! The oracles never call into the library's numerical code: forward passes,
//! NNLS, PCA and clustering are re-derived with plain loops or nalgebra. The
//! case builders at the end drive the library and compare against them.
#![allow(dead_code)]

use hypersfda::objective::{batch_objective, BatchInputs, ObjectiveWeights};
use hypersfda::AdaptModel;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the oracle side free of the library's sampler choice
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| scale * normal(rng))
}

pub fn random_simplex(rng: &mut ChaCha8Rng, c: usize, spread: f64) -> Vec<f64> {
    let logits: Vec<f64> = (0..c).map(|_| spread * normal(rng)).collect();
    softmax(&logits)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Adapter pre-activations and class probabilities of one sample.
pub fn ref_forward(m: &AdaptModel, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (d, dz) = (m.w_f.nrows(), m.w_f.ncols());
    let c = m.w_g.ncols();
    let mut pre = vec![0.0; dz];
    for (k, slot) in pre.iter_mut().enumerate() {
        let mut s = m.b_f[k];
        for i in 0..d {
            s += x[i] * m.w_f[[i, k]];
        }
        *slot = s;
    }
    let z: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
    let mut logits = vec![0.0; c];
    for (j, slot) in logits.iter_mut().enumerate() {
        let mut s = m.b_g[j];
        for k in 0..dz {
            s += z[k] * m.w_g[[k, j]];
        }
        *slot = s;
    }
    (pre, softmax(&logits))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// One batch instance of the full objective with every stop-gradient
/// quantity frozen.
pub struct FrozenObjective {
    pub x: Vec<Vec<f64>>,
    /// Close-set predictions and their weights, per batch row.
    pub close: Vec<Vec<(Vec<f64>, f64)>>,
    /// Background predictions and their λ-free weights, per batch row.
    pub background: Vec<Vec<(Vec<f64>, f64)>>,
    pub targets: Vec<Vec<f64>>,
    pub lambda: f64,
    pub eta: f64,
}

impl FrozenObjective {
    pub fn value(&self, m: &AdaptModel) -> f64 {
        let mut total = 0.0;
        for (r, x) in self.x.iter().enumerate() {
            let (_, p) = ref_forward(m, x);
            for (pj, w) in &self.close[r] {
                total -= w * dot(&p, pj);
            }
            for (pk, w) in &self.background[r] {
                total += self.lambda * w * dot(&p, pk);
            }
            for (q, pc) in self.targets[r].iter().zip(&p) {
                if *q > 0.0 {
                    total += self.eta * q * (q.ln() - pc.max(1e-12).ln());
                }
            }
        }
        total
    }
}

fn param_mut(m: &mut AdaptModel, tensor: usize) -> &mut [f64] {
    match tensor {
        0 => m.w_f.as_slice_mut(),
        1 => m.b_f.as_slice_mut(),
        2 => m.w_g.as_slice_mut(),
        _ => m.b_g.as_slice_mut(),
    }
    .expect("standard layout")
}

/// Central differences of `f` over every model parameter, in the order
/// W_f, b_f, W_g, b_g.
pub fn finite_difference(m: &AdaptModel, step: f64, f: impl Fn(&AdaptModel) -> f64) -> [Vec<f64>; 4] {
    let mut out: [Vec<f64>; 4] = Default::default();
    let mut probe = m.clone();
    for (t, grads) in out.iter_mut().enumerate() {
        for idx in 0..param_mut(&mut probe, t).len() {
            let orig = param_mut(&mut probe, t)[idx];
            param_mut(&mut probe, t)[idx] = orig + step;
            let up = f(&probe);
            param_mut(&mut probe, t)[idx] = orig - step;
            let down = f(&probe);
            param_mut(&mut probe, t)[idx] = orig;
            grads.push((up - down) / (2.0 * step));
        }
    }
    out
}

/// ‖a − b‖ / max(‖a‖, ‖b‖, floor)
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

// ---------------------------------------------------------------- NNLS

pub fn nnls_objective(anchor: &[f64], neighbors: &[Vec<f64>], alpha: f64, a: &[f64]) -> f64 {
    let mut r: Vec<f64> = anchor.iter().map(|v| -v).collect();
    for (aj, nj) in a.iter().zip(neighbors) {
        for (ri, v) in r.iter_mut().zip(nj) {
            *ri += aj * v;
        }
    }
    dot(&r, &r) + alpha * dot(a, a).sqrt()
}

/// Exact minimizer of `‖Σ a_j n_j − x‖² + α‖a‖₂` over `a ≥ 0`, by
/// enumerating supports.
///
/// On a support `S` with `a_S > 0` stationarity reads
/// `(G_S + μI) a_S = b_S` with `μ = α / (2‖a_S‖)`. The map
/// `μ ↦ μ‖(G_S + μI)⁻¹ b_S‖` increases from 0 to `‖b_S‖`, so `μ` is found by
/// bisection on the eigenbasis of `G_S`. The global minimum over all
/// feasible stationary points and `a = 0` is the optimum of the convex
/// problem.
pub fn nnls_exact(anchor: &[f64], neighbors: &[Vec<f64>], alpha: f64) -> (Vec<f64>, f64) {
    let m = neighbors.len();
    let gram = DMatrix::from_fn(m, m, |i, j| dot(&neighbors[i], &neighbors[j]));
    let rhs = DVector::from_fn(m, |i, _| dot(&neighbors[i], anchor));
    let mut best = (vec![0.0; m], nnls_objective(anchor, neighbors, alpha, &vec![0.0; m]));
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|&j| mask & (1 << j) != 0).collect();
        let s = support.len();
        let g = DMatrix::from_fn(s, s, |i, j| gram[(support[i], support[j])]);
        let b = DVector::from_fn(s, |i, _| rhs[support[i]]);
        let eig = SymmetricEigen::new(g);
        let coef = eig.eigenvectors.transpose() * &b;
        let lam = eig.eigenvalues.map(|v| v.max(0.0));
        let top = lam.iter().copied().fold(0.0f64, f64::max);
        let solve = |mu: f64| -> Option<DVector<f64>> {
            let mut scaled = coef.clone();
            for i in 0..s {
                let denom = lam[i] + mu;
                if denom <= 1e-12 * top.max(1.0) {
                    if coef[i].abs() > 1e-9 * b.norm().max(1.0) {
                        return None;
                    }
                    scaled[i] = 0.0;
                } else {
                    scaled[i] /= denom;
                }
            }
            Some(&eig.eigenvectors * scaled)
        };
        let a_s = if alpha == 0.0 {
            match solve(0.0) {
                Some(v) => v,
                None => continue,
            }
        } else {
            if b.norm() <= alpha / 2.0 {
                continue;
            }
            let g_of = |mu: f64| -> f64 {
                let mut acc = 0.0;
                for i in 0..s {
                    let v = mu * coef[i] / (lam[i] + mu);
                    acc += v * v;
                }
                acc.sqrt() - alpha / 2.0
            };
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            while g_of(hi) <= 0.0 {
                hi *= 2.0;
            }
            for _ in 0..300 {
                let mid = 0.5 * (lo + hi);
                if g_of(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            match solve(0.5 * (lo + hi)) {
                Some(v) => v,
                None => continue,
            }
        };
        if a_s.iter().any(|&v| v <= 0.0) {
            continue;
        }
        let mut a = vec![0.0; m];
        for (i, &j) in support.iter().enumerate() {
            a[j] = a_s[i];
        }
        let obj = nnls_objective(anchor, neighbors, alpha, &a);
        if obj < best.1 {
            best = (a, obj);
        }
    }
    best
}

// --------------------------------------------------- straight-line pipeline

pub fn ref_knn_cosine(features: &[Vec<f64>], count: usize) -> Vec<Vec<usize>> {
    let n = features.len();
    let norms: Vec<f64> = features.iter().map(|f| dot(f, f).sqrt()).collect();
    (0..n)
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (dot(&features[i], &features[j]) / (norms[i] * norms[j]), j))
                .collect();
            cand.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            cand.into_iter().take(count).map(|(_, j)| j).collect()
        })
        .collect()
}

pub fn ref_knn_euclidean(rows: &[Vec<f64>], count: usize) -> Vec<Vec<usize>> {
    let n = rows.len();
    (0..n)
        .map(|i| {
            let mut cand: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (dist(&rows[i], &rows[j]), j)).collect();
            cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            cand.into_iter().take(count).map(|(_, j)| j).collect()
        })
        .collect()
}

pub fn ref_entropy(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    h / (p.len() as f64).ln()
}

/// Dense PCA through a full symmetric eigendecomposition of the sample
/// covariance. Components follow the largest-magnitude-positive sign rule.
pub struct RefPca {
    pub variances: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub total_variance: f64,
    pub projected: Vec<Vec<f64>>,
}

pub fn ref_pca(rows: &[Vec<f64>], rank: usize) -> RefPca {
    let n = rows.len();
    let m = rows[0].len();
    let mean: Vec<f64> = (0..m).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(a, b)| a - b).collect()).collect();
    let cov = DMatrix::from_fn(m, m, |a, b| {
        centered.iter().map(|r| r[a] * r[b]).sum::<f64>() / (n - 1) as f64
    });
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut components = Vec::new();
    let mut variances = Vec::new();
    for &idx in order.iter().take(rank) {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = (0..m).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        variances.push(eig.eigenvalues[idx].max(0.0));
    }
    let projected = centered.iter().map(|r| components.iter().map(|c| dot(r, c)).collect()).collect();
    RefPca { variances, components, total_variance, projected }
}

pub struct RefHypergraph {
    pub neighbors: Vec<Vec<usize>>,
    pub coefficients: Vec<Vec<f64>>,
    pub self_loops: Vec<f64>,
    pub merged: Vec<Vec<f64>>,
    pub relation: Vec<Vec<f64>>,
    pub pca: RefPca,
    pub clusters: Vec<Vec<usize>>,
}

/// KNN → NNLS → self-loops → merge → H → PCA → top-h, written out directly.
pub fn ref_pipeline(
    features: &[Vec<f64>],
    predictions: &[Vec<f64>],
    k: usize,
    alpha: f64,
    h: usize,
    rank: usize,
) -> RefHypergraph {
    let n = features.len();
    let c = predictions[0].len();
    let neighbors = ref_knn_cosine(features, k - 1);
    let coefficients: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let nb: Vec<Vec<f64>> = neighbors[i].iter().map(|&j| features[j].clone()).collect();
            nnls_exact(&features[i], &nb, alpha).0
        })
        .collect();
    let self_loops: Vec<f64> = (0..n)
        .map(|i| {
            let mean: Vec<f64> = (0..c)
                .map(|cls| neighbors[i].iter().map(|&j| predictions[j][cls]).sum::<f64>() / (k - 1) as f64)
                .collect();
            ref_entropy(&mean).exp()
        })
        .collect();
    let merged: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut w = vec![1.0 + self_loops[i]];
            for (a, &j) in coefficients[i].iter().zip(&neighbors[i]) {
                w.push(a + self_loops[j]);
            }
            w
        })
        .collect();
    let mut relation = vec![vec![0.0; n]; n];
    for j in 0..n {
        relation[j][j] = merged[j][0];
        for (t, &v) in neighbors[j].iter().enumerate() {
            relation[v][j] = merged[j][t + 1];
        }
    }
    let pca = ref_pca(&relation, rank);
    let clusters = ref_knn_euclidean(&pca.projected, h);
    RefHypergraph { neighbors, coefficients, self_loops, merged, relation, pca, clusters }
}

pub fn rows_of(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

// -------------------------------------------------------------- open set

/// Best threshold split of the real line by total within-cluster squared
/// error; `true` marks the upper group. Ties in error keep the smaller
/// upper group.
pub fn exhaustive_two_means(values: &[f64]) -> Vec<bool> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    if sorted.len() < 2 {
        return vec![false; values.len()];
    }
    let sse = |group: &[f64]| {
        let mu = group.iter().sum::<f64>() / group.len() as f64;
        group.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>()
    };
    let mut best: Option<(f64, f64)> = None;
    // candidate thresholds strictly between consecutive distinct values
    for w in sorted.windows(2).rev() {
        let thr = 0.5 * (w[0] + w[1]);
        let lo: Vec<f64> = values.iter().copied().filter(|&v| v < thr).collect();
        let hi: Vec<f64> = values.iter().copied().filter(|&v| v > thr).collect();
        let err = sse(&lo) + sse(&hi);
        if best.is_none_or(|(e, _)| err < e - 1e-15) {
            best = Some((err, thr));
        }
    }
    let thr = best.unwrap().1;
    values.iter().map(|&v| v > thr).collect()
}

// ------------------------------------------------------------ case builders

pub fn random_model(rng: &mut rand_chacha::ChaCha8Rng, d: usize, dz: usize, c: usize, seed: u64) -> AdaptModel {
    let mut m = AdaptModel::new(d, dz, c, seed).unwrap();
    m.w_f += &random_matrix(rng, d, dz, 0.5);
    m.b_f += &Array1::from_iter((0..dz).map(|_| 0.5 * normal(rng)));
    m.w_g += &random_matrix(rng, dz, c, 1.0);
    m.b_g += &Array1::from_iter((0..c).map(|_| 0.5 * normal(rng)));
    m
}

/// Library batch objective and backward pass against finite differences of
/// [`FrozenObjective`] on a random instance with at most `max_batch` rows.
/// Returns the worst norm-wise relative error over the four tensors.
pub fn objective_gradient_case(seed: u64, max_batch: usize) -> Result<f64, String> {
    let mut rng = rng(seed);
    let d = rng.random_range(1..=6);
    let dz = rng.random_range(1..=6);
    let c = rng.random_range(2..=6);
    let b = rng.random_range(2..=max_batch);
    let h = rng.random_range(1..=3);
    let gamma = rng.random_range(1.0..8.0);
    let lambda = rng.random_range(0.05..1.0);
    let eta = rng.random_range(0.0..3.0);
    let delta = rng.random_range(0.0..0.95);

    // redraw until no pre-activation sits near the rectifier kink
    let (model, x) = loop {
        let model = random_model(&mut rng, d, dz, c, seed);
        let x = random_matrix(&mut rng, b, d, 1.0);
        let clear = x
            .rows()
            .into_iter()
            .all(|row| ref_forward(&model, row.as_slice().unwrap()).0.iter().all(|v| v.abs() > 1e-3));
        if clear {
            break (model, x);
        }
    };
    let xs = rows_of(&x);
    let probs_ref: Vec<Vec<f64>> = xs.iter().map(|r| ref_forward(&model, r).1).collect();
    let fwd = model.forward_batch(x.view()).map_err(|e| e.to_string())?;

    let close: Vec<Array2<f64>> = (0..b)
        .map(|_| {
            let rows: Vec<f64> = (0..h).flat_map(|_| random_simplex(&mut rng, c, 2.0)).collect();
            Array2::from_shape_vec((h, c), rows).unwrap()
        })
        .collect();
    let background: Vec<Vec<usize>> = (0..b)
        .map(|r| {
            let mut others: Vec<usize> = (0..b).filter(|&o| o != r).collect();
            others.shuffle(&mut rng);
            let take = rng.random_range(1..=others.len());
            others.truncate(take);
            others
        })
        .collect();
    let q_old: Vec<Vec<f64>> = (0..b).map(|_| (0..c).map(|_| rng.random::<f64>()).collect()).collect();
    let targets: Vec<Vec<f64>> = (0..b)
        .map(|r| (0..c).map(|k| delta * q_old[r][k] + (1.0 - delta) * probs_ref[r][k]).collect())
        .collect();
    let targets_arr = Array2::from_shape_fn((b, c), |(r, k)| targets[r][k]);

    let weight = |p: &[f64], o: &[f64]| 1.0 - (dist(p, o) / 2f64.sqrt()).min(1.0).powf(gamma);
    let frozen = FrozenObjective {
        x: xs.clone(),
        close: (0..b)
            .map(|r| rows_of(&close[r]).into_iter().map(|pj| (pj.clone(), weight(&probs_ref[r], &pj))).collect())
            .collect(),
        background: (0..b)
            .map(|r| {
                background[r]
                    .iter()
                    .map(|&k| (probs_ref[k].clone(), weight(&probs_ref[r], &probs_ref[k])))
                    .collect()
            })
            .collect(),
        targets,
        lambda,
        eta,
    };

    let inputs = BatchInputs { probs: fwd.probs.view(), close: &close, background: &background, targets: targets_arr.view() };
    let (loss, upstream) =
        batch_objective(&inputs, &ObjectiveWeights { gamma, lambda, eta }).map_err(|e| e.to_string())?;
    let base = frozen.value(&model);
    if (loss.total - base).abs() > 1e-9 * base.abs().max(1.0) {
        return Err(format!("case {seed}: loss {} vs oracle {base}", loss.total));
    }
    let grads = model.backward(x.view(), upstream.view()).map_err(|e| e.to_string())?;
    let fd = finite_difference(&model, 1e-5, |m| frozen.value(m));
    let analytic = [
        grads.w_f.iter().copied().collect::<Vec<_>>(),
        grads.b_f.to_vec(),
        grads.w_g.iter().copied().collect(),
        grads.b_g.to_vec(),
    ];
    let worst = analytic.iter().zip(&fd).map(|(a, f)| rel_err(a, f, 1e-6)).fold(0.0, f64::max);
    Ok(worst)
}
