//! The adaptable network: a rectified affine adapter followed by an affine
//! softmax classifier, with exact hand-written gradients.
//!
//! Row-vector convention throughout: for a sample `x` (length `d`),
//! `z = max(0, x·W_f + b_f)` and `p = softmax(z·W_g + b_g)`.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::EmbeddingDataset;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HSFD";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptModel {
    pub w_f: Array2<f64>,
    pub b_f: Array1<f64>,
    pub w_g: Array2<f64>,
    pub b_g: Array1<f64>,
}

/// One buffer per parameter tensor, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub w_f: Array2<f64>,
    pub b_f: Array1<f64>,
    pub w_g: Array2<f64>,
    pub b_g: Array1<f64>,
}

/// Batch forward results.
#[derive(Debug, Clone)]
pub struct Forward {
    pub features: Array2<f64>,
    pub probs: Array2<f64>,
}

impl AdaptModel {
    /// Near-identity adapter and a small random classifier.
    pub fn new(input_dim: usize, feature_dim: usize, class_count: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || feature_dim == 0 || class_count < 2 {
            return Err(Error::Config(format!(
                "invalid model dims d={input_dim}, d_z={feature_dim}, classes={class_count}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |scale: f64| rng.random_range(-scale..=scale);
        let mut w_f = Array2::from_shape_fn((input_dim, feature_dim), |_| uniform(0.01));
        for i in 0..input_dim.min(feature_dim) {
            w_f[[i, i]] += 1.0;
        }
        let s_f = 1.0 / (input_dim as f64).sqrt();
        let s_g = 1.0 / (feature_dim as f64).sqrt();
        let b_f = Array1::from_shape_fn(feature_dim, |_| uniform(s_f));
        let w_g = Array2::from_shape_fn((feature_dim, class_count), |_| uniform(s_g));
        let b_g = Array1::from_shape_fn(class_count, |_| uniform(s_g));
        Ok(Self { w_f, b_f, w_g, b_g })
    }

    pub fn from_parts(
        w_f: Array2<f64>,
        b_f: Array1<f64>,
        w_g: Array2<f64>,
        b_g: Array1<f64>,
    ) -> Result<Self> {
        if w_f.ncols() != b_f.len() || w_g.nrows() != b_f.len() || w_g.ncols() != b_g.len() {
            return Err(Error::Shape(format!(
                "inconsistent parameter shapes: W_f {:?}, b_f {}, W_g {:?}, b_g {}",
                w_f.dim(),
                b_f.len(),
                w_g.dim(),
                b_g.len()
            )));
        }
        let m = Self { w_f, b_f, w_g, b_g };
        m.check_finite()?;
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.w_f.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.w_f.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.w_g.ncols()
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let out = self.forward_batch(x.insert_axis(Axis(0)))?;
        Ok((out.features.row(0).to_owned(), out.probs.row(0).to_owned()))
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Forward> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut features = x.dot(&self.w_f) + &self.b_f;
        features.mapv_inplace(|v| v.max(0.0));
        let mut probs = features.dot(&self.w_g) + &self.b_g;
        for mut row in probs.rows_mut() {
            softmax_inplace(row.as_slice_mut().expect("standard layout"));
        }
        Ok(Forward { features, probs })
    }

    /// Logits before the softmax, used by tests and pretraining diagnostics.
    pub fn logits_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let z = (x.dot(&self.w_f) + &self.b_f).mapv(|v| v.max(0.0));
        z.dot(&self.w_g) + &self.b_g
    }

    /// Gradients of a loss given its derivative with respect to every
    /// prediction row `p_i`.
    pub fn backward(&self, x: ArrayView2<f64>, upstream: ArrayView2<f64>) -> Result<GradientSet> {
        if upstream.nrows() != x.nrows() || upstream.ncols() != self.class_count() {
            return Err(Error::Shape(format!(
                "upstream is {:?}, expected ({}, {})",
                upstream.dim(),
                x.nrows(),
                self.class_count()
            )));
        }
        let fwd = self.forward_batch(x)?;
        // softmax Jacobian (diag(p) - p pᵀ) applied to each upstream row
        let mut dlogits = Array2::<f64>::zeros(upstream.raw_dim());
        Zip::from(dlogits.rows_mut())
            .and(fwd.probs.rows())
            .and(upstream.rows())
            .for_each(|mut out, p, g| {
                let pg = p.dot(&g);
                Zip::from(&mut out).and(&p).and(&g).for_each(|o, &pc, &gc| *o = pc * (gc - pg));
            });
        Ok(self.backward_from_logits(x, &fwd.features, dlogits.view()))
    }

    pub(crate) fn backward_from_logits(
        &self,
        x: ArrayView2<f64>,
        features: &Array2<f64>,
        dlogits: ArrayView2<f64>,
    ) -> GradientSet {
        let w_g = features.t().dot(&dlogits);
        let b_g = dlogits.sum_axis(Axis(0));
        let mut dz = dlogits.dot(&self.w_g.t());
        // relu subgradient, 0 at the kink
        Zip::from(&mut dz).and(features).for_each(|g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        let w_f = x.t().dot(&dz);
        let b_f = dz.sum_axis(Axis(0));
        GradientSet { w_f, b_f, w_g, b_g }
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, ok) in [
            ("W_f", self.w_f.iter().all(|v| v.is_finite())),
            ("b_f", self.b_f.iter().all(|v| v.is_finite())),
            ("W_g", self.w_g.iter().all(|v| v.is_finite())),
            ("b_g", self.b_g.iter().all(|v| v.is_finite())),
        ] {
            if !ok {
                return Err(Error::NonFinite { tensor: name.into() });
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<checkpoint>", e);
        w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
        for dim in [self.input_dim(), self.feature_dim(), self.class_count()] {
            w.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
        }
        write_f64s(&mut w, self.w_f.iter())?;
        write_f64s(&mut w, self.b_f.iter())?;
        write_f64s(&mut w, self.w_g.iter())?;
        write_f64s(&mut w, self.b_g.iter())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
        }
        let version = read_u16(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let d = read_u32(&mut r)? as usize;
        let dz = read_u32(&mut r)? as usize;
        let c = read_u32(&mut r)? as usize;
        if d == 0 || dz == 0 || c < 2 || d.saturating_mul(dz) > (1 << 28) || dz.saturating_mul(c) > (1 << 28) {
            return Err(Error::Checkpoint(format!("implausible dims ({d}, {dz}, {c})")));
        }
        let w_f = read_matrix(&mut r, d, dz)?;
        let b_f = Array1::from(read_f64s(&mut r, dz)?);
        let w_g = read_matrix(&mut r, dz, c)?;
        let b_g = Array1::from(read_f64s(&mut r, c)?);
        Self::from_parts(w_f, b_f, w_g, b_g).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// Numerically stable softmax with max-logit subtraction.
pub fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl GradientSet {
    pub fn zeros_like(model: &AdaptModel) -> Self {
        Self {
            w_f: Array2::zeros(model.w_f.raw_dim()),
            b_f: Array1::zeros(model.b_f.raw_dim()),
            w_g: Array2::zeros(model.w_g.raw_dim()),
            b_g: Array1::zeros(model.b_g.raw_dim()),
        }
    }

    pub fn zero(&mut self) {
        self.w_f.fill(0.0);
        self.b_f.fill(0.0);
        self.w_g.fill(0.0);
        self.b_g.fill(0.0);
    }

    fn matches(&self, model: &AdaptModel) -> bool {
        self.w_f.dim() == model.w_f.dim()
            && self.b_f.dim() == model.b_f.dim()
            && self.w_g.dim() == model.w_g.dim()
            && self.b_g.dim() == model.b_g.dim()
    }

    fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("W_f", self.w_f.iter().all(|v| v.is_finite())),
            ("b_f", self.b_f.iter().all(|v| v.is_finite())),
            ("W_g", self.w_g.iter().all(|v| v.is_finite())),
            ("b_g", self.b_g.iter().all(|v| v.is_finite())),
        ]
        .into_iter()
        .find(|(_, ok)| !ok)
        .map(|(name, _)| name)
    }

    pub(crate) fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        write_f64s(&mut w, self.w_f.iter())?;
        write_f64s(&mut w, self.b_f.iter())?;
        write_f64s(&mut w, self.w_g.iter())?;
        write_f64s(&mut w, self.b_g.iter())
    }

    pub(crate) fn read_like<R: Read>(mut r: R, model: &AdaptModel) -> Result<Self> {
        let (d, dz) = model.w_f.dim();
        let c = model.class_count();
        Ok(Self {
            w_f: read_matrix(&mut r, d, dz)?,
            b_f: Array1::from(read_f64s(&mut r, dz)?),
            w_g: read_matrix(&mut r, dz, c)?,
            b_g: Array1::from(read_f64s(&mut r, c)?),
        })
    }
}

/// Momentum SGD: `v ← momentum·v + grad`, `θ ← θ − lr·v`.
pub fn sgd_step(
    model: &mut AdaptModel,
    grads: &GradientSet,
    lr: f64,
    momentum: f64,
    velocity: &mut GradientSet,
) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::Config(format!("momentum must lie in [0, 1), got {momentum}")));
    }
    if !grads.matches(model) || !velocity.matches(model) {
        return Err(Error::Shape("gradient buffers do not match the model".into()));
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite { tensor: format!("gradient of {name}") });
    }
    fn step<D: ndarray::Dimension>(
        p: &mut ndarray::Array<f64, D>,
        v: &mut ndarray::Array<f64, D>,
        g: &ndarray::Array<f64, D>,
        lr: f64,
        momentum: f64,
    ) {
        Zip::from(p).and(v).and(g).for_each(|p, v, &g| {
            *v = momentum * *v + g;
            *p -= lr * *v;
        });
    }
    step(&mut model.w_f, &mut velocity.w_f, &grads.w_f, lr, momentum);
    step(&mut model.b_f, &mut velocity.b_f, &grads.b_f, lr, momentum);
    step(&mut model.w_g, &mut velocity.w_g, &grads.w_g, lr, momentum);
    step(&mut model.b_g, &mut velocity.b_g, &grads.b_g, lr, momentum);
    model.check_finite()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub label_smoothing: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { epochs: 30, lr: 1e-3, momentum: 0.9, batch_size: 64, label_smoothing: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainReport {
    pub model: AdaptModel,
    pub accuracy: f64,
    pub final_loss: f64,
}

/// Top-1 accuracy of `model` on a labeled dataset.
pub fn accuracy(model: &AdaptModel, data: &EmbeddingDataset) -> Result<f64> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::Config("accuracy needs a labeled dataset".into()))?;
    let fwd = model.forward_batch(data.features().view())?;
    let hits = fwd
        .probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(p, &l)| argmax(p.view()) == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Supervised training on the labeled source domain with label-smoothed
/// cross-entropy. Gradients are averaged over each mini-batch.
pub fn pretrain_source(
    model: AdaptModel,
    source: &EmbeddingDataset,
    config: &PretrainConfig,
) -> Result<PretrainReport> {
    let labels = source
        .labels()
        .ok_or_else(|| Error::Config("source pretraining needs a labeled dataset".into()))?;
    if source.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "dataset dim {} does not match model input {}",
            source.dim(),
            model.input_dim()
        )));
    }
    if source.class_count() != model.class_count() {
        return Err(Error::Shape(format!(
            "dataset has {} classes, model {}",
            source.class_count(),
            model.class_count()
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if !(0.0..1.0).contains(&config.label_smoothing) {
        return Err(Error::Config("label_smoothing must lie in [0, 1)".into()));
    }
    let mut model = model;
    let c = model.class_count();
    let n = source.len();
    let mut velocity = GradientSet::zeros_like(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let eps = config.label_smoothing;
    let mut final_loss = f64::NAN;

    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xb = source.features().select(Axis(0), batch);
            let fwd = model.forward_batch(xb.view())?;
            let scale = 1.0 / batch.len() as f64;
            let mut dlogits = fwd.probs.clone();
            for (r, &i) in batch.iter().enumerate() {
                for k in 0..c {
                    let target = eps / c as f64 + if k == labels[i] { 1.0 - eps } else { 0.0 };
                    epoch_loss -= target * fwd.probs[[r, k]].max(1e-300).ln();
                    dlogits[[r, k]] = (fwd.probs[[r, k]] - target) * scale;
                }
            }
            let grads = model.backward_from_logits(xb.view(), &fwd.features, dlogits.view());
            sgd_step(&mut model, &grads, config.lr, config.momentum, &mut velocity)?;
        }
        final_loss = epoch_loss / n as f64;
    }
    let acc = accuracy(&model, source)?;
    Ok(PretrainReport { model, accuracy: acc, final_loss })
}

pub(crate) fn write_f64s<'a, W: Write>(w: &mut W, vals: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut buf = Vec::new();
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io("<checkpoint>", e))
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))
}

pub(crate) fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    read_exact(r, &mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub(crate) fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let v = read_f64s(r, rows * cols)?;
    Array2::from_shape_vec((rows, cols), v).map_err(|e| Error::Checkpoint(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> AdaptModel {
        AdaptModel::from_parts(
            array![[1.0, -0.5], [0.25, 2.0]],
            array![0.1, -0.2],
            array![[0.3, -0.7], [1.1, 0.4]],
            array![0.05, -0.05],
        )
        .unwrap()
    }

    #[test]
    fn zero_classifier_gives_uniform() {
        let mut m = AdaptModel::new(3, 3, 4, 1).unwrap();
        m.w_g.fill(0.0);
        m.b_g.fill(0.0);
        let (_, p) = m.forward(array![0.3, -1.0, 2.0].view()).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_computed_forward() {
        // x = [1, 0]: u = [1.1, -0.7] -> z = [1.1, 0]
        // logits = [0.33 + 0.05, -0.77 - 0.05] = [0.38, -0.82]
        // p0 = 1 / (1 + e^{-1.2}) = 0.7685247834990175
        let (z, p) = tiny().forward(array![1.0, 0.0].view()).unwrap();
        assert!((z[0] - 1.1).abs() < 1e-15 && z[1] == 0.0);
        assert!((p[0] - 0.768_524_783_499_017_5).abs() < 1e-12, "{p}");
        assert!((p[1] - 0.231_475_216_500_982_5).abs() < 1e-12);
    }

    #[test]
    fn extreme_logits_stay_normalized() {
        let mut row = [100.0, -100.0, 99.0, 0.0];
        softmax_inplace(&mut row);
        assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let m = tiny();
        assert!(matches!(m.forward(array![1.0, 2.0, 3.0].view()), Err(Error::Shape(_))));
        let x = array![[1.0, 0.0]];
        assert!(matches!(m.backward(x.view(), array![[1.0]].view()), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let m = tiny();
        let x = array![[1.0, 0.5], [-0.2, 0.3]];
        let g = m.backward(x.view(), Array2::zeros((2, 2)).view()).unwrap();
        assert_eq!(g, GradientSet::zeros_like(&m));
    }

    #[test]
    fn duplicated_row_doubles_contribution() {
        let m = tiny();
        let x1 = array![[0.7, 0.4]];
        let up1 = array![[0.3, -1.2]];
        let x2 = array![[0.7, 0.4], [0.7, 0.4]];
        let up2 = array![[0.3, -1.2], [0.3, -1.2]];
        let g1 = m.backward(x1.view(), up1.view()).unwrap();
        let g2 = m.backward(x2.view(), up2.view()).unwrap();
        assert_eq!(g2.w_f, &g1.w_f * 2.0);
        assert_eq!(g2.b_g, &g1.b_g * 2.0);
    }

    #[test]
    fn sgd_plain_and_momentum() {
        let mut m = tiny();
        let before = m.clone();
        let mut g = GradientSet::zeros_like(&m);
        g.b_g.fill(1.0);
        let mut v = GradientSet::zeros_like(&m);
        sgd_step(&mut m, &g, 0.1, 0.0, &mut v).unwrap();
        assert!((m.b_g[0] - (before.b_g[0] - 0.1)).abs() < 1e-15);

        // two momentum steps with constant gradient: lr·(g + 1.9g)
        let mut m = before.clone();
        let mut v = GradientSet::zeros_like(&m);
        sgd_step(&mut m, &g, 0.1, 0.9, &mut v).unwrap();
        sgd_step(&mut m, &g, 0.1, 0.9, &mut v).unwrap();
        assert!((before.b_g[0] - m.b_g[0] - 0.1 * 2.9).abs() < 1e-14);

        let mut m = before.clone();
        let zero = GradientSet::zeros_like(&m);
        let mut v = GradientSet::zeros_like(&m);
        sgd_step(&mut m, &zero, 0.1, 0.9, &mut v).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn sgd_rejects_non_finite_gradient() {
        let mut m = tiny();
        let mut g = GradientSet::zeros_like(&m);
        g.w_g[[0, 1]] = f64::NAN;
        let mut v = GradientSet::zeros_like(&m);
        match sgd_step(&mut m, &g, 0.1, 0.9, &mut v) {
            Err(Error::NonFinite { tensor }) => assert!(tensor.contains("W_g")),
            other => panic!("{other:?}"),
        }
        assert!(sgd_step(&mut m, &GradientSet::zeros_like(&tiny()), 0.0, 0.9, &mut v).is_err());
        assert!(sgd_step(&mut m, &GradientSet::zeros_like(&tiny()), 0.1, 1.0, &mut v).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_bad_magic() {
        let m = AdaptModel::new(5, 4, 3, 9).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"HSFD");
        assert_eq!(buf.len(), 4 + 2 + 12 + 8 * (5 * 4 + 4 + 4 * 3 + 3));
        let back = AdaptModel::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        buf[0] = b'X';
        assert!(matches!(AdaptModel::read_from(buf.as_slice()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn pretrain_zero_epochs_is_identity() {
        let (src, _) = crate::datagen::gen_gaussian_domains(
            3,
            4,
            30,
            30,
            &crate::datagen::ShiftSpec::default(),
            2,
        )
        .unwrap();
        let m = AdaptModel::new(4, 4, 3, 0).unwrap();
        let cfg = PretrainConfig { epochs: 0, ..PretrainConfig::default() };
        let rep = pretrain_source(m.clone(), &src, &cfg).unwrap();
        assert_eq!(rep.model, m);
        assert!(pretrain_source(m, &src.without_labels(), &cfg).is_err());
    }
}
