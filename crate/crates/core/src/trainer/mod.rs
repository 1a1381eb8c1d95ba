//! The adaptation loop.
//!
//! Each iteration takes the next mini-batch of a seeded per-epoch shuffle,
//! rebuilds the hypergraph when the iteration is a multiple of `t_in`, looks
//! up close sets, forms background sets from the rest of the batch, and takes
//! one momentum SGD step on the pull/push + KL objective. The memory bank
//! holds the features and predictions the close sets are read from: it is
//! fully rebuilt at every refresh and the processed batch rows are rewritten
//! after every step.

mod checkpoint;
mod config;
mod metrics;
mod openset;

pub use checkpoint::{load_checkpoint, load_model, save_checkpoint, save_model, TrainState};
pub use config::{AdaptConfig, Variant};
pub use metrics::{evaluate, neighbor_statistics, MetricsRecord, OpenSetStats};
pub use openset::{open_set_split, two_means_high, OpenSetSplit};

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::hypergraph::{build_hypergraph, cosine_knn, ClusterAssignment, Hypergraph, HypergraphParams};
use crate::model::{argmax, sgd_step, AdaptModel, GradientSet};
use crate::objective::{batch_background, batch_objective, lambda_schedule, BatchInputs, EmaState, ObjectiveWeights};

/// Cached per-sample features and predictions, row `i` for training
/// sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    pub features: Array2<f64>,
    pub predictions: Array2<f64>,
    pub refreshed_at: u64,
}

/// Products of one refresh.
#[derive(Debug, Clone, PartialEq)]
pub struct Refresh {
    /// `None` for the pairwise variant, which skips the hypergraph.
    pub hypergraph: Option<Hypergraph>,
    pub bank: MemoryBank,
    pub clusters: ClusterAssignment,
}

/// Full forward pass over `data` followed by hypergraph construction and
/// clustering as selected by `config.variant`.
pub fn refresh_hypergraph(
    model: &AdaptModel,
    data: &EmbeddingDataset,
    config: &AdaptConfig,
    iter: u64,
) -> Result<Refresh> {
    let fwd = model.forward_batch(data.features().view())?;
    let bank = MemoryBank { features: fwd.features, predictions: fwd.probs, refreshed_at: iter };
    let (hypergraph, clusters) = match config.variant {
        Variant::Pairwise => (None, ClusterAssignment { close: cosine_knn(bank.features.view(), config.h)? }),
        Variant::Full | Variant::NoSelfLoop => {
            let params = HypergraphParams {
                k: config.k,
                alpha: config.alpha,
                h: config.h,
                m_prime: config.m_prime,
                self_loops: config.variant == Variant::Full,
                seed: config.seed,
                nnls: config.nnls,
            };
            let g = build_hypergraph(bank.features.view(), bank.predictions.view(), &params)?;
            let clusters = g.clusters.clone();
            (Some(g), clusters)
        }
    };
    Ok(Refresh { hypergraph, bank, clusters })
}

/// Result of a completed adaptation run.
#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub model: AdaptModel,
    pub metrics: Vec<MetricsRecord>,
    pub state: TrainState,
}

/// Stateful adaptation driver. [`Trainer::step`] runs one iteration;
/// [`Trainer::run`] runs to the end of the configured epochs.
pub struct Trainer {
    config: AdaptConfig,
    target: EmbeddingDataset,
    train: EmbeddingDataset,
    state: TrainState,
    max_iter: u64,
    iters_per_epoch: u64,
    epoch_order: Option<(u64, Vec<usize>)>,
    last_refresh: Option<Refresh>,
}

impl Trainer {
    /// Starts adaptation of `model` on `target`. In open-set mode the
    /// initial model's predictions decide which samples are trained on.
    pub fn new(model: AdaptModel, target: &EmbeddingDataset, config: AdaptConfig) -> Result<Self> {
        check_compat(&model, target)?;
        let active = if config.open_set {
            let fwd = model.forward_batch(target.features().view())?;
            open_set_split(fwd.probs.view())?.known
        } else {
            (0..target.len()).collect()
        };
        let n = active.len();
        config.validate(n)?;
        let state = TrainState {
            velocity: GradientSet::zeros_like(&model),
            ema: EmaState::new(n, model.class_count()),
            bank: MemoryBank {
                features: Array2::zeros((n, model.feature_dim())),
                predictions: Array2::zeros((n, model.class_count())),
                refreshed_at: 0,
            },
            clusters: None,
            iter: 0,
            active,
            model,
        };
        Self::from_state(state, target, config)
    }

    /// Resumes from a saved state.
    pub fn from_state(state: TrainState, target: &EmbeddingDataset, config: AdaptConfig) -> Result<Self> {
        check_compat(&state.model, target)?;
        let train = target.subset(&state.active)?.without_labels();
        let n = train.len();
        config.validate(n)?;
        if state.ema.q.nrows() != n || state.bank.features.nrows() != n {
            return Err(Error::Checkpoint(format!(
                "state covers {} samples, training set has {n}",
                state.ema.q.nrows()
            )));
        }
        let max_iter = config.max_iter(n);
        if state.iter > max_iter {
            return Err(Error::Checkpoint(format!(
                "state is at iteration {} beyond the configured {max_iter}",
                state.iter
            )));
        }
        Ok(Self {
            iters_per_epoch: config.iters_per_epoch(n),
            max_iter,
            config,
            target: target.clone(),
            train,
            state,
            epoch_order: None,
            last_refresh: None,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn model(&self) -> &AdaptModel {
        &self.state.model
    }

    pub fn config(&self) -> &AdaptConfig {
        &self.config
    }

    pub fn iter(&self) -> u64 {
        self.state.iter
    }

    pub fn max_iter(&self) -> u64 {
        self.max_iter
    }

    pub fn is_finished(&self) -> bool {
        self.state.iter >= self.max_iter
    }

    /// Artifacts of the most recent refresh done by this trainer instance.
    pub fn last_refresh(&self) -> Option<&Refresh> {
        self.last_refresh.as_ref()
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(&self.state, path)
    }

    fn epoch_order(&mut self, epoch: u64) -> &[usize] {
        if self.epoch_order.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            rng.set_stream(epoch);
            let mut order: Vec<usize> = (0..self.train.len()).collect();
            order.shuffle(&mut rng);
            self.epoch_order = Some((epoch, order));
        }
        &self.epoch_order.as_ref().expect("just set").1
    }

    fn open_set_stats(&self) -> Option<OpenSetStats> {
        self.config.open_set.then(|| OpenSetStats {
            known: self.state.active.len(),
            unknown: self.target.len() - self.state.active.len(),
        })
    }

    /// Metrics of the current model on the target, without loss fields.
    ///
    /// Accuracy needs target labels. In open-set mode a sample counts as
    /// correct when it is known and classified correctly, or excluded and
    /// its label lies outside the model's classes.
    pub fn measure(&self, with_neighbors: bool) -> Result<MetricsRecord> {
        let mut rec = MetricsRecord::empty(self.state.iter);
        rec.open_set = self.open_set_stats();
        let Some(labels) = self.target.labels() else {
            return Ok(rec);
        };
        let model = &self.state.model;
        let fwd = model.forward_batch(self.target.features().view())?;
        let predicted: Vec<usize> = fwd.probs.rows().into_iter().map(argmax).collect();
        let hits = if self.config.open_set {
            let mut known = vec![false; self.target.len()];
            for &i in &self.state.active {
                known[i] = true;
            }
            (0..labels.len())
                .filter(|&i| {
                    if known[i] {
                        predicted[i] == labels[i]
                    } else {
                        labels[i] >= model.class_count()
                    }
                })
                .count()
        } else {
            predicted.iter().zip(labels).filter(|(p, l)| p == l).count()
        };
        rec.acc = Some(hits as f64 / labels.len() as f64);
        if with_neighbors {
            let classes = self.target.class_count().max(model.class_count());
            let (agreement, misleading) =
                neighbor_statistics(fwd.features.view(), &predicted, labels, classes, self.config.h)?;
            rec.neighbor_agreement = agreement;
            rec.misleading_ratio = Some(misleading);
        }
        Ok(rec)
    }

    /// Runs one iteration and returns its metrics record. Metrics describe
    /// the model before the update. On a non-finite loss the state is left
    /// untouched and [`Error::NonFiniteLoss`] is returned.
    pub fn step(&mut self) -> Result<MetricsRecord> {
        if self.is_finished() {
            return Err(Error::Config("training already finished".into()));
        }
        let t = self.state.iter;
        if t.is_multiple_of(self.config.t_in) || self.state.clusters.is_none() {
            let refresh = refresh_hypergraph(&self.state.model, &self.train, &self.config, t)?;
            self.state.bank = refresh.bank.clone();
            self.state.clusters = Some(refresh.clusters.clone());
            self.last_refresh = Some(refresh);
        }
        let epoch = t / self.iters_per_epoch;
        let pos = (t % self.iters_per_epoch) as usize;
        let record = self.measure(pos == 0)?;

        let bs = self.config.batch_size;
        let batch: Vec<usize> = {
            let order = self.epoch_order(epoch);
            order[pos * bs..((pos + 1) * bs).min(order.len())].to_vec()
        };
        let xb = self.train.features().select(Axis(0), &batch);
        let model = &self.state.model;
        let fwd = model.forward_batch(xb.view())?;

        let delta = self.config.delta;
        let old_q = self.state.ema.q.select(Axis(0), &batch);
        let targets = old_q * delta + &fwd.probs * (1.0 - delta);

        let clusters = self.state.clusters.as_ref().expect("refreshed above");
        let close: Vec<Array2<f64>> = batch
            .iter()
            .map(|&i| self.state.bank.predictions.select(Axis(0), &clusters.close[i]))
            .collect();
        let background = batch_background(&batch, clusters);
        let lambda = lambda_schedule(t, self.max_iter, self.config.beta)?;
        let weights = ObjectiveWeights { gamma: self.config.gamma, lambda, eta: self.config.eta };
        let inputs = BatchInputs {
            probs: fwd.probs.view(),
            close: &close,
            background: &background,
            targets: targets.view(),
        };
        let (loss, upstream) = batch_objective(&inputs, &weights)?;
        if !loss.total.is_finite() || upstream.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss { iter: t });
        }
        let grads = model.backward(xb.view(), upstream.view())?;

        let mut next_model = self.state.model.clone();
        let mut next_velocity = self.state.velocity.clone();
        sgd_step(&mut next_model, &grads, self.config.lr, self.config.momentum, &mut next_velocity)?;
        let after = next_model.forward_batch(xb.view())?;

        // commit
        self.state.model = next_model;
        self.state.velocity = next_velocity;
        for (r, &i) in batch.iter().enumerate() {
            self.state.ema.update(i, fwd.probs.row(r), delta, t)?;
            self.state.bank.features.row_mut(i).assign(&after.features.row(r));
            self.state.bank.predictions.row_mut(i).assign(&after.probs.row(r));
        }
        self.state.iter += 1;
        Ok(record.with_loss(&loss))
    }

    /// Runs the remaining iterations, handing each record to `sink`. A
    /// final loss-free record describes the adapted model. On a non-finite
    /// loss the untouched state is written to `abort_checkpoint` if given.
    pub fn run(
        mut self,
        abort_checkpoint: Option<&Path>,
        mut sink: impl FnMut(&MetricsRecord) -> Result<()>,
    ) -> Result<AdaptOutcome> {
        let mut metrics = Vec::new();
        let ran = !self.is_finished();
        while !self.is_finished() {
            match self.step() {
                Ok(rec) => {
                    sink(&rec)?;
                    metrics.push(rec);
                }
                Err(e @ Error::NonFiniteLoss { .. }) => {
                    if let Some(path) = abort_checkpoint {
                        self.save_checkpoint(path)?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
        }
        if ran {
            let fin = self.measure(true)?;
            sink(&fin)?;
            metrics.push(fin);
        }
        Ok(AdaptOutcome { model: self.state.model.clone(), metrics, state: self.state })
    }
}

fn check_compat(model: &AdaptModel, target: &EmbeddingDataset) -> Result<()> {
    if model.input_dim() != target.dim() {
        return Err(Error::Shape(format!(
            "model expects {}-dimensional inputs, target has {}",
            model.input_dim(),
            target.dim()
        )));
    }
    Ok(())
}

/// Adapts `model` to `target` for `config.epochs` epochs.
pub fn adapt(model: AdaptModel, target: &EmbeddingDataset, config: &AdaptConfig) -> Result<AdaptOutcome> {
    Trainer::new(model, target, config.clone())?.run(None, |_| Ok(()))
}
