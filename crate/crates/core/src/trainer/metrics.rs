use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::MemoryBank;
use crate::datagen::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::hypergraph::cosine_knn;
use crate::model::{argmax, AdaptModel};
use crate::objective::LossBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenSetStats {
    pub known: usize,
    pub unknown: usize,
}

/// One line of the metrics stream. Loss fields are absent on evaluation-only
/// records; accuracy and neighbor fields are absent when not measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iter: u64,
    pub total: Option<f64>,
    pub l_ada_pull: Option<f64>,
    pub l_ada_push: Option<f64>,
    pub l_reg: Option<f64>,
    pub lambda: Option<f64>,
    pub acc: Option<f64>,
    pub neighbor_agreement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub misleading_ratio: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open_set: Option<OpenSetStats>,
}

impl MetricsRecord {
    pub fn empty(iter: u64) -> Self {
        Self {
            iter,
            total: None,
            l_ada_pull: None,
            l_ada_push: None,
            l_reg: None,
            lambda: None,
            acc: None,
            neighbor_agreement: None,
            misleading_ratio: None,
            open_set: None,
        }
    }

    pub fn with_loss(mut self, loss: &LossBreakdown) -> Self {
        self.total = Some(loss.total);
        self.l_ada_pull = Some(loss.l_ada_pull);
        self.l_ada_push = Some(loss.l_ada_push);
        self.l_reg = Some(loss.l_reg);
        self.lambda = Some(loss.lambda_used);
        self
    }

    pub fn loss(&self) -> Option<LossBreakdown> {
        Some(LossBreakdown {
            total: self.total?,
            l_ada_pull: self.l_ada_pull?,
            l_ada_push: self.l_ada_push?,
            l_reg: self.l_reg?,
            lambda_used: self.lambda?,
        })
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Neighbor statistics of predicted labels against true labels.
///
/// Returns the mean fraction of each sample's `h` cosine neighbors whose
/// predicted label equals the sample's label, and per class the fraction of
/// its samples whose nearest neighbor is predicted as another class.
pub fn neighbor_statistics(
    features: ArrayView2<f64>,
    predicted: &[usize],
    labels: &[usize],
    class_count: usize,
    h: usize,
) -> Result<(Option<f64>, Vec<Option<f64>>)> {
    let n = features.nrows();
    if n < 2 {
        return Ok((None, vec![None; class_count]));
    }
    let h = h.clamp(1, n - 1);
    let neighbors = cosine_knn(features, h)?;
    let mut agreement = 0.0;
    let mut misled = vec![0usize; class_count];
    let mut counts = vec![0usize; class_count];
    for (i, nbrs) in neighbors.iter().enumerate() {
        let hits = nbrs.iter().filter(|&&j| predicted[j] == labels[i]).count();
        agreement += hits as f64 / nbrs.len() as f64;
        counts[labels[i]] += 1;
        if predicted[nbrs[0]] != labels[i] {
            misled[labels[i]] += 1;
        }
    }
    let ratios = misled
        .iter()
        .zip(&counts)
        .map(|(&m, &c)| (c > 0).then(|| m as f64 / c as f64))
        .collect();
    Ok((Some(agreement / n as f64), ratios))
}

/// Accuracy and neighbor metrics of `model` on a labeled dataset.
///
/// Neighbors are searched among fresh features unless a memory bank covering
/// the dataset is given, in which case bank features and bank predictions
/// are used for the neighbor side.
pub fn evaluate(
    model: &AdaptModel,
    data: &EmbeddingDataset,
    bank: Option<&MemoryBank>,
    h: usize,
) -> Result<MetricsRecord> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::Config("evaluation needs a labeled dataset".into()))?;
    let fwd = model.forward_batch(data.features().view())?;
    let predicted: Vec<usize> = fwd.probs.rows().into_iter().map(argmax).collect();
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();

    let (features, neighbor_pred) = match bank {
        Some(b) => {
            if b.features.nrows() != data.len() {
                return Err(Error::Shape(format!(
                    "bank has {} rows, dataset {}",
                    b.features.nrows(),
                    data.len()
                )));
            }
            let pred: Vec<usize> = b.predictions.rows().into_iter().map(argmax).collect();
            (b.features.view(), pred)
        }
        None => (fwd.features.view(), predicted.clone()),
    };
    let classes = data.class_count().max(model.class_count());
    let (agreement, misleading) = neighbor_statistics(features, &neighbor_pred, labels, classes, h)?;

    let mut rec = MetricsRecord::empty(0);
    rec.acc = Some(hits as f64 / labels.len() as f64);
    rec.neighbor_agreement = agreement;
    rec.misleading_ratio = Some(misleading);
    Ok(rec)
}
