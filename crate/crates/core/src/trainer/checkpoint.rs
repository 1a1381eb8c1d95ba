//! Training-state checkpoints.
//!
//! Layout: a complete model checkpoint (so any training checkpoint also
//! loads as a model), then `HSFT`, a u16 version, and the remaining state as
//! little-endian integers and row-major f64 tensors.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::MemoryBank;
use crate::error::{Error, Result};
use crate::hypergraph::ClusterAssignment;
use crate::model::{read_exact, read_matrix, read_u16, read_u32, read_u64, write_f64s};
use crate::model::{AdaptModel, GradientSet};
use crate::objective::EmaState;

const STATE_MAGIC: &[u8; 4] = b"HSFT";
const STATE_VERSION: u16 = 1;
const NO_STAMP: u64 = u64::MAX;

/// Everything needed to resume adaptation exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: AdaptModel,
    pub velocity: GradientSet,
    pub ema: EmaState,
    pub bank: MemoryBank,
    pub clusters: Option<ClusterAssignment>,
    /// Next iteration to run.
    pub iter: u64,
    /// Target indices being trained on.
    pub active: Vec<usize>,
}

impl TrainState {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<checkpoint>", e);
        self.model.write_to(&mut w)?;
        w.write_all(STATE_MAGIC).map_err(io)?;
        w.write_all(&STATE_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&self.iter.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.active.len() as u32).to_le_bytes()).map_err(io)?;
        let mut idx = Vec::with_capacity(self.active.len() * 4);
        for &i in &self.active {
            idx.extend_from_slice(&(i as u32).to_le_bytes());
        }
        w.write_all(&idx).map_err(io)?;
        self.velocity.write_to(&mut w)?;
        write_f64s(&mut w, self.ema.q.iter())?;
        let mut stamps = Vec::with_capacity(self.active.len() * 8);
        for s in &self.ema.last_update_iter {
            stamps.extend_from_slice(&s.unwrap_or(NO_STAMP).to_le_bytes());
        }
        w.write_all(&stamps).map_err(io)?;
        w.write_all(&self.bank.refreshed_at.to_le_bytes()).map_err(io)?;
        write_f64s(&mut w, self.bank.features.iter())?;
        write_f64s(&mut w, self.bank.predictions.iter())?;
        match &self.clusters {
            None => w.write_all(&0u32.to_le_bytes()).map_err(io)?,
            Some(c) => {
                w.write_all(&(c.cluster_size() as u32).to_le_bytes()).map_err(io)?;
                let mut buf = Vec::new();
                for row in &c.close {
                    for &j in row {
                        buf.extend_from_slice(&(j as u32).to_le_bytes());
                    }
                }
                w.write_all(&buf).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let model = AdaptModel::read_from(&mut r)?;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != STATE_MAGIC {
            return Err(Error::Checkpoint("model-only checkpoint, no training state".into()));
        }
        let version = read_u16(&mut r)?;
        if version != STATE_VERSION {
            return Err(Error::Checkpoint(format!("unsupported training-state version {version}")));
        }
        let iter = read_u64(&mut r)?;
        let n = read_u32(&mut r)? as usize;
        if n > (1 << 26) {
            return Err(Error::Checkpoint(format!("implausible sample count {n}")));
        }
        let active = (0..n).map(|_| read_u32(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let velocity = GradientSet::read_like(&mut r, &model)?;
        let c = model.class_count();
        let q = read_matrix(&mut r, n, c)?;
        let last_update_iter = (0..n)
            .map(|_| read_u64(&mut r).map(|s| (s != NO_STAMP).then_some(s)))
            .collect::<Result<Vec<_>>>()?;
        let refreshed_at = read_u64(&mut r)?;
        let features = read_matrix(&mut r, n, model.feature_dim())?;
        let predictions = read_matrix(&mut r, n, c)?;
        let h = read_u32(&mut r)? as usize;
        let clusters = if h == 0 {
            None
        } else {
            if h >= n.max(1) {
                return Err(Error::Checkpoint(format!("cluster size {h} for {n} samples")));
            }
            let flat = (0..n * h).map(|_| read_u32(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            if flat.iter().any(|&j| j >= n) {
                return Err(Error::Checkpoint("cluster index out of range".into()));
            }
            Some(ClusterAssignment { close: flat.chunks(h).map(<[usize]>::to_vec).collect() })
        };
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(|e| Error::io("<checkpoint>", e))? != 0 {
            return Err(Error::Checkpoint("trailing bytes after training state".into()));
        }
        Ok(Self {
            model,
            velocity,
            ema: EmaState { q, last_update_iter },
            bank: MemoryBank { features, predictions, refreshed_at },
            clusters,
            iter,
            active,
        })
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub(crate) fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w)?;
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_checkpoint(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), |w| state.write_to(w))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    TrainState::read_from(BufReader::new(file))
}

pub fn save_model(model: &AdaptModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), |w| model.write_to(w))
}

/// Reads the model part of a model or training checkpoint.
pub fn load_model(path: impl AsRef<Path>) -> Result<AdaptModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    AdaptModel::read_from(BufReader::new(file))
}

