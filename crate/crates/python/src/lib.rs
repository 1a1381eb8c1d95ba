//! Python bindings. Arrays cross the boundary as lists of lists; configs
//! and metrics records as dicts with the same keys as their JSON forms.

use std::path::PathBuf;

use hypersfda::datagen::{self, load_dataset, save_dataset, ShiftSpec};
use hypersfda::model::{self, argmax, PretrainConfig};
use hypersfda::trainer::{self, load_model, save_model, AdaptConfig};
use hypersfda::{AdaptModel, Domain, EmbeddingDataset, Error};
use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};
use serde::Serialize;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NonFiniteLoss { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn to_dict<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_dict<T: serde::de::DeserializeOwned>(dict: &Bound<'_, PyDict>) -> PyResult<T> {
    let text: String = dict.py().import("json")?.call_method1("dumps", (dict,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Embedding matrix with optional labels and a domain tag.
#[pyclass(name = "Dataset", module = "hypersfda", from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: EmbeddingDataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (features, labels=None, domain="target", class_count=None))]
    fn new(
        features: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
        domain: &str,
        class_count: Option<usize>,
    ) -> PyResult<Self> {
        let domain: Domain = domain.parse().map_err(py_err)?;
        let classes = match (class_count, &labels) {
            (Some(c), _) => c,
            (None, Some(l)) => l.iter().max().map_or(0, |m| m + 1),
            (None, None) => return Err(PyValueError::new_err("class_count is required without labels")),
        };
        let inner = EmbeddingDataset::new(to_array(features)?, labels, domain, classes).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: load_dataset(path).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_dataset(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.features())
    }

    #[getter]
    fn labels(&self) -> Option<Vec<usize>> {
        self.inner.labels().map(<[usize]>::to_vec)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.inner.class_count()
    }

    #[getter]
    fn domain(&self) -> &'static str {
        self.inner.domain().as_str()
    }

    fn without_labels(&self) -> Self {
        Self { inner: self.inner.without_labels() }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, dim={}, classes={}, domain={}, labeled={})",
            self.inner.len(),
            self.inner.dim(),
            self.inner.class_count(),
            self.inner.domain(),
            self.inner.is_labeled()
        )
    }
}

/// Adapter plus classifier.
#[pyclass(name = "Model", module = "hypersfda", from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: AdaptModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (input_dim, feature_dim, class_count, seed=0))]
    fn new(input_dim: usize, feature_dim: usize, class_count: usize, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: AdaptModel::new(input_dim, feature_dim, class_count, seed).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: load_model(path).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_model(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.inner.class_count()
    }

    /// Returns `(features, probabilities)` for a batch of rows.
    fn forward(&self, x: Vec<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let fwd = self.inner.forward_batch(to_array(x)?.view()).map_err(py_err)?;
        Ok((to_rows(&fwd.features), to_rows(&fwd.probs)))
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        let fwd = self.inner.forward_batch(to_array(x)?.view()).map_err(py_err)?;
        Ok(fwd.probs.rows().into_iter().map(argmax).collect())
    }

    fn accuracy(&self, data: &PyDataset) -> PyResult<f64> {
        model::accuracy(&self.inner, &data.inner).map_err(py_err)
    }

    /// Supervised source training. Returns the trained model and its
    /// accuracy on `source`; `self` is left unchanged.
    #[pyo3(signature = (source, epochs=30, lr=1e-3, momentum=0.9, batch_size=64, label_smoothing=0.1, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn pretrain(
        &self,
        py: Python<'_>,
        source: &PyDataset,
        epochs: usize,
        lr: f64,
        momentum: f64,
        batch_size: usize,
        label_smoothing: f64,
        seed: u64,
    ) -> PyResult<(PyModel, f64)> {
        let config = PretrainConfig { epochs, lr, momentum, batch_size, label_smoothing, seed };
        let (model, data) = (self.inner.clone(), source.inner.clone());
        let report = py.detach(move || model::pretrain_source(model, &data, &config)).map_err(py_err)?;
        Ok((PyModel { inner: report.model }, report.accuracy))
    }

    fn __eq__(&self, other: &PyModel) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(input_dim={}, feature_dim={}, class_count={})",
            self.inner.input_dim(),
            self.inner.feature_dim(),
            self.inner.class_count()
        )
    }
}

/// The default adaptation settings as a dict.
#[pyfunction]
fn default_config(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_dict(py, &AdaptConfig::default())
}

/// Adapts `model` to `target`. `config` entries override the defaults.
/// Returns the adapted model and the list of metrics records.
#[pyfunction]
#[pyo3(signature = (model, target, config=None))]
fn adapt<'py>(
    py: Python<'py>,
    model: &PyModel,
    target: &PyDataset,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<(PyModel, Vec<Bound<'py, PyAny>>)> {
    let config: AdaptConfig = match config {
        Some(d) => from_dict(d)?,
        None => AdaptConfig::default(),
    };
    let (m, data) = (model.inner.clone(), target.inner.clone());
    let outcome = py.detach(move || trainer::adapt(m, &data, &config)).map_err(py_err)?;
    let records = outcome.metrics.iter().map(|r| to_dict(py, r)).collect::<PyResult<_>>()?;
    Ok((PyModel { inner: outcome.model }, records))
}

/// Accuracy and neighbor metrics on a labeled dataset, as a dict.
#[pyfunction]
#[pyo3(signature = (model, data, h=3))]
fn evaluate<'py>(py: Python<'py>, model: &PyModel, data: &PyDataset, h: usize) -> PyResult<Bound<'py, PyAny>> {
    let record = trainer::evaluate(&model.inner, &data.inner, None, h).map_err(py_err)?;
    to_dict(py, &record)
}

fn shift(rotate_deg: f64, noise: f64, seed: u64) -> ShiftSpec {
    ShiftSpec { noise_sigma: noise, seed, ..ShiftSpec::rotation_deg(rotate_deg) }
}

/// Gaussian class mixtures; the target is rotated and noised.
#[pyfunction]
#[pyo3(signature = (classes, dim, n_source, n_target, rotate_deg=0.0, noise=0.0, seed=0))]
fn gen_gaussian_domains(
    classes: usize,
    dim: usize,
    n_source: usize,
    n_target: usize,
    rotate_deg: f64,
    noise: f64,
    seed: u64,
) -> PyResult<(PyDataset, PyDataset)> {
    let (s, t) = datagen::gen_gaussian_domains(classes, dim, n_source, n_target, &shift(rotate_deg, noise, seed), seed)
        .map_err(py_err)?;
    Ok((PyDataset { inner: s }, PyDataset { inner: t }))
}

/// Two interleaved half circles embedded in `dim` dimensions.
#[pyfunction]
#[pyo3(signature = (dim, n_source, n_target, rotate_deg=0.0, noise=0.0, seed=0))]
fn gen_two_moons_domains(
    dim: usize,
    n_source: usize,
    n_target: usize,
    rotate_deg: f64,
    noise: f64,
    seed: u64,
) -> PyResult<(PyDataset, PyDataset)> {
    let (s, t) = datagen::gen_two_moons_domains(dim, n_source, n_target, &shift(rotate_deg, noise, seed), seed)
        .map_err(py_err)?;
    Ok((PyDataset { inner: s }, PyDataset { inner: t }))
}

/// Splits rows of a probability matrix into `(known, unknown)` indices by
/// prediction entropy.
#[pyfunction]
fn open_set_split(probs: Vec<Vec<f64>>) -> PyResult<(Vec<usize>, Vec<usize>)> {
    let split = trainer::open_set_split(to_array(probs)?.view()).map_err(py_err)?;
    Ok((split.known, split.unknown))
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(adapt, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(gen_gaussian_domains, m)?)?;
    m.add_function(wrap_pyfunction!(gen_two_moons_domains, m)?)?;
    m.add_function(wrap_pyfunction!(open_set_split, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[pymodule]
#[pyo3(name = "hypersfda")]
fn hypersfda_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
