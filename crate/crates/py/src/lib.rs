//! Python bindings: datasets, models, metrics and explainers.
//!
//! Structured results (reports, curves, explanations) come back as plain
//! Python dicts built from their JSON form.

use malxai::dataio::{self, SmoteConfig, SplitMode, SplitSpec};
use malxai::evalkit;
use malxai::models::{self, ModelKind, ModelSpec, Optimizer, TrainConfig};
use malxai::xai::{self, LimeConfig, PredictFn, ShapConfig, ShapMode};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: malxai::Error) -> PyErr {
    match e {
        malxai::Error::Io { .. } | malxai::Error::Csv(_) => PyIOError::new_err(e.to_string()),
        malxai::Error::Diverged { .. } | malxai::Error::Singular(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Labeled API-call sequences.
#[pyclass(name = "Dataset", module = "pymalxai")]
#[derive(Clone)]
struct PyDataset {
    inner: dataio::Dataset,
}

#[pymethods]
impl PyDataset {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(rows={}, malware={}, benign={})",
            self.inner.len(),
            self.inner.count(dataio::Label::Malware),
            self.inner.count(dataio::Label::Benign)
        )
    }

    fn hashes(&self) -> Vec<String> {
        self.inner.records().iter().map(|r| r.hash().to_string()).collect()
    }

    fn rows(&self) -> Vec<Vec<u16>> {
        self.inner.records().iter().map(|r| r.calls().to_vec()).collect()
    }

    fn labels(&self) -> Vec<u8> {
        self.inner.labels()
    }

    fn count_malware(&self) -> usize {
        self.inner.count(dataio::Label::Malware)
    }

    fn count_benign(&self) -> usize {
        self.inner.count(dataio::Label::Benign)
    }

    fn save_csv(&self, path: &str) -> PyResult<()> {
        dataio::save_csv(&self.inner, path).map_err(err)
    }

    fn undersample(&self, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: dataio::balance_undersample(&self.inner, seed).map_err(err)? })
    }

    #[pyo3(signature = (k_neighbors=5, target_ratio=1.0, seed=0))]
    fn smote(&self, k_neighbors: usize, target_ratio: f64, seed: u64) -> PyResult<Self> {
        let cfg = SmoteConfig { k_neighbors, target_ratio, seed };
        Ok(Self { inner: dataio::smote(&self.inner, &cfg).map_err(err)? })
    }

    /// `mode` is `"random"`, `"top_down"` or `"bottom_up"`.
    #[pyo3(signature = (mode="random", train_frac=0.8, seed=0))]
    fn split(&self, mode: &str, train_frac: f64, seed: u64) -> PyResult<(Self, Self)> {
        let mode = match mode {
            "random" => SplitMode::Random { seed },
            "top_down" => SplitMode::TopDown,
            "bottom_up" => SplitMode::BottomUp,
            other => return Err(PyValueError::new_err(format!("unknown split mode {other:?}"))),
        };
        let (a, b) = dataio::split(&self.inner, &SplitSpec::new(mode, train_frac)).map_err(err)?;
        Ok((Self { inner: a }, Self { inner: b }))
    }
}

#[pyfunction]
#[pyo3(signature = (n_malware, n_benign, seed=0))]
fn synth(n_malware: usize, n_benign: usize, seed: u64) -> PyDataset {
    PyDataset { inner: dataio::synth_generate(n_malware, n_benign, seed) }
}

#[pyfunction]
fn load_csv(path: &str) -> PyResult<PyDataset> {
    Ok(PyDataset { inner: dataio::load_csv(path).map_err(err)? })
}

/// A classifier returning the malware probability.
#[pyclass(name = "Model", module = "pymalxai")]
struct PyModel {
    inner: models::Model,
}

#[pymethods]
impl PyModel {
    /// Builds a model of `kind` (`mlp`, `cnn`, `rnn`, `cnn-lstm`) with its
    /// default architecture, or from a full spec given as JSON.
    #[new]
    #[pyo3(signature = (kind="mlp", seed=0, spec_json=None))]
    fn new(kind: &str, seed: u64, spec_json: Option<&str>) -> PyResult<Self> {
        let spec = match spec_json {
            Some(s) => serde_json::from_str::<ModelSpec>(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => ModelSpec::default_for(kind.parse::<ModelKind>().map_err(PyValueError::new_err)?),
        };
        Ok(Self { inner: models::build_model(&spec, seed).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: models::load_weights(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        models::save_weights(&self.inner, path).map_err(err)
    }

    fn spec_json(&self) -> String {
        serde_json::to_string(self.inner.spec()).expect("spec serializes")
    }

    /// `(total, trainable, non_trainable)`.
    fn param_count(&self) -> (usize, usize, usize) {
        let c = self.inner.param_count();
        (c.total, c.trainable, c.non_trainable)
    }

    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.summary().map_err(err)?)
    }

    #[pyo3(signature = (train, val=None, epochs=150, batch_size=512, learning_rate=1e-3, optimizer="adam", seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        train: &PyDataset,
        val: Option<&PyDataset>,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        optimizer: &str,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let optimizer = match optimizer {
            "adam" => Optimizer::adam(),
            "sgd" => Optimizer::Sgd,
            other => return Err(PyValueError::new_err(format!("unknown optimizer {other:?}"))),
        };
        let cfg = TrainConfig { epochs, batch_size, learning_rate, optimizer, seed, shuffle: true };
        let (rows, labels) = (train.inner.rows(), train.inner.labels());
        let val_data = val.map(|v| (v.inner.rows(), v.inner.labels()));
        let model = &mut self.inner;
        let history = py
            .detach(|| {
                let val = val_data.as_ref().map(|(r, l)| (r.as_slice(), l.as_slice()));
                models::fit_rows(model, &rows, &labels, val, &cfg)
            })
            .map_err(err)?;
        to_py(py, &history)
    }

    fn predict_proba(&self, py: Python<'_>, rows: Vec<Vec<u16>>) -> PyResult<Vec<f64>> {
        py.detach(|| self.inner.predict_proba(&rows)).map_err(err)
    }

    #[pyo3(signature = (rows, threshold=0.5))]
    fn predict_labels(&self, py: Python<'_>, rows: Vec<Vec<u16>>, threshold: f64) -> PyResult<Vec<u8>> {
        py.detach(|| self.inner.predict_labels(&rows, threshold)).map_err(err)
    }
}

#[pyfunction]
fn metrics<'py>(py: Python<'py>, y_true: Vec<u8>, y_pred: Vec<u8>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &evalkit::metrics(&y_true, &y_pred).map_err(err)?)
}

#[pyfunction]
fn roc_curve<'py>(py: Python<'py>, y_true: Vec<u8>, scores: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &evalkit::roc(&y_true, &scores).map_err(err)?)
}

#[pyfunction]
fn pr_curve<'py>(py: Python<'py>, y_true: Vec<u8>, scores: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &evalkit::pr_curve(&y_true, &scores).map_err(err)?)
}

/// Wraps a Python callable `f(rows: list[list[int]]) -> list[float]`.
struct PyCallable(Py<PyAny>);

impl PredictFn for PyCallable {
    fn predict(&self, rows: &[Vec<u16>]) -> malxai::Result<Vec<f64>> {
        Python::attach(|py| {
            self.0
                .call1(py, (rows.to_vec(),))
                .and_then(|r| r.extract::<Vec<f64>>(py))
                .map_err(|e| malxai::Error::InvalidArgument(format!("python predict function failed: {e}")))
        })
    }
}

enum Predictor<'a> {
    Model(PyRef<'a, PyModel>),
    Callable(PyCallable),
}

impl<'a> Predictor<'a> {
    fn from_any(f: &'a Bound<'_, PyAny>) -> PyResult<Self> {
        if let Ok(m) = f.cast::<PyModel>() {
            Ok(Self::Model(m.borrow()))
        } else if f.is_callable() {
            Ok(Self::Callable(PyCallable(f.clone().unbind())))
        } else {
            Err(PyValueError::new_err("expected a Model or a callable"))
        }
    }

    fn as_dyn(&self) -> &dyn PredictFn {
        match self {
            Self::Model(m) => &m.inner,
            Self::Callable(c) => c,
        }
    }
}

/// LIME explanation of one sequence. `f` is a Model or a callable.
#[pyfunction]
#[pyo3(signature = (f, x, replacement, num_samples=5000, kernel_width=7.5, ridge_penalty=1.0, num_features=10, seed=0))]
#[allow(clippy::too_many_arguments)]
fn lime_explain<'py>(
    py: Python<'py>,
    f: &Bound<'py, PyAny>,
    x: Vec<u16>,
    replacement: Vec<u16>,
    num_samples: usize,
    kernel_width: f64,
    ridge_penalty: f64,
    num_features: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = LimeConfig { num_samples, kernel_width, ridge_penalty, num_features, seed };
    let p = Predictor::from_any(f)?;
    let target = p.as_dyn();
    let e = py.detach(|| xai::lime_explain(target, &x, &replacement, &cfg)).map_err(err)?;
    to_py(py, &e)
}

/// SHAP explanation against a background set. `mode` is `"exact"` or
/// `"permutation"`.
#[pyfunction]
#[pyo3(signature = (f, x, background, mode="permutation", features=None, num_permutations=200, seed=0))]
#[allow(clippy::too_many_arguments)]
fn shap_explain<'py>(
    py: Python<'py>,
    f: &Bound<'py, PyAny>,
    x: Vec<u16>,
    background: Vec<Vec<u16>>,
    mode: &str,
    features: Option<Vec<usize>>,
    num_permutations: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let mode = match mode {
        "exact" => ShapMode::Exact,
        "permutation" => ShapMode::Permutation,
        other => return Err(PyValueError::new_err(format!("unknown SHAP mode {other:?}"))),
    };
    let cfg = ShapConfig { mode, feature_subset: features, num_permutations, seed };
    let p = Predictor::from_any(f)?;
    let target = p.as_dyn();
    let e = py.detach(|| xai::shap_explain(target, &x, &background, &cfg)).map_err(err)?;
    to_py(py, &e)
}

#[pyfunction]
fn most_frequent_vector(rows: Vec<Vec<u16>>) -> PyResult<Vec<u16>> {
    xai::most_frequent_vector(&rows).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (dataset, size=10, seed=0))]
fn background_sample(dataset: &PyDataset, size: usize, seed: u64) -> PyResult<Vec<Vec<u16>>> {
    xai::background_sample(&dataset.inner, size, seed).map_err(err)
}

#[pymodule]
fn pymalxai(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(roc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(pr_curve, m)?)?;
    m.add_function(wrap_pyfunction!(lime_explain, m)?)?;
    m.add_function(wrap_pyfunction!(shap_explain, m)?)?;
    m.add_function(wrap_pyfunction!(most_frequent_vector, m)?)?;
    m.add_function(wrap_pyfunction!(background_sample, m)?)?;
    Ok(())
}
