//! Python bindings for the alrelu library: the three activations, the metric
//! and gradient-check oracles, datasets, preset models and the full
//! cross-validation runner. Thin wrappers only — all behavior lives in the
//! core crate.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use alrelu::activations::{ActivationKind, DEFAULT_ALPHA};
use alrelu::config::{ExperimentConfig, PresetName};
use alrelu::eval::{self, CvOptions};
use alrelu::nn::{fit, Model as CoreModel, Optimizer, TrainConfig};
use alrelu::tensor::Tensor;
use alrelu::{data, metrics, report};

fn err(e: alrelu::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn kind(name: &str, alpha: Option<f32>) -> PyResult<ActivationKind> {
    match alpha {
        None => ActivationKind::from_name(name).map_err(err),
        Some(a) => match name {
            "relu" => Ok(ActivationKind::relu()),
            "lrelu" => ActivationKind::lrelu(a).map_err(err),
            "alrelu" => ActivationKind::alrelu(a).map_err(err),
            other => Err(PyValueError::new_err(format!(
                "unknown activation {other:?}; expected one of \"relu\", \"lrelu\", \"alrelu\""
            ))),
        },
    }
}

/// Apply an activation ("relu", "lrelu" or "alrelu") elementwise.
#[pyfunction]
#[pyo3(signature = (name, xs, alpha=None))]
fn activate(name: &str, xs: Vec<f32>, alpha: Option<f32>) -> PyResult<Vec<f32>> {
    let k = kind(name, alpha)?;
    Ok(xs.into_iter().map(|x| k.value(x)).collect())
}

/// Elementwise derivative of an activation. x = 0 takes the negative branch.
#[pyfunction]
#[pyo3(signature = (name, xs, alpha=None))]
fn activate_grad(name: &str, xs: Vec<f32>, alpha: Option<f32>) -> PyResult<Vec<f32>> {
    let k = kind(name, alpha)?;
    Ok(xs.into_iter().map(|x| k.grad(x)).collect())
}

/// Relative error between the analytic derivative and a central finite
/// difference at `x` (must sit at least 10 steps away from the kink at 0).
#[pyfunction]
#[pyo3(signature = (name, x, step=1e-4, alpha=None))]
fn grad_check(name: &str, x: f64, step: f64, alpha: Option<f32>) -> PyResult<f64> {
    alrelu::grad_check(kind(name, alpha)?, x, step).map_err(err)
}

/// Tie-aware ROC-AUC of binary labels against scores.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    metrics::roc_auc(&scores, &labels).map_err(err)
}

/// Run a full cross-validated activation comparison from an experiment
/// config given as a JSON string; returns the summary as a JSON string.
#[pyfunction]
fn run_cv(config_json: &str) -> PyResult<String> {
    let config: ExperimentConfig = serde_json::from_str(config_json)
        .map_err(|e| PyValueError::new_err(format!("config: {e}")))?;
    let kinds = config.validate().map_err(err)?;
    let dataset = config.dataset.load().map_err(err)?;
    let opts = CvOptions {
        k: config.k,
        repeats: config.repeats,
        base_seed: config.seed,
        epochs: config.train.epochs,
        batch_size: config.train.batch_size,
        learning_rate: config.train.learning_rate,
        optimizer: config.train.optimizer,
    };
    let preset = config.model;
    let n_classes = dataset.n_classes();
    let summary = eval::run_cv(&dataset, |k| preset.specs(k, n_classes), &kinds, &opts)
        .map_err(err)?;
    report::summary_json(&summary).map_err(err)
}

/// Feature/label container with the same constructors as the Rust API.
#[pyclass]
struct Dataset {
    inner: data::Dataset,
}

#[pymethods]
impl Dataset {
    /// Gaussian blobs, one cluster per class.
    #[staticmethod]
    fn blobs(
        n_per_class: usize,
        n_classes: usize,
        dim: usize,
        separation: f32,
        seed: u64,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: data::make_blobs(n_per_class, n_classes, dim, separation, seed).map_err(err)?,
        })
    }

    /// All-negative two-class inputs for the dying-unit protocol.
    #[staticmethod]
    fn dying_relu_stress(n: usize, dim: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: data::make_dying_relu_stress(n, dim, seed).map_err(err)?,
        })
    }

    /// Load a CSV table with a header row; features are min-max normalized.
    #[staticmethod]
    fn from_csv(path: &str, label_column: &str) -> PyResult<Self> {
        Ok(Self {
            inner: data::load_csv(path.as_ref(), label_column).map_err(err)?,
        })
    }

    /// Load a directory of per-class subdirectories of binary PGM images.
    #[staticmethod]
    fn from_pgm_dir(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: data::load_pgm_dir(path.as_ref()).map_err(err)?,
        })
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    /// Flat feature buffer, row-major.
    #[getter]
    fn features(&self) -> Vec<f32> {
        self.inner.features().data().to_vec()
    }

    /// Full feature shape including the sample axis.
    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.features().shape().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.n_samples()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n_samples={}, n_classes={}, shape={:?})",
            self.inner.n_samples(),
            self.inner.n_classes(),
            self.inner.features().shape()
        )
    }
}

/// A feed-forward classifier built from one of the two presets.
#[pyclass]
struct Model {
    inner: CoreModel,
}

#[pymethods]
impl Model {
    /// Build a fresh "shallow_dense" or "small_cnn" model.
    #[staticmethod]
    #[pyo3(signature = (preset, activation, input_shape, n_classes, seed, alpha=None))]
    fn preset(
        preset: &str,
        activation: &str,
        input_shape: Vec<usize>,
        n_classes: usize,
        seed: u64,
        alpha: Option<f32>,
    ) -> PyResult<Self> {
        let preset: PresetName = serde_json::from_value(serde_json::Value::String(
            preset.to_string(),
        ))
        .map_err(|e| PyValueError::new_err(format!("preset: {e}")))?;
        let specs = preset.specs(kind(activation, alpha)?, n_classes);
        Ok(Self {
            inner: CoreModel::build(specs, &input_shape, n_classes, seed).map_err(err)?,
        })
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    /// Train in place; returns (mean_loss, dead_units) per epoch.
    #[pyo3(signature = (dataset, epochs, batch_size, learning_rate, seed, optimizer="adam"))]
    fn fit(
        &mut self,
        dataset: &Dataset,
        epochs: usize,
        batch_size: usize,
        learning_rate: f32,
        seed: u64,
        optimizer: &str,
    ) -> PyResult<Vec<(f64, usize)>> {
        let optimizer = match optimizer {
            "adam" => Optimizer::adam(),
            "sgd" => Optimizer::Sgd,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown optimizer {other:?}; expected \"adam\" or \"sgd\""
                )))
            }
        };
        let config = TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            optimizer,
            seed,
        };
        let stats = fit(&mut self.inner, &dataset.inner, &config).map_err(err)?;
        Ok(stats.into_iter().map(|s| (s.mean_loss, s.dead_units)).collect())
    }

    /// Class probabilities for every sample, as one list per sample.
    fn predict_proba(&self, dataset: &Dataset) -> PyResult<Vec<Vec<f32>>> {
        let probs = self.inner.predict_proba(dataset.inner.features()).map_err(err)?;
        let k = self.inner.n_classes();
        Ok(probs.data().chunks(k).map(|row| row.to_vec()).collect())
    }

    /// Probabilities for a single flat feature vector.
    fn predict_one(&self, features: Vec<f32>) -> PyResult<Vec<f32>> {
        let mut shape = vec![1];
        shape.extend_from_slice(self.inner.input_shape());
        let x = Tensor::new(shape, features).map_err(err)?;
        Ok(self.inner.predict_proba(&x).map_err(err)?.data().to_vec())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreModel::load(path.as_ref()).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n_params={}, input_shape={:?}, n_classes={})",
            self.inner.n_params(),
            self.inner.input_shape(),
            self.inner.n_classes()
        )
    }
}

#[pymodule]
fn alrelu_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DEFAULT_ALPHA", DEFAULT_ALPHA)?;
    m.add_function(wrap_pyfunction!(activate, m)?)?;
    m.add_function(wrap_pyfunction!(activate_grad, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(run_cv, m)?)?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    Ok(())
}
