//! JSON experiment configuration shared by the `run` and `stress` commands.
//! Parsing is strict (unknown fields rejected) and `validate` returns errors
//! that name the offending field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::nn::{presets, LayerSpec, Optimizer};

pub const DEFAULT_HOSTILE_BIAS: f32 = -10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: PresetName,
    pub activations: Vec<String>,
    pub k: usize,
    pub repeats: usize,
    pub train: TrainSettings,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Bias value for `stress`; ignored by `run`.
    #[serde(default)]
    pub hostile_bias: Option<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    ShallowDense,
    SmallCnn,
}

impl PresetName {
    pub fn specs(&self, kind: ActivationKind, n_classes: usize) -> Vec<LayerSpec> {
        match self {
            PresetName::ShallowDense => presets::shallow_dense(kind, n_classes),
            PresetName::SmallCnn => presets::small_cnn(kind, n_classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// CSV table with a header; every non-label column must be numeric.
    Csv { path: PathBuf, label_column: String },
    /// Directory of class subdirectories holding binary PGM images.
    PgmDir { path: PathBuf },
    /// Synthetic Gaussian blobs.
    Blobs {
        n_per_class: usize,
        n_classes: usize,
        dim: usize,
        separation: f32,
        seed: u64,
    },
    /// Synthetic all-negative two-class data for the dying-unit protocol.
    Stress { n: usize, dim: usize, seed: u64 },
}

impl DatasetConfig {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetConfig::Csv { path, label_column } => data::load_csv(path, label_column),
            DatasetConfig::PgmDir { path } => data::load_pgm_dir(path),
            DatasetConfig::Blobs {
                n_per_class,
                n_classes,
                dim,
                separation,
                seed,
            } => data::make_blobs(*n_per_class, *n_classes, *dim, *separation, *seed),
            DatasetConfig::Stress { n, dim, seed } => {
                data::make_dying_relu_stress(*n, *dim, *seed)
            }
        }
    }

    /// Short label for the dataset column of result tables.
    pub fn label(&self) -> String {
        match self {
            DatasetConfig::Csv { path, .. } => format!("csv:{}", stem(path)),
            DatasetConfig::PgmDir { path } => format!("pgm:{}", stem(path)),
            DatasetConfig::Blobs { .. } => "blobs".to_string(),
            DatasetConfig::Stress { .. } => "stress".to_string(),
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("config {}: {e}", path.display())))
    }

    /// Field-level validation; on success returns the parsed activations in
    /// config order.
    pub fn validate(&self) -> Result<Vec<ActivationKind>> {
        if self.activations.is_empty() {
            return Err(Error::validation("activations: must list at least one"));
        }
        let mut kinds = Vec::with_capacity(self.activations.len());
        for (i, name) in self.activations.iter().enumerate() {
            let kind = ActivationKind::from_name(name)
                .map_err(|e| Error::validation(format!("activations[{i}]: {e}")))?;
            if kinds.contains(&kind) {
                return Err(Error::validation(format!(
                    "activations[{i}]: {name:?} listed twice"
                )));
            }
            kinds.push(kind);
        }
        if self.k < 2 {
            return Err(Error::validation(format!(
                "k: must be at least 2, got {}",
                self.k
            )));
        }
        if self.repeats == 0 {
            return Err(Error::validation("repeats: must be at least 1"));
        }
        if self.train.epochs == 0 {
            return Err(Error::validation("train.epochs: must be at least 1"));
        }
        if self.train.batch_size == 0 {
            return Err(Error::validation("train.batch_size: must be at least 1"));
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return Err(Error::validation(format!(
                "train.learning_rate: must be positive and finite, got {}",
                self.train.learning_rate
            )));
        }
        match &self.dataset {
            DatasetConfig::Blobs {
                n_per_class,
                n_classes,
                dim,
                separation,
                ..
            } => {
                if *n_per_class == 0 || *n_classes == 0 || *dim == 0 {
                    return Err(Error::validation(
                        "dataset: blobs needs positive n_per_class, n_classes and dim",
                    ));
                }
                if !separation.is_finite() {
                    return Err(Error::validation("dataset.separation: must be finite"));
                }
            }
            DatasetConfig::Stress { n, dim, .. } => {
                if *n < 2 || *dim == 0 {
                    return Err(Error::validation(
                        "dataset: stress needs n >= 2 and dim >= 1",
                    ));
                }
            }
            DatasetConfig::Csv { label_column, .. } => {
                if label_column.is_empty() {
                    return Err(Error::validation("dataset.label_column: must not be empty"));
                }
            }
            DatasetConfig::PgmDir { .. } => {}
        }
        if let Some(bias) = self.hostile_bias {
            if !bias.is_finite() {
                return Err(Error::validation("hostile_bias: must be finite"));
            }
        }
        Ok(kinds)
    }
}
