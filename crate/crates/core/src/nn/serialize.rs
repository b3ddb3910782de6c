//! Model files: versioned JSON with layer specs, base64-encoded little-endian
//! f32 parameter blobs, batch-norm running statistics, and the init seed.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{param_tensors, LayerParams, LayerSpec, LayerState, Model};
use crate::error::{Error, Result};
use crate::report::write_atomic;
use crate::tensor::Tensor;

const FORMAT: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    shape: Vec<usize>,
    data: String,
}

impl TensorRepr {
    fn from_tensor(t: &Tensor) -> Self {
        let mut bytes = Vec::with_capacity(t.len() * 4);
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        TensorRepr {
            shape: t.shape().to_vec(),
            data: BASE64.encode(bytes),
        }
    }

    fn to_tensor(&self) -> Result<Tensor> {
        let bytes = BASE64
            .decode(&self.data)
            .map_err(|e| Error::parse(format!("bad parameter blob: {e}")))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::parse(format!(
                "parameter blob length {} is not a multiple of 4",
                bytes.len()
            )));
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::new(self.shape.clone(), data)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ParamsRepr {
    None,
    Affine { w: TensorRepr, b: TensorRepr },
    Norm { gamma: TensorRepr, beta: TensorRepr },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum StateRepr {
    None,
    BatchNorm {
        running_mean: Vec<f32>,
        running_var: Vec<f32>,
    },
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: u32,
    input_shape: Vec<usize>,
    n_classes: usize,
    rng_seed: u64,
    layers: Vec<LayerSpec>,
    params: Vec<ParamsRepr>,
    state: Vec<StateRepr>,
}

impl Model {
    pub fn to_json(&self) -> Result<String> {
        let params = self
            .params
            .iter()
            .map(|p| match p {
                LayerParams::None => ParamsRepr::None,
                LayerParams::Affine { w, b } => ParamsRepr::Affine {
                    w: TensorRepr::from_tensor(w),
                    b: TensorRepr::from_tensor(b),
                },
                LayerParams::Norm { gamma, beta } => ParamsRepr::Norm {
                    gamma: TensorRepr::from_tensor(gamma),
                    beta: TensorRepr::from_tensor(beta),
                },
            })
            .collect();
        let state = self
            .state
            .iter()
            .map(|s| match s {
                LayerState::None => StateRepr::None,
                LayerState::BatchNorm {
                    running_mean,
                    running_var,
                } => StateRepr::BatchNorm {
                    running_mean: running_mean.clone(),
                    running_var: running_var.clone(),
                },
            })
            .collect();
        let file = ModelFile {
            format: FORMAT,
            input_shape: self.input_shape.clone(),
            n_classes: self.n_classes,
            rng_seed: self.rng_seed,
            layers: self.specs.clone(),
            params,
            state,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Rebuilds a model from `to_json` output. The architecture is
    /// re-validated and every stored tensor must match the shape the specs
    /// imply; unknown formats are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != FORMAT {
            return Err(Error::validation(format!(
                "unsupported model format {} (this build reads format {FORMAT})",
                file.format
            )));
        }
        let mut model = Model::build(
            file.layers,
            &file.input_shape,
            file.n_classes,
            file.rng_seed,
        )?;
        if file.params.len() != model.params.len() || file.state.len() != model.state.len() {
            return Err(Error::validation(format!(
                "model file stores {} param and {} state entries for {} layers",
                file.params.len(),
                file.state.len(),
                model.params.len()
            )));
        }
        for (idx, (slot, repr)) in model.params.iter_mut().zip(&file.params).enumerate() {
            let loaded = match repr {
                ParamsRepr::None => LayerParams::None,
                ParamsRepr::Affine { w, b } => LayerParams::Affine {
                    w: w.to_tensor()?,
                    b: b.to_tensor()?,
                },
                ParamsRepr::Norm { gamma, beta } => LayerParams::Norm {
                    gamma: gamma.to_tensor()?,
                    beta: beta.to_tensor()?,
                },
            };
            let expected: Vec<Vec<usize>> = param_tensors(slot)
                .iter()
                .map(|t| t.shape().to_vec())
                .collect();
            let got: Vec<Vec<usize>> = param_tensors(&loaded)
                .iter()
                .map(|t| t.shape().to_vec())
                .collect();
            if expected != got {
                return Err(Error::shape(format!(
                    "layer {idx}: stored parameter shapes {got:?} do not match architecture {expected:?}"
                )));
            }
            *slot = loaded;
        }
        for (idx, (slot, repr)) in model.state.iter_mut().zip(&file.state).enumerate() {
            match (&slot, repr) {
                (LayerState::None, StateRepr::None) => {}
                (
                    LayerState::BatchNorm { running_mean, .. },
                    StateRepr::BatchNorm {
                        running_mean: rm,
                        running_var: rv,
                    },
                ) => {
                    if rm.len() != running_mean.len() || rv.len() != running_mean.len() {
                        return Err(Error::shape(format!(
                            "layer {idx}: running statistics length mismatch"
                        )));
                    }
                    *slot = LayerState::BatchNorm {
                        running_mean: rm.clone(),
                        running_var: rv.clone(),
                    };
                }
                _ => {
                    return Err(Error::validation(format!(
                        "layer {idx}: stored state does not match the layer kind"
                    )));
                }
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::ActivationKind;
    use crate::nn::presets::shallow_dense;
    use crate::nn::{fit, Optimizer, TrainConfig};
    use crate::tensor::Tensor;

    fn trained_model() -> Model {
        let ds = crate::data::make_blobs(12, 2, 4, 6.0, 3).unwrap();
        let kind = ActivationKind::alrelu(0.01).unwrap();
        let mut model = Model::build(shallow_dense(kind, 2), &[4], 2, 42).unwrap();
        let config = TrainConfig {
            epochs: 2,
            batch_size: 8,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
            seed: 9,
        };
        fit(&mut model, &ds, &config).unwrap();
        model
    }

    #[test]
    fn round_trip_preserves_weights_and_predictions() {
        let model = trained_model();
        let json = model.to_json().unwrap();
        assert!(json.contains("\"format\": 1"), "format tag missing");
        let back = Model::from_json(&json).unwrap();
        assert_eq!(model.flat_params(), back.flat_params());
        assert_eq!(model.rng_seed(), back.rng_seed());

        let batch = Tensor::new(vec![3, 4], (0..12).map(|i| i as f32 * 0.4).collect()).unwrap();
        let a = model.predict_proba(&batch).unwrap();
        let b = back.predict_proba(&batch).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn save_load_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = trained_model();
        model.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(model.flat_params(), back.flat_params());
    }

    #[test]
    fn rejects_unknown_format() {
        let model = trained_model();
        let json = model.to_json().unwrap().replace("\"format\": 1", "\"format\": 2");
        let err = Model::from_json(&json).unwrap_err().to_string();
        assert!(err.contains("format 2"), "{err}");
    }

    #[test]
    fn rejects_corrupted_blob() {
        let model = trained_model();
        let json = model.to_json().unwrap();
        // Damage the first base64 payload.
        let corrupted = json.replacen("\"data\": \"", "\"data\": \"!!!!", 1);
        assert!(Model::from_json(&corrupted).is_err());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let model = trained_model();
        let json = model
            .to_json()
            .unwrap()
            .replace("\"units\": 100", "\"units\": 64");
        let err = Model::from_json(&json).unwrap_err().to_string();
        assert!(err.contains("do not match"), "{err}");
    }
}
