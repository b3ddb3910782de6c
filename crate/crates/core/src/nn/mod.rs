//! Sequential classification models: layer specs, He initialization, a
//! training-mode forward pass with per-layer caches, exact backprop, SGD and
//! Adam, plus a mini-batch training loop that tracks dead hidden units.
//!
//! Layouts are channels-last everywhere: dense activations are `[n, d]`,
//! images `[n, h, w, c]`. Conv2D is 'valid' padding with stride 1; MaxPool2D
//! strides by its window. Models always end in a Softmax layer whose width
//! matches the class count, and train against mean cross-entropy.

mod layers;
mod optim;
pub mod presets;
mod serialize;

pub use optim::Optimizer;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seeds;
use crate::tensor::Tensor;

use layers::LayerCache;
pub(crate) use layers::cross_entropy_from_probs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        units: usize,
    },
    #[serde(rename = "conv2d")]
    Conv2D {
        filters: usize,
        kernel_size: usize,
    },
    #[serde(rename = "max_pool2d")]
    MaxPool2D {
        window: usize,
    },
    GlobalAvgPool,
    BatchNorm,
    Dropout {
        rate: f32,
    },
    Activation {
        kind: ActivationKind,
    },
    Softmax,
}

fn spec_name(spec: &LayerSpec) -> &'static str {
    match spec {
        LayerSpec::Dense { .. } => "dense",
        LayerSpec::Conv2D { .. } => "conv2d",
        LayerSpec::MaxPool2D { .. } => "max_pool2d",
        LayerSpec::GlobalAvgPool => "global_avg_pool",
        LayerSpec::BatchNorm => "batch_norm",
        LayerSpec::Dropout { .. } => "dropout",
        LayerSpec::Activation { .. } => "activation",
        LayerSpec::Softmax => "softmax",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LayerParams {
    None,
    Affine { w: Tensor, b: Tensor },
    Norm { gamma: Tensor, beta: Tensor },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LayerState {
    None,
    BatchNorm {
        running_mean: Vec<f32>,
        running_var: Vec<f32>,
    },
}

pub(crate) fn param_tensors(p: &LayerParams) -> Vec<&Tensor> {
    match p {
        LayerParams::None => Vec::new(),
        LayerParams::Affine { w, b } => vec![w, b],
        LayerParams::Norm { gamma, beta } => vec![gamma, beta],
    }
}

pub(crate) fn param_tensors_mut(p: &mut LayerParams) -> Vec<&mut Tensor> {
    match p {
        LayerParams::None => Vec::new(),
        LayerParams::Affine { w, b } => vec![w, b],
        LayerParams::Norm { gamma, beta } => vec![gamma, beta],
    }
}

fn zeroed_like(params: &[LayerParams]) -> Vec<LayerParams> {
    params
        .iter()
        .map(|p| match p {
            LayerParams::None => LayerParams::None,
            LayerParams::Affine { w, b } => LayerParams::Affine {
                w: Tensor::zeros(w.shape().to_vec()).expect("valid shape"),
                b: Tensor::zeros(b.shape().to_vec()).expect("valid shape"),
            },
            LayerParams::Norm { gamma, beta } => LayerParams::Norm {
                gamma: Tensor::zeros(gamma.shape().to_vec()).expect("valid shape"),
                beta: Tensor::zeros(beta.shape().to_vec()).expect("valid shape"),
            },
        })
        .collect()
}

/// Walks per-sample shapes through the stack, validating every layer and
/// insisting the model end in a Softmax of width `n_classes`. Errors name
/// the offending layer by index and kind.
fn plan_shapes(
    specs: &[LayerSpec],
    input_shape: &[usize],
    n_classes: usize,
) -> Result<Vec<Vec<usize>>> {
    if specs.is_empty() {
        return Err(Error::validation("model has no layers"));
    }
    if input_shape.is_empty() || input_shape.contains(&0) {
        return Err(Error::shape(format!("invalid input shape {input_shape:?}")));
    }
    if n_classes < 2 {
        return Err(Error::validation(format!(
            "a classifier needs at least 2 classes, got {n_classes}"
        )));
    }
    let mut cur = input_shape.to_vec();
    let mut shapes = Vec::with_capacity(specs.len());
    for (idx, spec) in specs.iter().enumerate() {
        let fail =
            |msg: String| Error::validation(format!("layer {idx} ({}): {msg}", spec_name(spec)));
        match *spec {
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err(fail("units must be positive".into()));
                }
                if cur.len() != 1 {
                    return Err(fail(format!("expects flat features, got shape {cur:?}")));
                }
                cur = vec![units];
            }
            LayerSpec::Conv2D {
                filters,
                kernel_size,
            } => {
                if filters == 0 {
                    return Err(fail("filters must be positive".into()));
                }
                if !matches!(kernel_size, 1 | 3 | 5) {
                    return Err(fail(format!(
                        "kernel_size must be 1, 3 or 5, got {kernel_size}"
                    )));
                }
                let (h, w) = match cur[..] {
                    [h, w, _] => (h, w),
                    _ => return Err(fail(format!("expects [h, w, c] input, got shape {cur:?}"))),
                };
                if h < kernel_size || w < kernel_size {
                    return Err(fail(format!(
                        "kernel {kernel_size} does not fit {h}x{w} input"
                    )));
                }
                cur = vec![h - kernel_size + 1, w - kernel_size + 1, filters];
            }
            LayerSpec::MaxPool2D { window } => {
                let (h, w, c) = match cur[..] {
                    [h, w, c] => (h, w, c),
                    _ => return Err(fail(format!("expects [h, w, c] input, got shape {cur:?}"))),
                };
                if window == 0 || window > h || window > w {
                    return Err(fail(format!("window {window} does not fit {h}x{w} input")));
                }
                cur = vec![(h - window) / window + 1, (w - window) / window + 1, c];
            }
            LayerSpec::GlobalAvgPool => {
                let c = match cur[..] {
                    [_, _, c] => c,
                    _ => return Err(fail(format!("expects [h, w, c] input, got shape {cur:?}"))),
                };
                cur = vec![c];
            }
            LayerSpec::BatchNorm => {
                if cur.len() != 1 && cur.len() != 3 {
                    return Err(fail(format!(
                        "expects flat or [h, w, c] input, got shape {cur:?}"
                    )));
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(fail(format!("rate must be in [0, 1), got {rate}")));
                }
            }
            LayerSpec::Activation { .. } => {}
            LayerSpec::Softmax => {
                if idx != specs.len() - 1 {
                    return Err(fail("must be the final layer".into()));
                }
                if cur.len() != 1 || cur[0] != n_classes {
                    return Err(fail(format!(
                        "expects [{n_classes}] logits (one per class), got shape {cur:?}"
                    )));
                }
            }
        }
        shapes.push(cur.clone());
    }
    if !matches!(specs.last(), Some(LayerSpec::Softmax)) {
        return Err(Error::validation("model must end with a softmax layer"));
    }
    Ok(shapes)
}

fn init_params(
    specs: &[LayerSpec],
    input_shape: &[usize],
    shapes: &[Vec<usize>],
    seed: u64,
) -> (Vec<LayerParams>, Vec<LayerState>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(specs.len());
    let mut state = Vec::with_capacity(specs.len());
    for (idx, spec) in specs.iter().enumerate() {
        let in_shape: &[usize] = if idx == 0 { input_shape } else { &shapes[idx - 1] };
        match *spec {
            LayerSpec::Dense { units } => {
                // He init: weights ~ N(0, sqrt(2 / fan_in)), biases zero.
                let fan_in = in_shape[0];
                let std = (2.0 / fan_in as f64).sqrt() as f32;
                let data = (0..fan_in * units)
                    .map(|_| std * seeds::standard_normal(&mut rng))
                    .collect();
                params.push(LayerParams::Affine {
                    w: Tensor::new(vec![fan_in, units], data).expect("valid shape"),
                    b: Tensor::zeros(vec![units]).expect("valid shape"),
                });
                state.push(LayerState::None);
            }
            LayerSpec::Conv2D {
                filters,
                kernel_size,
            } => {
                let cin = in_shape[2];
                let fan_in = kernel_size * kernel_size * cin;
                let std = (2.0 / fan_in as f64).sqrt() as f32;
                let data = (0..fan_in * filters)
                    .map(|_| std * seeds::standard_normal(&mut rng))
                    .collect();
                params.push(LayerParams::Affine {
                    w: Tensor::new(vec![kernel_size, kernel_size, cin, filters], data)
                        .expect("valid shape"),
                    b: Tensor::zeros(vec![filters]).expect("valid shape"),
                });
                state.push(LayerState::None);
            }
            LayerSpec::BatchNorm => {
                let f = *in_shape.last().expect("non-empty shape");
                params.push(LayerParams::Norm {
                    gamma: Tensor::filled(vec![f], 1.0).expect("valid shape"),
                    beta: Tensor::zeros(vec![f]).expect("valid shape"),
                });
                state.push(LayerState::BatchNorm {
                    running_mean: vec![0.0; f],
                    running_var: vec![1.0; f],
                });
            }
            _ => {
                params.push(LayerParams::None);
                state.push(LayerState::None);
            }
        }
    }
    (params, state)
}

/// Opaque per-layer record of one training forward pass.
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    batch: usize,
}

impl ForwardCache {
    /// Which side of its kink every activation input landed on, plus every
    /// max-pool argmax choice. Finite differencing is only trustworthy while
    /// this pattern is stable.
    pub(crate) fn branch_pattern(&self) -> (Vec<bool>, Vec<usize>) {
        let mut signs = Vec::new();
        let mut picks = Vec::new();
        for cache in &self.layers {
            match cache {
                LayerCache::Activation { pre } => {
                    signs.extend(pre.data().iter().map(|&v| v > 0.0));
                }
                LayerCache::MaxPool { argmax, .. } => picks.extend_from_slice(argmax),
                _ => {}
            }
        }
        (signs, picks)
    }

    /// Smallest |pre-activation| observed at any activation layer.
    pub(crate) fn min_abs_preactivation(&self) -> f32 {
        let mut min = f32::INFINITY;
        for cache in &self.layers {
            if let LayerCache::Activation { pre } = cache {
                for &v in pre.data() {
                    min = min.min(v.abs());
                }
            }
        }
        min
    }
}

pub struct BackwardOutput {
    /// Mean clamped cross-entropy over the batch.
    pub loss: f64,
    /// For each Activation layer (by layer index): per-unit flags, true when
    /// the gradient reaching that unit's pre-activation was exactly 0.0 for
    /// every sample in the batch.
    pub activation_zero_units: Vec<(usize, Vec<bool>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    specs: Vec<LayerSpec>,
    params: Vec<LayerParams>,
    grads: Vec<LayerParams>,
    state: Vec<LayerState>,
    out_shapes: Vec<Vec<usize>>,
    input_shape: Vec<usize>,
    n_classes: usize,
    rng_seed: u64,
}

impl Model {
    /// Validates the architecture against the input shape and initializes
    /// parameters deterministically from `seed`.
    pub fn build(
        specs: Vec<LayerSpec>,
        input_shape: &[usize],
        n_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        let out_shapes = plan_shapes(&specs, input_shape, n_classes)?;
        let (params, state) = init_params(&specs, input_shape, &out_shapes, seed);
        let grads = zeroed_like(&params);
        Ok(Model {
            specs,
            params,
            grads,
            state,
            out_shapes,
            input_shape: input_shape.to_vec(),
            n_classes,
            rng_seed: seed,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn n_params(&self) -> usize {
        self.params
            .iter()
            .flat_map(param_tensors)
            .map(Tensor::len)
            .sum()
    }

    pub fn flat_params(&self) -> Vec<f32> {
        self.params
            .iter()
            .flat_map(param_tensors)
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub(crate) fn flat_grads(&self) -> Vec<f32> {
        self.grads
            .iter()
            .flat_map(param_tensors)
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Adds `delta` to one parameter, addressed in `flat_params` order.
    pub(crate) fn nudge_param(&mut self, index: usize, delta: f32) {
        let mut offset = index;
        for p in &mut self.params {
            for t in param_tensors_mut(p) {
                if offset < t.len() {
                    t.data_mut()[offset] += delta;
                    return;
                }
                offset -= t.len();
            }
        }
        panic!("parameter index {index} out of range");
    }

    /// `(layer index, unit count)` for every Activation layer. Units are the
    /// per-sample positions the dead-unit tracker watches.
    pub fn activation_units(&self) -> Vec<(usize, usize)> {
        self.specs
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, LayerSpec::Activation { .. }))
            .map(|(i, _)| (i, self.out_shapes[i].iter().product()))
            .collect()
    }

    /// Sets every additive parameter — dense and conv biases plus batch-norm
    /// shifts — to `bias`. Strongly negative values push every rectifier
    /// input negative from the first batch.
    pub fn apply_hostile_init(&mut self, bias: f32) {
        for p in &mut self.params {
            match p {
                LayerParams::Affine { b, .. } => b.data_mut().fill(bias),
                LayerParams::Norm { beta, .. } => beta.data_mut().fill(bias),
                LayerParams::None => {}
            }
        }
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.rank() != self.input_shape.len() + 1
            || batch.shape()[1..] != self.input_shape[..]
        {
            return Err(Error::shape(format!(
                "batch shape {:?} does not match model input {:?} (plus batch axis)",
                batch.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Training-mode forward: dropout active (drawing from `rng`), batch norm
    /// uses batch statistics and updates its running averages. Returns class
    /// probabilities `[n, n_classes]` plus the cache `backward` needs.
    pub fn forward_train(
        &mut self,
        batch: &Tensor,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, ForwardCache)> {
        self.check_batch(batch)?;
        run_forward(
            &self.specs,
            &self.params,
            &mut self.state,
            batch,
            true,
            Some(rng),
        )
    }

    /// Inference-mode probabilities: dropout is the identity and batch norm
    /// uses its running statistics. Pure; does not touch model state.
    pub fn predict_proba(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut scratch = self.state.clone();
        let (probs, _) = run_forward(&self.specs, &self.params, &mut scratch, batch, false, None)?;
        Ok(probs)
    }

    /// Backpropagates mean cross-entropy against one-hot `targets`, storing
    /// per-layer parameter gradients in the model.
    pub fn backward(&mut self, cache: &ForwardCache, targets: &Tensor) -> Result<BackwardOutput> {
        let n_layers = self.specs.len();
        if cache.layers.len() != n_layers {
            return Err(Error::validation(
                "forward cache does not match the model's layers",
            ));
        }
        if targets.shape() != [cache.batch, self.n_classes] {
            return Err(Error::shape(format!(
                "targets shape {:?}, expected [{}, {}]",
                targets.shape(),
                cache.batch,
                self.n_classes
            )));
        }
        let Some(LayerCache::Softmax { probs }) = cache.layers.last() else {
            return Err(Error::validation("forward cache does not end at softmax"));
        };
        let (loss, mut dy) = layers::softmax_ce_backward(probs, targets)?;
        let mut zero_units: Vec<(usize, Vec<bool>)> = Vec::new();
        for idx in (0..n_layers - 1).rev() {
            let spec = self.specs[idx];
            dy = match (spec, &cache.layers[idx]) {
                (LayerSpec::Dense { .. }, LayerCache::Dense { input }) => {
                    let LayerParams::Affine { w, .. } = &self.params[idx] else {
                        return Err(Error::validation("dense layer missing parameters"));
                    };
                    let (dw, db, dx) = layers::dense_backward(input, w, &dy)?;
                    self.grads[idx] = LayerParams::Affine { w: dw, b: db };
                    dx
                }
                (LayerSpec::Conv2D { .. }, LayerCache::Conv { input }) => {
                    let LayerParams::Affine { w, .. } = &self.params[idx] else {
                        return Err(Error::validation("conv layer missing parameters"));
                    };
                    let (dw, db, dx) = layers::conv_backward(input, w, &dy)?;
                    self.grads[idx] = LayerParams::Affine { w: dw, b: db };
                    dx
                }
                (LayerSpec::MaxPool2D { .. }, LayerCache::MaxPool { in_shape, argmax }) => {
                    layers::maxpool_backward(in_shape, argmax, &dy)?
                }
                (LayerSpec::GlobalAvgPool, LayerCache::GlobalAvg { in_shape }) => {
                    layers::gap_backward(in_shape, &dy)?
                }
                (LayerSpec::BatchNorm, LayerCache::BatchNorm { xhat, inv_std }) => {
                    let LayerParams::Norm { gamma, .. } = &self.params[idx] else {
                        return Err(Error::validation("batch-norm layer missing parameters"));
                    };
                    let (dgamma, dbeta, dx) =
                        layers::batchnorm_backward(&dy, gamma, xhat, inv_std)?;
                    self.grads[idx] = LayerParams::Norm {
                        gamma: dgamma,
                        beta: dbeta,
                    };
                    dx
                }
                (LayerSpec::Dropout { .. }, LayerCache::Dropout { mask }) => match mask {
                    Some(m) => dy.hadamard(m)?,
                    None => dy,
                },
                (LayerSpec::Activation { kind }, LayerCache::Activation { pre }) => {
                    let dpre = dy.zip_with(pre, |g, x| g * kind.grad(x))?;
                    let units = dpre.len() / cache.batch;
                    let mut all_zero = vec![true; units];
                    for (i, &g) in dpre.data().iter().enumerate() {
                        if g != 0.0 {
                            all_zero[i % units] = false;
                        }
                    }
                    zero_units.push((idx, all_zero));
                    dpre
                }
                _ => {
                    return Err(Error::validation(
                        "forward cache does not match the model's layers",
                    ))
                }
            };
        }
        zero_units.reverse();
        Ok(BackwardOutput {
            loss,
            activation_zero_units: zero_units,
        })
    }
}

fn run_forward(
    specs: &[LayerSpec],
    params: &[LayerParams],
    state: &mut [LayerState],
    batch: &Tensor,
    training: bool,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Tensor, ForwardCache)> {
    let mut x = batch.clone();
    let mut caches = Vec::with_capacity(specs.len());
    for (idx, spec) in specs.iter().enumerate() {
        let (y, cache) = match *spec {
            LayerSpec::Dense { .. } => {
                let LayerParams::Affine { w, b } = &params[idx] else {
                    return Err(Error::validation("dense layer missing parameters"));
                };
                layers::dense_forward(&x, w, b)?
            }
            LayerSpec::Conv2D { .. } => {
                let LayerParams::Affine { w, b } = &params[idx] else {
                    return Err(Error::validation("conv layer missing parameters"));
                };
                layers::conv_forward(&x, w, b)?
            }
            LayerSpec::MaxPool2D { window } => layers::maxpool_forward(&x, window)?,
            LayerSpec::GlobalAvgPool => layers::gap_forward(&x)?,
            LayerSpec::BatchNorm => {
                let LayerParams::Norm { gamma, beta } = &params[idx] else {
                    return Err(Error::validation("batch-norm layer missing parameters"));
                };
                let LayerState::BatchNorm {
                    running_mean,
                    running_var,
                } = &mut state[idx]
                else {
                    return Err(Error::validation("batch-norm layer missing state"));
                };
                if training {
                    layers::batchnorm_forward_train(&x, gamma, beta, running_mean, running_var)?
                } else {
                    (
                        layers::batchnorm_forward_infer(
                            &x,
                            gamma,
                            beta,
                            running_mean,
                            running_var,
                        )?,
                        LayerCache::Noop,
                    )
                }
            }
            LayerSpec::Dropout { rate } => {
                if training {
                    let rng = rng
                        .as_deref_mut()
                        .ok_or_else(|| Error::validation("training forward requires an rng"))?;
                    layers::dropout_forward_train(&x, rate, rng)?
                } else {
                    (x.clone(), LayerCache::Noop)
                }
            }
            LayerSpec::Activation { kind } => {
                let pre = x.clone();
                (x.map(|v| kind.value(v)), LayerCache::Activation { pre })
            }
            LayerSpec::Softmax => layers::softmax_forward(&x)?,
        };
        caches.push(cache);
        x = y;
    }
    Ok((
        x,
        ForwardCache {
            layers: caches,
            batch: batch.shape()[0],
        },
    ))
}

/// One-hot encodes labels as an `[n, n_classes]` f32 tensor.
pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Tensor> {
    if labels.is_empty() {
        return Err(Error::validation("cannot one-hot encode zero labels"));
    }
    if n_classes == 0 {
        return Err(Error::validation("one-hot encoding needs n_classes >= 1"));
    }
    let mut data = vec![0.0f32; labels.len() * n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::validation(format!(
                "label {l} out of range for {n_classes} classes"
            )));
        }
        data[i * n_classes + l] = 1.0;
    }
    Tensor::new(vec![labels.len(), n_classes], data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    #[serde(default)]
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Owns the optimizer state and the training RNG (shuffles and dropout).
pub struct Trainer {
    opt: optim::OptState,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: &Model, config: &TrainConfig) -> Self {
        Trainer {
            opt: optim::OptState::new(config.optimizer, &model.params),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        }
    }

    /// Applies the gradients currently stored in the model.
    pub fn apply_step(&mut self, model: &mut Model, learning_rate: f32) {
        self.opt.step(&mut model.params, &model.grads, learning_rate);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    /// Activation-layer units whose pre-activation gradient was exactly 0.0
    /// on every sample of every batch this epoch.
    pub dead_units: usize,
}

/// One pass over the dataset in shuffled mini-batches: forward, backward,
/// optimizer step. Dead units are counted per epoch: a unit must receive an
/// exactly zero gradient in every batch to qualify.
pub fn train_epoch(
    model: &mut Model,
    dataset: &Dataset,
    config: &TrainConfig,
    trainer: &mut Trainer,
) -> Result<EpochStats> {
    config.validate()?;
    if dataset.sample_shape() != model.input_shape() {
        return Err(Error::shape(format!(
            "dataset samples are {:?} but the model expects {:?}",
            dataset.sample_shape(),
            model.input_shape()
        )));
    }
    if dataset.n_classes() != model.n_classes() {
        return Err(Error::validation(format!(
            "dataset has {} classes but the model predicts {}",
            dataset.n_classes(),
            model.n_classes()
        )));
    }
    let n = dataset.n_samples();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut trainer.rng);
    let mut loss_weighted = 0.0f64;
    let mut dead: Option<Vec<(usize, Vec<bool>)>> = None;
    for chunk in order.chunks(config.batch_size) {
        let (bx, by) = dataset.gather(chunk)?;
        let targets = one_hot(&by, model.n_classes())?;
        let (_, cache) = model.forward_train(&bx, &mut trainer.rng)?;
        let out = model.backward(&cache, &targets)?;
        trainer.apply_step(model, config.learning_rate);
        loss_weighted += out.loss * chunk.len() as f64;
        match &mut dead {
            None => dead = Some(out.activation_zero_units),
            Some(acc) => {
                for ((_, acc_flags), (_, new_flags)) in
                    acc.iter_mut().zip(&out.activation_zero_units)
                {
                    for (a, &b) in acc_flags.iter_mut().zip(new_flags) {
                        *a &= b;
                    }
                }
            }
        }
    }
    let dead_units = dead
        .map(|layers| {
            layers
                .iter()
                .map(|(_, flags)| flags.iter().filter(|&&f| f).count())
                .sum()
        })
        .unwrap_or(0);
    Ok(EpochStats {
        mean_loss: loss_weighted / n as f64,
        dead_units,
    })
}

/// Trains for `config.epochs` epochs with a fresh `Trainer`, returning the
/// per-epoch stats in order.
pub fn fit(model: &mut Model, dataset: &Dataset, config: &TrainConfig) -> Result<Vec<EpochStats>> {
    config.validate()?;
    let mut trainer = Trainer::new(model, config);
    let mut stats = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        stats.push(train_epoch(model, dataset, config, &mut trainer)?);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, make_dying_relu_stress};

    fn relu() -> ActivationKind {
        ActivationKind::relu()
    }

    fn alrelu() -> ActivationKind {
        ActivationKind::alrelu(0.01).unwrap()
    }

    fn tiny_dense(kind: ActivationKind) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Dense { units: 4 },
            LayerSpec::Activation { kind },
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ]
    }

    #[test]
    fn build_validates_architecture() {
        let bad = Model::build(tiny_dense(relu()), &[4, 4, 1], 2, 0);
        let msg = bad.unwrap_err().to_string();
        assert!(msg.contains("layer 0") && msg.contains("dense"), "{msg}");

        let bad = Model::build(
            vec![
                LayerSpec::Conv2D {
                    filters: 2,
                    kernel_size: 2,
                },
                LayerSpec::Softmax,
            ],
            &[4, 4, 1],
            2,
            0,
        );
        assert!(bad.unwrap_err().to_string().contains("kernel_size"));

        let bad = Model::build(
            vec![
                LayerSpec::Dense { units: 2 },
                LayerSpec::Dropout { rate: 1.0 },
                LayerSpec::Softmax,
            ],
            &[3],
            2,
            0,
        );
        assert!(bad.unwrap_err().to_string().contains("rate"));

        let bad = Model::build(
            vec![LayerSpec::Softmax, LayerSpec::Dense { units: 2 }],
            &[2],
            2,
            0,
        );
        assert!(bad.unwrap_err().to_string().contains("final"));

        let bad = Model::build(vec![LayerSpec::Dense { units: 3 }], &[2], 3, 0);
        assert!(bad.unwrap_err().to_string().contains("softmax"));

        let bad = Model::build(tiny_dense(relu()), &[3], 4, 0);
        assert!(bad.unwrap_err().to_string().contains("logits"));
    }

    #[test]
    fn init_is_seeded_and_biases_are_zero() {
        let a = Model::build(tiny_dense(relu()), &[3], 2, 7).unwrap();
        let b = Model::build(tiny_dense(relu()), &[3], 2, 7).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        let c = Model::build(tiny_dense(relu()), &[3], 2, 8).unwrap();
        assert_ne!(a.flat_params(), c.flat_params());

        let LayerParams::Affine { b: bias, .. } = &a.params[0] else {
            panic!("dense params expected");
        };
        assert!(bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn he_init_std_tracks_fan_in() {
        let model = Model::build(
            vec![LayerSpec::Dense { units: 300 }, LayerSpec::Dense { units: 2 }, LayerSpec::Softmax],
            &[200],
            2,
            3,
        )
        .unwrap();
        let LayerParams::Affine { w, .. } = &model.params[0] else {
            panic!()
        };
        let n = w.len() as f64;
        let mean = w.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = w.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let expected = 2.0 / 200.0;
        assert!((var - expected).abs() / expected < 0.1, "var {var}");
    }

    #[test]
    fn forward_shapes_and_probability_rows() {
        let mut model = Model::build(tiny_dense(alrelu()), &[3], 2, 1).unwrap();
        let batch = Tensor::new(vec![5, 3], (0..15).map(|i| i as f32 * 0.1 - 0.7).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (probs, cache) = model.forward_train(&batch, &mut rng).unwrap();
        assert_eq!(probs.shape(), &[5, 2]);
        assert_eq!(cache.layers.len(), 4);
        for i in 0..5 {
            let row_sum: f32 = (0..2).map(|j| probs.at2(i, j)).sum();
            assert!((row_sum - 1.0).abs() < 1e-6);
            assert!(probs.at2(i, 0) >= 0.0);
        }
    }

    #[test]
    fn uniform_logits_give_log_k_loss() {
        // Zero weights and biases: logits all zero, p = 1/2, loss = ln 2.
        let mut model = Model::build(tiny_dense(relu()), &[3], 2, 1).unwrap();
        for p in &mut model.params {
            for t in param_tensors_mut(p) {
                t.data_mut().fill(0.0);
            }
        }
        let batch = Tensor::filled(vec![4, 3], 0.3).unwrap();
        let targets = one_hot(&[0, 1, 0, 1], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, cache) = model.forward_train(&batch, &mut rng).unwrap();
        let out = model.backward(&cache, &targets).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn dropout_rate_zero_matches_inference() {
        let specs = vec![
            LayerSpec::Dense { units: 6 },
            LayerSpec::Activation { kind: alrelu() },
            LayerSpec::Dropout { rate: 0.0 },
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ];
        let mut model = Model::build(specs, &[4], 2, 9).unwrap();
        let batch = Tensor::new(vec![3, 4], (0..12).map(|i| (i as f32).sin()).collect()).unwrap();
        let infer = model.predict_proba(&batch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (train, _) = model.forward_train(&batch, &mut rng).unwrap();
        assert_eq!(infer.data(), train.data());
    }

    #[test]
    fn dropout_masks_zero_or_rescale() {
        let specs = vec![
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ];
        let mut model = Model::build(specs, &[100], 2, 2).unwrap();
        let batch = Tensor::filled(vec![1, 100], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (_, cache) = model.forward_train(&batch, &mut rng).unwrap();
        let LayerCache::Dropout { mask: Some(mask) } = &cache.layers[0] else {
            panic!("dropout cache expected");
        };
        let mut kept = 0;
        for &m in mask.data() {
            assert!(m == 0.0 || (m - 2.0).abs() < 1e-6);
            kept += (m != 0.0) as usize;
        }
        assert!(kept > 20 && kept < 80, "kept {kept}");
    }

    #[test]
    fn batchnorm_standardizes_batch_and_converges_running_stats() {
        let specs = vec![
            LayerSpec::BatchNorm,
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ];
        let mut model = Model::build(specs, &[3], 2, 4).unwrap();
        let batch = Tensor::new(
            vec![8, 3],
            (0..24).map(|i| (i as f32 * 0.37).sin() * 5.0 + 2.0).collect(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, cache) = model.forward_train(&batch, &mut rng).unwrap();
        let LayerCache::BatchNorm { xhat, .. } = &cache.layers[0] else {
            panic!("batch-norm cache expected");
        };
        for j in 0..3 {
            let col: Vec<f64> = (0..8).map(|i| xhat[i * 3 + j] as f64).collect();
            let mean = col.iter().sum::<f64>() / 8.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-5, "mean {mean}");
            // Variance of xhat is var/(var + eps), just under 1.
            assert!(var < 1.0 + 1e-5 && var > 0.9, "var {var}");
        }

        // After many passes over the same batch the running stats converge to
        // the batch stats, so inference reproduces training-mode output.
        for _ in 0..600 {
            model.forward_train(&batch, &mut rng).unwrap();
        }
        let (train_out, _) = model.forward_train(&batch, &mut rng).unwrap();
        let infer_out = model.predict_proba(&batch).unwrap();
        for (a, b) in train_out.data().iter().zip(infer_out.data()) {
            assert!((a - b).abs() < 0.02, "{a} vs {b}");
        }
    }

    #[test]
    fn hostile_init_kills_relu_but_not_alrelu() {
        let ds = make_dying_relu_stress(64, 4, 5).unwrap();
        for (kind, expect_dead) in [(relu(), true), (alrelu(), false)] {
            let mut model = Model::build(tiny_dense(kind), &[4], 2, 3).unwrap();
            model.apply_hostile_init(-10.0);
            let config = TrainConfig {
                epochs: 1,
                batch_size: 16,
                learning_rate: 1e-3,
                optimizer: Optimizer::adam(),
                seed: 21,
            };
            let stats = fit(&mut model, &ds, &config).unwrap();
            if expect_dead {
                assert_eq!(stats[0].dead_units, 4, "all relu units should be dead");
            } else {
                assert_eq!(stats[0].dead_units, 0, "alrelu units must stay alive");
            }
        }
    }

    #[test]
    fn training_reduces_loss_on_blobs() {
        let ds = make_blobs(30, 2, 3, 8.0, 13).unwrap();
        let mut model = Model::build(tiny_dense(alrelu()), &[3], 2, 17).unwrap();
        let config = TrainConfig {
            epochs: 10,
            batch_size: 10,
            learning_rate: 5e-3,
            optimizer: Optimizer::adam(),
            seed: 23,
        };
        let stats = fit(&mut model, &ds, &config).unwrap();
        assert!(
            stats.last().unwrap().mean_loss < stats[0].mean_loss * 0.5,
            "loss {} -> {}",
            stats[0].mean_loss,
            stats.last().unwrap().mean_loss
        );
    }

    #[test]
    fn same_seed_reproduces_training_bitwise() {
        let ds = make_blobs(20, 2, 3, 6.0, 1).unwrap();
        let run = |seed| {
            let specs = vec![
                LayerSpec::Dense { units: 8 },
                LayerSpec::BatchNorm,
                LayerSpec::Activation { kind: alrelu() },
                LayerSpec::Dropout { rate: 0.3 },
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ];
            let mut model = Model::build(specs, &[3], 2, 77).unwrap();
            let config = TrainConfig {
                epochs: 3,
                batch_size: 8,
                learning_rate: 1e-3,
                optimizer: Optimizer::adam(),
                seed,
            };
            fit(&mut model, &ds, &config).unwrap();
            model.flat_params()
        };
        let a = run(5);
        let b = run(5);
        assert_eq!(a, b);
        let c = run(6);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_learning_rate_leaves_model_params_bit_identical() {
        let ds = make_blobs(10, 2, 3, 6.0, 2).unwrap();
        let mut model = Model::build(tiny_dense(relu()), &[3], 2, 31).unwrap();
        let before = model.flat_params();
        let config = TrainConfig {
            epochs: 1,
            batch_size: 4,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
            seed: 6,
        };
        let mut trainer = Trainer::new(&model, &config);
        let (bx, by) = ds.gather(&[0, 1, 2, 3]).unwrap();
        let targets = one_hot(&by, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, cache) = model.forward_train(&bx, &mut rng).unwrap();
        model.backward(&cache, &targets).unwrap();
        trainer.apply_step(&mut model, 0.0);
        let after = model.flat_params();
        assert_eq!(before.len(), after.len());
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn one_hot_encoding() {
        let t = one_hot(&[1, 0, 2], 3).unwrap();
        assert_eq!(t.shape(), &[3, 3]);
        assert_eq!(
            t.data(),
            &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
        assert!(one_hot(&[3], 3).is_err());
        assert!(one_hot(&[], 3).is_err());
    }

    #[test]
    fn layer_spec_json_names() {
        let spec = LayerSpec::Conv2D {
            filters: 8,
            kernel_size: 5,
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains(r#""type":"conv2d""#), "{json}");
        let spec = LayerSpec::Activation { kind: alrelu() };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains(r#""name":"alrelu""#), "{json}");
        let back: LayerSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<LayerSpec>(r#"{"type":"flatten"}"#).is_err());
    }

    #[test]
    fn train_epoch_rejects_mismatched_dataset() {
        let ds = make_blobs(10, 3, 3, 6.0, 2).unwrap();
        let mut model = Model::build(tiny_dense(relu()), &[3], 2, 0).unwrap();
        let config = TrainConfig {
            epochs: 1,
            batch_size: 4,
            learning_rate: 1e-3,
            optimizer: Optimizer::Sgd,
            seed: 0,
        };
        let err = fit(&mut model, &ds, &config).unwrap_err().to_string();
        assert!(err.contains("classes"), "{err}");
    }
}
