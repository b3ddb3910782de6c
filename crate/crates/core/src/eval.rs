//! Repeated stratified k-fold cross-validation comparing activations, plus
//! the dying-unit stress protocol. Every model build, shuffle and fold split
//! derives its seed from one base seed, so a whole experiment is reproducible
//! (and re-runs are byte-identical) from that single number.

use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{accuracy, auc_from_probs, confusion, weighted_prf, MetricsReport};
use crate::nn::{fit, LayerSpec, Model, Optimizer, TrainConfig};
use crate::seeds;
use crate::tensor::Tensor;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic stream seed for one role within an experiment. `label`
/// distinguishes uses (e.g. `"folds"`, `"model:relu"`), `a` and `b` are
/// counters such as repeat and fold index. Same inputs, same seed, always.
pub fn derive_seed(base: u64, label: &str, a: u64, b: u64) -> u64 {
    seeds::derive(base, label, a, b)
}

/// A k-way partition of sample indices with per-class balance: each class's
/// samples are spread so fold counts differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Held-out indices of fold `i`.
    pub fn fold(&self, i: usize) -> &[usize] {
        &self.folds[i]
    }

    /// Training indices for fold `i`: everything outside it.
    pub fn train_set(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (j, fold) in self.folds.iter().enumerate() {
            if j != i {
                out.extend_from_slice(fold);
            }
        }
        out
    }
}

/// Stratified k-fold assignment: shuffle each class's indices with the seeded
/// RNG, then deal them round-robin across folds. Errors (naming the class) if
/// any class has fewer than `k` samples.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::validation(format!("k must be at least 2, got {k}")));
    }
    if labels.is_empty() {
        return Err(Error::validation("cannot split zero samples"));
    }
    let n_classes = labels.iter().max().unwrap() + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (class, mut indices) in by_class.into_iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        if indices.len() < k {
            return Err(Error::validation(format!(
                "class {class} has {} samples, fewer than k = {k}",
                indices.len()
            )));
        }
        indices.shuffle(&mut rng);
        for (j, idx) in indices.into_iter().enumerate() {
            folds[j % k].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldPlan { folds })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k: usize,
    pub repeats: usize,
    pub base_seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub optimizer: Optimizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation (n-1 denominator); 0 for a single report.
    pub std: f64,
}

fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MetricSummary { mean, std }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSummary {
    pub activation: String,
    pub n_reports: usize,
    pub accuracy: MetricSummary,
    pub weighted_precision: MetricSummary,
    pub weighted_recall: MetricSummary,
    pub weighted_f1: MetricSummary,
    pub auc: MetricSummary,
}

/// Full record of one cross-validation experiment. Serialization is fully
/// deterministic (fixed field order, no maps), so identical runs produce
/// byte-identical JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub k: usize,
    pub repeats: usize,
    pub base_seed: u64,
    pub reports: Vec<MetricsReport>,
    pub activations: Vec<ActivationSummary>,
}

/// Runs `|activations| * repeats * k` train/evaluate cycles. Fold plans are
/// reshuffled per repeat (seed `derive_seed(base, "folds", repeat, 0)`) and
/// shared by all activations within that repeat, so the comparison sees
/// identical splits. Each run's model init and training stream get their own
/// derived seeds, labeled by activation name, repeat and fold.
pub fn run_cv(
    dataset: &Dataset,
    template: impl Fn(ActivationKind) -> Vec<LayerSpec>,
    activations: &[ActivationKind],
    opts: &CvOptions,
) -> Result<CvSummary> {
    if activations.is_empty() {
        return Err(Error::validation("no activations to evaluate"));
    }
    if opts.repeats == 0 {
        return Err(Error::validation("repeats must be at least 1"));
    }
    let plans: Vec<FoldPlan> = (0..opts.repeats)
        .map(|r| {
            stratified_kfold(
                dataset.labels(),
                opts.k,
                derive_seed(opts.base_seed, "folds", r as u64, 0),
            )
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(activations.len() * opts.repeats * opts.k);
    for &kind in activations {
        for (r, plan) in plans.iter().enumerate() {
            for fold in 0..opts.k {
                reports.push(run_one(
                    dataset, &template, kind, plan, r, fold, opts,
                )?);
            }
        }
    }
    let summaries = activations
        .iter()
        .map(|kind| {
            let rows: Vec<&MetricsReport> = reports
                .iter()
                .filter(|rep| rep.activation == kind.name())
                .collect();
            let col = |get: fn(&MetricsReport) -> f64| {
                summarize(&rows.iter().map(|r| get(r)).collect::<Vec<f64>>())
            };
            ActivationSummary {
                activation: kind.name().to_string(),
                n_reports: rows.len(),
                accuracy: col(|r| r.accuracy),
                weighted_precision: col(|r| r.weighted_precision),
                weighted_recall: col(|r| r.weighted_recall),
                weighted_f1: col(|r| r.weighted_f1),
                auc: col(|r| r.auc),
            }
        })
        .collect();
    Ok(CvSummary {
        k: opts.k,
        repeats: opts.repeats,
        base_seed: opts.base_seed,
        reports,
        activations: summaries,
    })
}

fn run_one(
    dataset: &Dataset,
    template: &impl Fn(ActivationKind) -> Vec<LayerSpec>,
    kind: ActivationKind,
    plan: &FoldPlan,
    repeat: usize,
    fold: usize,
    opts: &CvOptions,
) -> Result<MetricsReport> {
    let train_idx = plan.train_set(fold);
    let eval_idx = plan.fold(fold);
    let train_ds = dataset.subset(&train_idx)?;
    let mut model = Model::build(
        template(kind),
        dataset.sample_shape(),
        dataset.n_classes(),
        derive_seed(
            opts.base_seed,
            &format!("model:{}", kind.name()),
            repeat as u64,
            fold as u64,
        ),
    )?;
    let config = TrainConfig {
        epochs: opts.epochs,
        batch_size: opts.batch_size,
        learning_rate: opts.learning_rate,
        optimizer: opts.optimizer,
        seed: derive_seed(
            opts.base_seed,
            &format!("train:{}", kind.name()),
            repeat as u64,
            fold as u64,
        ),
    };
    fit(&mut model, &train_ds, &config)?;

    let (bx, by) = dataset.gather(eval_idx)?;
    let probs = model.predict_proba(&bx)?;
    let preds = argmax_rows(&probs);
    let cm = confusion(&by, &preds, dataset.n_classes())?;
    let (precision, recall, f1) = weighted_prf(&cm);
    Ok(MetricsReport {
        activation: kind.name().to_string(),
        fold,
        repeat,
        n_samples: eval_idx.len(),
        accuracy: accuracy(&cm),
        weighted_precision: precision,
        weighted_recall: recall,
        weighted_f1: f1,
        auc: auc_from_probs(&probs, &by)?,
    })
}

/// Row-wise argmax; ties resolve to the lower index.
pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    let (n, k) = (probs.shape()[0], probs.shape()[1]);
    (0..n)
        .map(|i| {
            let mut best = 0;
            for j in 1..k {
                if probs.at2(i, j) > probs.at2(i, best) {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub optimizer: Optimizer,
    pub base_seed: u64,
    /// Value written into every bias and batch-norm shift before training;
    /// strongly negative values starve rectifiers from the first batch.
    pub hostile_bias: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressSeries {
    pub activation: String,
    /// Total units being watched across all activation layers.
    pub total_units: usize,
    /// Dead-unit count after each epoch, in order.
    pub dead_units: Vec<usize>,
    pub mean_loss: Vec<f64>,
}

/// Trains one hostilely initialized model per activation and records the
/// per-epoch dead-unit series.
pub fn run_stress(
    dataset: &Dataset,
    template: impl Fn(ActivationKind) -> Vec<LayerSpec>,
    activations: &[ActivationKind],
    opts: &StressOptions,
) -> Result<Vec<StressSeries>> {
    if activations.is_empty() {
        return Err(Error::validation("no activations to evaluate"));
    }
    let mut out = Vec::with_capacity(activations.len());
    for &kind in activations {
        let mut model = Model::build(
            template(kind),
            dataset.sample_shape(),
            dataset.n_classes(),
            derive_seed(opts.base_seed, &format!("stress-model:{}", kind.name()), 0, 0),
        )?;
        model.apply_hostile_init(opts.hostile_bias);
        let config = TrainConfig {
            epochs: opts.epochs,
            batch_size: opts.batch_size,
            learning_rate: opts.learning_rate,
            optimizer: opts.optimizer,
            seed: derive_seed(opts.base_seed, &format!("stress-train:{}", kind.name()), 0, 0),
        };
        let stats = fit(&mut model, dataset, &config)?;
        out.push(StressSeries {
            activation: kind.name().to_string(),
            total_units: model.activation_units().iter().map(|&(_, u)| u).sum(),
            dead_units: stats.iter().map(|s| s.dead_units).collect(),
            mean_loss: stats.iter().map(|s| s.mean_loss).collect(),
        });
    }
    Ok(out)
}
