//! Classification metrics: confusion counts, support-weighted
//! precision/recall/F1, and tie-aware ROC-AUC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Integer confusion counts; `count(t, p)` is the number of samples with
/// true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    n_classes: usize,
}

pub fn confusion(
    true_labels: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix> {
    if n_classes == 0 {
        return Err(Error::validation("confusion matrix needs n_classes >= 1"));
    }
    if true_labels.len() != predicted.len() {
        return Err(Error::validation(format!(
            "{} true labels but {} predictions",
            true_labels.len(),
            predicted.len()
        )));
    }
    if true_labels.is_empty() {
        return Err(Error::validation("confusion matrix needs at least one sample"));
    }
    let mut counts = vec![0u64; n_classes * n_classes];
    for (&t, &p) in true_labels.iter().zip(predicted) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::validation(format!(
                "label pair (true={t}, pred={p}) out of range for {n_classes} classes"
            )));
        }
        counts[t * n_classes + p] += 1;
    }
    Ok(ConfusionMatrix { counts, n_classes })
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.n_classes + predicted]
    }

    pub fn n_samples(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn row_sum(&self, t: usize) -> u64 {
        (0..self.n_classes).map(|p| self.count(t, p)).sum()
    }

    fn col_sum(&self, p: usize) -> u64 {
        (0..self.n_classes).map(|t| self.count(t, p)).sum()
    }

    fn trace(&self) -> u64 {
        (0..self.n_classes).map(|c| self.count(c, c)).sum()
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    cm.trace() as f64 / cm.n_samples() as f64
}

/// Support-weighted precision, recall and F1.
///
/// Per-class values with a zero denominator contribute 0. Weighted recall is
/// computed from integer counts as trace/n — algebraically what
/// support-weighting collapses to — so it equals `accuracy` bit for bit.
pub fn weighted_prf(cm: &ConfusionMatrix) -> (f64, f64, f64) {
    let n = cm.n_samples() as f64;
    let mut precision = 0.0;
    let mut f1 = 0.0;
    for c in 0..cm.n_classes() {
        let support = cm.row_sum(c);
        if support == 0 {
            continue;
        }
        let tp = cm.count(c, c) as f64;
        let predicted = cm.col_sum(c);
        let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let r = tp / support as f64;
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let weight = support as f64;
        precision += weight * p;
        f1 += weight * f;
    }
    let recall = cm.trace() as f64 / cm.n_samples() as f64;
    (precision / n, recall, f1 / n)
}

/// Tie-aware ROC-AUC for binary labels via the rank-sum (Mann-Whitney U)
/// formulation: sort by score, average the ranks of tied scores, then
/// `AUC = (sum of positive ranks - n_pos(n_pos+1)/2) / (n_pos * n_neg)`.
/// Errors when either class is absent.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::validation(format!("non-finite score {bad}")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::validation(
            "AUC undefined: need at least one positive and one negative sample",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; ties share the mean rank of their run.
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += mean_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos as f64 * (n_pos as f64 + 1.0)) / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// AUC from class-probability rows. Binary problems use class 1 as the
/// positive score; multiclass problems report the macro average of
/// one-vs-rest AUCs over classes present in the labels.
pub fn auc_from_probs(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    if probs.rank() != 2 {
        return Err(Error::shape(format!(
            "probability matrix must be rank 2, got {:?}",
            probs.shape()
        )));
    }
    let (n, k) = (probs.shape()[0], probs.shape()[1]);
    if n != labels.len() {
        return Err(Error::validation(format!(
            "{n} probability rows but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::validation(format!(
            "label {bad} out of range for {k} probability columns"
        )));
    }
    if k == 2 {
        let scores: Vec<f64> = (0..n).map(|i| probs.at2(i, 1) as f64).collect();
        let flags: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        return roc_auc(&scores, &flags);
    }
    let mut total = 0.0;
    let mut used = 0;
    for class in 0..k {
        let pos = labels.iter().filter(|&&l| l == class).count();
        if pos == 0 || pos == n {
            continue;
        }
        let scores: Vec<f64> = (0..n).map(|i| probs.at2(i, class) as f64).collect();
        let flags: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        total += roc_auc(&scores, &flags)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::validation(
            "AUC undefined: no class has both positive and negative samples",
        ));
    }
    Ok(total / used as f64)
}

/// One evaluation's metrics, serialized with exactly these keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub activation: String,
    pub fold: usize,
    pub repeat: usize,
    pub n_samples: usize,
    pub accuracy: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub auc: f64,
}

#[cfg(test)]
pub(crate) fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0u64;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                total += 1.0;
            } else if scores[i] == scores[j] {
                total += 0.5;
            }
        }
    }
    total / pairs as f64
}
