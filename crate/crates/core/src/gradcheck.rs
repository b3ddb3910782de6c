//! Finite-difference verification of analytic gradients: the three scalar
//! activations in isolation, and whole models end to end (every parameter of
//! a small network against a central difference of the training loss).
//!
//! Piecewise-linear activations make central differences exact to rounding
//! error away from their kinks, so the scalar checks run in f64 with a tight
//! tolerance. Whole-model checks run the real f32 forward pass; parameters
//! whose perturbation flips any activation branch or pooling argmax are
//! skipped (and counted), because the loss is not differentiable there.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activations::{grad_check, ActivationKind};
use crate::data::FeatureKind;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy_from_probs, one_hot, LayerSpec, Model};
use crate::tensor::Tensor;

/// Central-difference step for the scalar activation checks.
pub const ACTIVATION_STEP: f64 = 1e-4;
/// Maximum relative error tolerated by the scalar activation checks.
pub const ACTIVATION_TOLERANCE: f64 = 1e-5;
/// Whole-model comparisons pass when either bound holds.
pub const MODEL_REL_TOLERANCE: f64 = 1e-2;
pub const MODEL_ABS_TOLERANCE: f64 = 1e-4;
/// Whole-model finite-difference step (applied to f32 parameters).
pub const MODEL_FD_STEP: f32 = 1e-2;
/// Pre-activations this close to a kink in the reference forward disqualify
/// the whole check point; seeds below are chosen to stay clear.
pub const KINK_MARGIN: f32 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCheck {
    pub name: String,
    pub points: usize,
    pub max_rel_err: f64,
}

impl ActivationCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= ACTIVATION_TOLERANCE
    }
}

/// Compares each activation's analytic derivative against a central
/// difference at `trials` random points per kind, away from the kink at 0.
pub fn check_activations(seed: u64, trials: usize) -> Result<Vec<ActivationCheck>> {
    if trials == 0 {
        return Err(Error::validation("nothing to check: trials must be at least 1"));
    }
    let kinds = [
        ActivationKind::relu(),
        ActivationKind::lrelu(0.01)?,
        ActivationKind::alrelu(0.01)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let mut max_rel = 0.0f64;
        for _ in 0..trials {
            let x = loop {
                let x: f64 = rng.gen_range(-5.0..5.0);
                if x.abs() > 10.0 * ACTIVATION_STEP {
                    break x;
                }
            };
            max_rel = max_rel.max(grad_check(kind, x, ACTIVATION_STEP)?);
        }
        out.push(ActivationCheck {
            name: kind.name().to_string(),
            points: trials,
            max_rel_err: max_rel,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheck {
    pub name: String,
    pub params_total: usize,
    pub params_checked: usize,
    /// Parameters skipped because perturbing them crossed an activation kink
    /// or switched a pooling argmax.
    pub params_skipped: usize,
    pub failures: usize,
    /// Worst relative error among parameters the absolute bound didn't
    /// already cover (0 when every parameter passed absolutely).
    pub max_rel_err: f64,
    /// Worst absolute error among parameters the relative bound didn't
    /// already cover.
    pub max_abs_err: f64,
}

impl ModelCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.params_checked > 0
    }
}

/// Checks every parameter of a freshly initialized model against a central
/// difference of the training loss on one small batch.
///
/// All forward passes (reference and perturbed) replay the same RNG clone, so
/// dropout masks are frozen and the loss is a deterministic function of the
/// parameters.
pub fn check_model(
    name: &str,
    specs: Vec<LayerSpec>,
    input_shape: &[usize],
    n_classes: usize,
    feature_kind: FeatureKind,
    seed: u64,
) -> Result<ModelCheck> {
    let mut model = Model::build(specs, input_shape, n_classes, seed)?;
    let batch_n = 4;
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0D5F_BEEF);
    let mut shape = vec![batch_n];
    shape.extend_from_slice(input_shape);
    let len: usize = shape.iter().product();
    let data: Vec<f32> = (0..len)
        .map(|_| match feature_kind {
            FeatureKind::Tabular => data_rng.gen_range(-1.0..1.0),
            FeatureKind::Image => data_rng.gen_range(0.0..1.0),
        })
        .collect();
    let batch = Tensor::new(shape, data)?;
    let labels: Vec<usize> = (0..batch_n).map(|i| i % n_classes).collect();
    let targets = one_hot(&labels, n_classes)?;

    // (loss, branch pattern, min |pre-activation|) at the current params
    type Observation = (f64, (Vec<bool>, Vec<usize>), f32);
    let forward_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_CAFE);
    let eval = |model: &mut Model| -> Result<Observation> {
        let mut rng = forward_rng.clone();
        let (probs, cache) = model.forward_train(&batch, &mut rng)?;
        let loss = cross_entropy_from_probs(&probs, &targets)?;
        Ok((loss, cache.branch_pattern(), cache.min_abs_preactivation()))
    };

    let (_, base_pattern, min_pre) = eval(&mut model)?;
    if min_pre <= KINK_MARGIN {
        return Err(Error::validation(format!(
            "check point for {name} has a pre-activation within {KINK_MARGIN} of a kink \
             (min |pre| = {min_pre:e}); pick a different seed"
        )));
    }

    // Reference analytic gradients, from a forward pass with the same masks.
    {
        let mut rng = forward_rng.clone();
        let (_, cache) = model.forward_train(&batch, &mut rng)?;
        model.backward(&cache, &targets)?;
    }
    let analytic = model.flat_grads();

    let total = model.n_params();
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut failures = 0usize;
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let h = MODEL_FD_STEP;
    // indexing, not iterating: idx drives nudge_param as well
    #[allow(clippy::needless_range_loop)]
    for idx in 0..total {
        model.nudge_param(idx, h);
        let (loss_plus, pat_plus, _) = eval(&mut model)?;
        model.nudge_param(idx, -2.0 * h);
        let (loss_minus, pat_minus, _) = eval(&mut model)?;
        model.nudge_param(idx, h);
        if pat_plus != base_pattern || pat_minus != base_pattern {
            skipped += 1;
            continue;
        }
        let fd = (loss_plus - loss_minus) / (2.0 * h as f64);
        let g = analytic[idx] as f64;
        let abs = (fd - g).abs();
        let rel = abs / fd.abs().max(g.abs()).max(1e-12);
        checked += 1;
        // A parameter passes if either bound holds; the relative bound covers
        // large gradients, the absolute bound covers gradients near zero
        // (where relative error is meaningless at the fd noise floor).
        if abs > MODEL_ABS_TOLERANCE && rel > MODEL_REL_TOLERANCE {
            failures += 1;
        }
        if abs > MODEL_ABS_TOLERANCE {
            max_rel = max_rel.max(rel);
        }
        if rel > MODEL_REL_TOLERANCE {
            max_abs = max_abs.max(abs);
        }
    }
    Ok(ModelCheck {
        name: name.to_string(),
        params_total: total,
        params_checked: checked,
        params_skipped: skipped,
        failures,
        max_rel_err: max_rel,
        max_abs_err: max_abs,
    })
}

/// The two standard whole-model checks: a dense stack and a small convnet.
/// Between them they exercise every layer kind and all three activations,
/// and both stay well under 500 parameters.
pub fn default_model_checks(seed: u64) -> Result<Vec<ModelCheck>> {
    let dense = vec![
        LayerSpec::Dense { units: 8 },
        LayerSpec::BatchNorm,
        LayerSpec::Activation {
            kind: ActivationKind::relu(),
        },
        LayerSpec::Dropout { rate: 0.3 },
        LayerSpec::Dense { units: 6 },
        LayerSpec::Activation {
            kind: ActivationKind::alrelu(0.01)?,
        },
        LayerSpec::Dense { units: 3 },
        LayerSpec::Softmax,
    ];
    let conv = vec![
        LayerSpec::Conv2D {
            filters: 2,
            kernel_size: 3,
        },
        LayerSpec::Activation {
            kind: ActivationKind::alrelu(0.01)?,
        },
        LayerSpec::BatchNorm,
        LayerSpec::MaxPool2D { window: 2 },
        LayerSpec::Dropout { rate: 0.25 },
        LayerSpec::Conv2D {
            filters: 3,
            kernel_size: 1,
        },
        LayerSpec::Activation {
            kind: ActivationKind::lrelu(0.01)?,
        },
        LayerSpec::GlobalAvgPool,
        LayerSpec::Dense { units: 2 },
        LayerSpec::Softmax,
    ];
    Ok(vec![
        check_model("dense_stack", dense, &[6], 3, FeatureKind::Tabular, seed)?,
        check_model("small_conv", conv, &[6, 6, 1], 2, FeatureKind::Image, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_checks_pass_tight_tolerance() {
        let checks = check_activations(7, 200).unwrap();
        assert_eq!(checks.len(), 3);
        for c in &checks {
            assert!(c.passed(), "{}: {:e}", c.name, c.max_rel_err);
        }
    }

    #[test]
    fn zero_trials_is_an_error() {
        assert!(check_activations(7, 0).is_err());
    }

    #[test]
    fn a_sign_flipped_slope_is_caught() {
        // Simulate the classic bug: using +alpha instead of -alpha on the
        // negative branch of ALReLU. The central difference sees the true
        // slope, so the relative error is enormous.
        let kind = ActivationKind::alrelu(0.01).unwrap();
        let x = -1.5f64;
        let wrong_grad = 0.01f64; // should be -0.01
        let cd = (kind.value_f64(x + ACTIVATION_STEP) - kind.value_f64(x - ACTIVATION_STEP))
            / (2.0 * ACTIVATION_STEP);
        let rel = (cd - wrong_grad).abs() / wrong_grad.abs().max(1e-12);
        assert!(rel > 1.0, "a sign flip must blow past any tolerance, rel={rel}");
        // And the real gradient passes.
        assert!(grad_check(kind, x, ACTIVATION_STEP).unwrap() <= ACTIVATION_TOLERANCE);
    }

    #[test]
    fn default_model_checks_pass() {
        let checks = default_model_checks(42).unwrap();
        assert_eq!(checks.len(), 2);
        for c in &checks {
            assert!(c.params_total <= 500, "{} too big: {}", c.name, c.params_total);
            assert!(
                c.passed(),
                "{}: {} failures, max rel {:e}, max abs {:e} ({} checked, {} skipped)",
                c.name,
                c.failures,
                c.max_rel_err,
                c.max_abs_err,
                c.params_checked,
                c.params_skipped
            );
            // The check is meaningless if it skips nearly everything. Conv
            // weight sharing makes skips common (one weight shifts hundreds
            // of pre-activations, and any of them near zero flips its branch
            // under the finite-difference step), so allow up to 30%.
            assert!(
                c.params_checked * 10 >= c.params_total * 7,
                "{}: only {}/{} checked ({} skipped)",
                c.name,
                c.params_checked,
                c.params_total,
                c.params_skipped
            );
        }
    }
}
