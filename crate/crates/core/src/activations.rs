//! The three rectifier activations this library exists to compare, their
//! derivatives, and a finite-difference gradient-check oracle.
//!
//! ReLU zeroes the negative branch, Leaky ReLU scales it by a small slope
//! `alpha`, and ALReLU takes the absolute value of the Leaky ReLU output on
//! that branch: `|alpha * x|` for `x <= 0`. The negative-side derivative of
//! ALReLU is therefore `-alpha`, the sign-flipped Leaky ReLU slope. That
//! minus sign is the whole point of the variant and must not be "corrected".

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Default negative-branch slope for LReLU and ALReLU.
pub const DEFAULT_ALPHA: f32 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Relu,
    LRelu,
    AlRelu,
}

/// Tagged choice of activation function plus its slope parameter.
///
/// `alpha` is validated at construction (`0 < alpha < 1`) and is fixed, not
/// learned. For ReLU the slope is irrelevant and pinned to the default.
/// Serializes as `{"name": "alrelu", "alpha": 0.01}`; deserialization goes
/// through the validating constructors, so invalid names or slopes are
/// rejected at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KindRepr", into = "KindRepr")]
pub struct ActivationKind {
    variant: Variant,
    alpha: f32,
}

#[derive(Serialize, Deserialize)]
struct KindRepr {
    name: String,
    #[serde(default = "default_alpha")]
    alpha: f32,
}

fn default_alpha() -> f32 {
    DEFAULT_ALPHA
}

impl From<ActivationKind> for KindRepr {
    fn from(kind: ActivationKind) -> Self {
        KindRepr {
            name: kind.name().to_string(),
            alpha: kind.alpha(),
        }
    }
}

impl TryFrom<KindRepr> for ActivationKind {
    type Error = Error;

    fn try_from(repr: KindRepr) -> Result<Self> {
        match repr.name.as_str() {
            "relu" => Ok(Self::relu()),
            "lrelu" => Self::lrelu(repr.alpha),
            "alrelu" => Self::alrelu(repr.alpha),
            other => Err(Error::validation(format!(
                "unknown activation {other:?}; expected one of \"relu\", \"lrelu\", \"alrelu\""
            ))),
        }
    }
}

fn check_alpha(alpha: f32) -> Result<f32> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(Error::validation(format!(
            "activation alpha must satisfy 0 < alpha < 1, got {alpha}"
        )))
    }
}

impl ActivationKind {
    pub fn relu() -> Self {
        Self {
            variant: Variant::Relu,
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn lrelu(alpha: f32) -> Result<Self> {
        Ok(Self {
            variant: Variant::LRelu,
            alpha: check_alpha(alpha)?,
        })
    }

    pub fn alrelu(alpha: f32) -> Result<Self> {
        Ok(Self {
            variant: Variant::AlRelu,
            alpha: check_alpha(alpha)?,
        })
    }

    /// Parses the config-facing name: `"relu"`, `"lrelu"` or `"alrelu"`,
    /// with the default slope of 0.01.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Self::relu()),
            "lrelu" => Self::lrelu(DEFAULT_ALPHA),
            "alrelu" => Self::alrelu(DEFAULT_ALPHA),
            other => Err(Error::validation(format!(
                "unknown activation {other:?}; expected one of \"relu\", \"lrelu\", \"alrelu\""
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            Variant::Relu => "relu",
            Variant::LRelu => "lrelu",
            Variant::AlRelu => "alrelu",
        }
    }

    pub fn alpha(&self) -> f32 {
        self.alpha
    }

    /// Scalar forward value in f32, the precision the layers run at.
    #[inline]
    pub fn value(&self, x: f32) -> f32 {
        match self.variant {
            Variant::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Variant::LRelu => {
                if x > 0.0 {
                    x
                } else {
                    self.alpha * x
                }
            }
            Variant::AlRelu => {
                if x > 0.0 {
                    x
                } else {
                    (self.alpha * x).abs()
                }
            }
        }
    }

    /// Scalar derivative in f32.
    ///
    /// At `x = 0` exactly, the one-sided derivative of the `x <= 0` branch is
    /// used, matching the branch the forward definitions place 0 in:
    /// ReLU -> 0, LReLU -> alpha, ALReLU -> -alpha.
    #[inline]
    pub fn grad(&self, x: f32) -> f32 {
        match self.variant {
            Variant::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Variant::LRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    self.alpha
                }
            }
            Variant::AlRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    -self.alpha
                }
            }
        }
    }

    /// f64 forward value, used by the finite-difference oracle where f32
    /// rounding would swamp the quantity under test.
    pub fn value_f64(&self, x: f64) -> f64 {
        let alpha = self.alpha as f64;
        match self.variant {
            Variant::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Variant::LRelu => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
            Variant::AlRelu => {
                if x > 0.0 {
                    x
                } else {
                    (alpha * x).abs()
                }
            }
        }
    }

    /// f64 derivative with the same `x = 0` convention as [`grad`](Self::grad).
    pub fn grad_f64(&self, x: f64) -> f64 {
        let alpha = self.alpha as f64;
        match self.variant {
            Variant::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Variant::LRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Variant::AlRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    -alpha
                }
            }
        }
    }
}

/// Elementwise activation of a tensor; the shape is preserved and the input
/// is left untouched.
pub fn activate(kind: ActivationKind, x: &Tensor) -> Tensor {
    x.map(|v| kind.value(v))
}

/// Elementwise derivative of the activation at each input position.
pub fn activate_grad(kind: ActivationKind, x: &Tensor) -> Tensor {
    x.map(|v| kind.grad(v))
}

/// Compares the analytic derivative at `x` against a central finite
/// difference with the given step, returning the relative error
/// `|cd - grad| / max(|grad|, 1e-12)`.
///
/// Points within `10 * step` of the kink at 0 are rejected: the central
/// difference straddles the nondifferentiable point there and measures
/// nothing meaningful.
pub fn grad_check(kind: ActivationKind, x: f64, step: f64) -> Result<f64> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::validation(format!(
            "grad_check step must be positive, got {step}"
        )));
    }
    if x.abs() <= 10.0 * step {
        return Err(Error::validation(format!(
            "nondifferentiable neighborhood: |x| = {} is within 10 * step = {} of the kink at 0",
            x.abs(),
            10.0 * step
        )));
    }
    let central = (kind.value_f64(x + step) - kind.value_f64(x - step)) / (2.0 * step);
    let grad = kind.grad_f64(x);
    Ok((central - grad).abs() / grad.abs().max(1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_kinds() -> [ActivationKind; 3] {
        [
            ActivationKind::relu(),
            ActivationKind::lrelu(DEFAULT_ALPHA).unwrap(),
            ActivationKind::alrelu(DEFAULT_ALPHA).unwrap(),
        ]
    }

    #[test]
    fn forward_values() {
        let relu = ActivationKind::relu();
        let lrelu = ActivationKind::lrelu(0.01).unwrap();
        let alrelu = ActivationKind::alrelu(0.01).unwrap();
        assert_eq!(relu.value(-2.0), 0.0);
        assert_eq!(lrelu.value(-2.0), -0.02);
        assert_eq!(alrelu.value(-3.0), 0.03);
        assert_eq!(alrelu.value(5.0), 5.0);
        for kind in all_kinds() {
            assert_eq!(kind.value(0.0), 0.0);
        }
    }

    #[test]
    fn derivative_values() {
        let relu = ActivationKind::relu();
        let lrelu = ActivationKind::lrelu(0.01).unwrap();
        let alrelu = ActivationKind::alrelu(0.01).unwrap();
        assert_eq!(alrelu.grad(-1.0), -0.01);
        assert_eq!(alrelu.grad(4.0), 1.0);
        assert_eq!(relu.grad(-7.0), 0.0);
        // x <= 0 branch convention at the kink itself.
        assert_eq!(relu.grad(0.0), 0.0);
        assert_eq!(lrelu.grad(0.0), 0.01);
        assert_eq!(alrelu.grad(0.0), -0.01);
    }

    #[test]
    fn tensor_forms_preserve_shape() {
        let x = Tensor::new(vec![2, 3], vec![-2.0, -1.0, 0.0, 1.0, 2.0, 3.0]).unwrap();
        let kind = ActivationKind::alrelu(0.01).unwrap();
        let y = activate(kind, &x);
        let g = activate_grad(kind, &x);
        assert_eq!(y.shape(), x.shape());
        assert_eq!(g.shape(), x.shape());
        assert_eq!(y.data(), &[0.02, 0.01, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(g.data(), &[-0.01, -0.01, -0.01, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn alpha_is_validated() {
        assert!(ActivationKind::lrelu(0.0).is_err());
        assert!(ActivationKind::lrelu(1.0).is_err());
        assert!(ActivationKind::alrelu(-0.01).is_err());
        assert!(ActivationKind::alrelu(0.5).is_ok());
    }

    #[test]
    fn names_round_trip() {
        for name in ["relu", "lrelu", "alrelu"] {
            assert_eq!(ActivationKind::from_name(name).unwrap().name(), name);
        }
        assert_eq!(
            ActivationKind::from_name("alrelu").unwrap().alpha(),
            DEFAULT_ALPHA
        );
        assert!(ActivationKind::from_name("gelu").is_err());
        assert!(ActivationKind::from_name("ReLU").is_err());
    }

    #[test]
    fn grad_check_on_both_branches() {
        let alrelu = ActivationKind::alrelu(0.01).unwrap();
        assert!(grad_check(alrelu, 1.7, 1e-4).unwrap() <= 1e-5);
        assert!(grad_check(alrelu, -0.5, 1e-4).unwrap() <= 1e-5);
    }

    #[test]
    fn grad_check_rejects_kink_neighborhood() {
        let err = grad_check(ActivationKind::relu(), 1e-9, 1e-4).unwrap_err();
        assert!(err.to_string().contains("nondifferentiable neighborhood"));
    }

    #[test]
    fn grad_check_many_random_points_every_kind() {
        let mut state = 0x51ed2701u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) * 20.0 - 10.0
        };
        let step = 1e-4;
        for kind in all_kinds() {
            let mut checked = 0;
            while checked < 1000 {
                let x = next();
                if x.abs() <= 10.0 * step {
                    continue;
                }
                let rel = grad_check(kind, x, step).unwrap();
                assert!(rel <= 1e-5, "{} at x={x}: rel={rel}", kind.name());
                checked += 1;
            }
        }
    }

    proptest! {
        // ALReLU output is nonnegative everywhere; this is what separates it
        // from Leaky ReLU.
        #[test]
        fn alrelu_nonnegative(x in -1e6f32..1e6) {
            let kind = ActivationKind::alrelu(0.01).unwrap();
            prop_assert!(kind.value(x) >= 0.0);
        }

        // max(|alpha*x|, x) formulation agrees bit-for-bit for alpha < 1.
        #[test]
        fn alrelu_max_identity(x in -1e6f32..1e6, alpha in 0.001f32..0.999) {
            let kind = ActivationKind::alrelu(alpha).unwrap();
            let via_max = f32::max((alpha * x).abs(), x);
            prop_assert_eq!(kind.value(x).to_bits(), via_max.to_bits());
        }

        // ALReLU(x) = ReLU(x) + alpha * ReLU(-x), exactly.
        #[test]
        fn alrelu_relu_decomposition(x in -1e6f32..1e6, alpha in 0.001f32..0.999) {
            let alrelu = ActivationKind::alrelu(alpha).unwrap();
            let relu = ActivationKind::relu();
            let decomposed = relu.value(x) + alpha * relu.value(-x);
            prop_assert_eq!(alrelu.value(x).to_bits(), decomposed.to_bits());
        }

        // Continuity at 0: |f(e) - f(-e)| <= (1 + alpha) * e, up to f32
        // rounding of the two sides.
        #[test]
        fn continuity_at_zero(eps in 1e-30f32..1.0) {
            for kind in all_kinds() {
                let gap = (kind.value(eps) as f64 - kind.value(-eps) as f64).abs();
                let bound = (1.0 + kind.alpha() as f64) * eps as f64;
                prop_assert!(gap <= bound * (1.0 + 4.0 * f32::EPSILON as f64));
            }
        }

        // All three activations and derivatives coincide on positives.
        #[test]
        fn agreement_on_positives(x in f32::MIN_POSITIVE..1e6) {
            let [relu, lrelu, alrelu] = all_kinds();
            prop_assert_eq!(relu.value(x), x);
            prop_assert_eq!(lrelu.value(x), x);
            prop_assert_eq!(alrelu.value(x), x);
            prop_assert_eq!(relu.grad(x), 1.0);
            prop_assert_eq!(lrelu.grad(x), 1.0);
            prop_assert_eq!(alrelu.grad(x), 1.0);
        }

        // The negative-side ALReLU gradient is -alpha, never zero: the unit
        // always receives an update signal.
        #[test]
        fn alrelu_negative_gradient_nonzero(x in -1e6f32..-f32::MIN_POSITIVE, alpha in 0.001f32..0.999) {
            let kind = ActivationKind::alrelu(alpha).unwrap();
            prop_assert_eq!(kind.grad(x), -alpha);
            prop_assert!(kind.grad(x).abs() > 0.0);
        }
    }
}
