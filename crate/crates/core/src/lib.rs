//! A small, self-contained neural-network training library and experiment
//! harness built around three rectifier activations: ReLU, Leaky ReLU and
//! ALReLU (absolute-valued Leaky ReLU). Everything runs on the CPU at desk
//! scale with deterministic seeding throughout, so experiments are exactly
//! reproducible.
//!
//! The pieces:
//! - [`tensor`]: a minimal row-major f32 array,
//! - [`activations`]: the three activations, their derivatives, and a
//!   finite-difference gradient-check oracle,
//! - [`nn`]: layers, softmax cross-entropy, SGD/Adam, and a training loop
//!   that also counts dead hidden units per epoch,
//! - [`metrics`]: accuracy, weighted precision/recall/F1 and ROC-AUC,
//! - [`eval`]: repeated stratified k-fold cross-validation,
//! - [`data`]: CSV/PGM ingestion and synthetic generators,
//! - [`config`] + [`report`]: the JSON experiment config and the emitted
//!   JSON/CSV reports behind the `alrelu` CLI.

pub mod activations;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod report;
mod seeds;
pub mod tensor;

pub use activations::{activate, activate_grad, grad_check, ActivationKind};
pub use error::{Error, Result};
pub use tensor::{ReduceOp, Tensor};
