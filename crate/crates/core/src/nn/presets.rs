//! The two reference architectures used throughout the experiment harness.
//! Each takes the activation under comparison and the class count; everything
//! else is fixed so runs differ only in the activation.

use super::LayerSpec;
use crate::activations::ActivationKind;

/// Two Dense(100) -> BatchNorm -> Activation -> Dropout(0.4) blocks and a
/// softmax head. For tabular (flat) features.
pub fn shallow_dense(kind: ActivationKind, n_classes: usize) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(10);
    for _ in 0..2 {
        specs.push(LayerSpec::Dense { units: 100 });
        specs.push(LayerSpec::BatchNorm);
        specs.push(LayerSpec::Activation { kind });
        specs.push(LayerSpec::Dropout { rate: 0.4 });
    }
    specs.push(LayerSpec::Dense { units: n_classes });
    specs.push(LayerSpec::Softmax);
    specs
}

/// Small convnet for `[h, w, c]` images: two conv blocks (8 filters of 5x5,
/// then 16 of 3x3, each with pooling), global average pooling, and a softmax
/// head. Needs inputs of at least roughly 16x16 for the shapes to work out.
pub fn small_cnn(kind: ActivationKind, n_classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2D {
            filters: 8,
            kernel_size: 5,
        },
        LayerSpec::Activation { kind },
        LayerSpec::BatchNorm,
        LayerSpec::MaxPool2D { window: 2 },
        LayerSpec::Dropout { rate: 0.1 },
        LayerSpec::Conv2D {
            filters: 16,
            kernel_size: 3,
        },
        LayerSpec::Activation { kind },
        LayerSpec::BatchNorm,
        LayerSpec::MaxPool2D { window: 2 },
        LayerSpec::Dropout { rate: 0.2 },
        LayerSpec::GlobalAvgPool,
        LayerSpec::Activation { kind },
        LayerSpec::BatchNorm,
        LayerSpec::Dropout { rate: 0.3 },
        LayerSpec::Dense { units: n_classes },
        LayerSpec::Softmax,
    ]
}
