//! SGD and Adam. Optimizer state mirrors the model's parameter layout.

use serde::{Deserialize, Serialize};

use super::{param_tensors as tensors, param_tensors_mut as tensors_mut, zeroed_like, LayerParams};

fn default_beta1() -> f32 {
    0.9
}
fn default_beta2() -> f32 {
    0.999
}
fn default_epsilon() -> f32 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f32,
        #[serde(default = "default_beta2")]
        beta2: f32,
        #[serde(default = "default_epsilon")]
        epsilon: f32,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct OptState {
    kind: Optimizer,
    m: Vec<LayerParams>,
    v: Vec<LayerParams>,
    t: i32,
}

impl OptState {
    pub(crate) fn new(kind: Optimizer, params: &[LayerParams]) -> Self {
        let (m, v) = match kind {
            Optimizer::Sgd => (Vec::new(), Vec::new()),
            Optimizer::Adam { .. } => (zeroed_like(params), zeroed_like(params)),
        };
        OptState { kind, m, v, t: 0 }
    }

    pub(crate) fn step(&mut self, params: &mut [LayerParams], grads: &[LayerParams], lr: f32) {
        // A zero step is a no-op by definition; subtracting lr*g anyway could
        // still flip -0.0 bits, so skip the arithmetic entirely.
        if lr == 0.0 {
            return;
        }
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pt, gt) in tensors_mut(p).into_iter().zip(tensors(g)) {
                        for (w, &dw) in pt.data_mut().iter_mut().zip(gt.data()) {
                            *w -= lr * dw;
                        }
                    }
                }
            }
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t);
                let bc2 = 1.0 - beta2.powi(self.t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    let pts = tensors_mut(p);
                    let gts = tensors(g);
                    let mts = tensors_mut(m);
                    let vts = tensors_mut(v);
                    for (((pt, gt), mt), vt) in
                        pts.into_iter().zip(gts).zip(mts).zip(vts)
                    {
                        for (((w, &dw), mw), vw) in pt
                            .data_mut()
                            .iter_mut()
                            .zip(gt.data())
                            .zip(mt.data_mut())
                            .zip(vt.data_mut())
                        {
                            *mw = beta1 * *mw + (1.0 - beta1) * dw;
                            *vw = beta2 * *vw + (1.0 - beta2) * dw * dw;
                            let mhat = *mw / bc1;
                            let vhat = *vw / bc2;
                            *w -= lr * mhat / (vhat.sqrt() + epsilon);
                        }
                    }
                }
            }
        }
    }
}
