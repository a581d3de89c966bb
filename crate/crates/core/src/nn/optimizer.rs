//! SGD, RMSprop and Adam over the dense parameter matrices.

use crate::nn::model::{ForwardPass, Model};
use crate::nn::spec::OptimizerKind;
use crate::tensor::Tensor;

pub const RMSPROP_RHO: f64 = 0.9;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    /// Per layer: RMSprop mean square, or Adam first moment.
    first: Vec<Option<Tensor>>,
    /// Per layer: Adam second moment.
    second: Vec<Option<Tensor>>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update using the gradients stored in `pass`.
    pub fn step(&mut self, model: &mut Model, pass: &ForwardPass) {
        let grads: Vec<Option<&Tensor>> = pass.traces.iter().map(|t| t.dw.as_ref()).collect();
        self.apply(model, &grads);
    }

    /// Applies one update with one optional gradient per layer.
    pub fn apply(&mut self, model: &mut Model, grads: &[Option<&Tensor>]) {
        let n = model.layers().len();
        if self.first.len() != n {
            self.first = vec![None; n];
            self.second = vec![None; n];
        }
        self.steps += 1;
        let t = self.steps as i32;
        let lr = self.learning_rate;
        for (i, grad) in grads.iter().enumerate().take(n) {
            let (Some(g), Some(w)) = (grad, model.params_mut(i)) else {
                continue;
            };
            let g = g.data();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, &g) in w.data_mut().iter_mut().zip(g) {
                        *w -= lr * g;
                    }
                }
                OptimizerKind::Rmsprop => {
                    let cache = self.first[i].get_or_insert_with(|| Tensor::zeros(w.rows(), w.cols()));
                    for ((w, c), &g) in w.data_mut().iter_mut().zip(cache.data_mut()).zip(g) {
                        *c = RMSPROP_RHO * *c + (1.0 - RMSPROP_RHO) * g * g;
                        *w -= lr * g / (c.sqrt() + EPSILON);
                    }
                }
                OptimizerKind::Adam => {
                    let m = self.first[i].get_or_insert_with(|| Tensor::zeros(w.rows(), w.cols()));
                    let v = self.second[i].get_or_insert_with(|| Tensor::zeros(w.rows(), w.cols()));
                    let c1 = 1.0 - ADAM_BETA1.powi(t);
                    let c2 = 1.0 - ADAM_BETA2.powi(t);
                    for (((w, m), v), &g) in w
                        .data_mut()
                        .iter_mut()
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                        .zip(g)
                    {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + EPSILON);
                    }
                }
            }
        }
    }
}
