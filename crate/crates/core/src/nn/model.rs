//! Sequential feed-forward model with hand-written layer gradients.
//!
//! Dense parameters are stored as one `(in + 1) x out` matrix whose last row
//! is the bias, so weight snapshots and their gradients always carry the bias
//! alongside the kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::activation;
use crate::nn::loss::loss_gradient;
use crate::nn::spec::{Activation, Init, LayerSpec, ModelSpec};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Activation,
    Dropout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense { params: Tensor },
    Activation(Activation),
    Dropout { rate: f64 },
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense { .. } => LayerKind::Dense,
            Layer::Activation(_) => LayerKind::Activation,
            Layer::Dropout { .. } => LayerKind::Dropout,
        }
    }
}

/// Per-layer snapshot of one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// 1-based position in the model.
    pub layer_index: usize,
    pub kind: LayerKind,
    pub activation: Option<Activation>,
    /// Raw layer output (the activation input, for activation layers).
    pub v1: Tensor,
    /// Post-activation output; fed to the next layer.
    pub v2: Tensor,
    /// Parameters (kernel rows then bias row) at the time of the forward pass.
    pub w: Option<Tensor>,
    /// Gradient of the batch-mean loss w.r.t. `w`. Filled by backward.
    pub dw: Option<Tensor>,
    /// Gradient w.r.t. this layer's input. Filled by backward.
    pub v3: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub input: Tensor,
    pub traces: Vec<LayerTrace>,
    masks: Vec<Option<Tensor>>,
}

impl ForwardPass {
    pub fn output(&self) -> &Tensor {
        &self.traces.last().expect("model has layers").v2
    }

    pub fn has_gradients(&self) -> bool {
        self.traces.iter().all(|t| t.v3.is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    layers: Vec<Layer>,
}

impl Model {
    /// Validates `spec` and initializes parameters from `rng`.
    pub fn build(spec: &ModelSpec, rng: &mut Rng) -> Result<Model> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut width = spec.input_dim();
        for layer in &spec.layers {
            layers.push(match *layer {
                LayerSpec::Dense {
                    units,
                    init,
                    bias_init,
                    ..
                } => {
                    let params = init_params(width, units, init, bias_init, rng);
                    width = units;
                    Layer::Dense { params }
                }
                LayerSpec::Activation { activation } => Layer::Activation(activation),
                LayerSpec::Dropout { rate } => Layer::Dropout { rate },
            });
        }
        Ok(Model {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Parameter matrix of the layer at 0-based position `i`, if it has one.
    pub fn params(&self, i: usize) -> Option<&Tensor> {
        match &self.layers[i] {
            Layer::Dense { params } => Some(params),
            _ => None,
        }
    }

    pub fn params_mut(&mut self, i: usize) -> Option<&mut Tensor> {
        match &mut self.layers[i] {
            Layer::Dense { params } => Some(params),
            _ => None,
        }
    }

    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<ForwardPass> {
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (v1, v2, w, act, mask) = match layer {
                Layer::Dense { params } => {
                    let (kernel, bias) = split_params(params);
                    if current.cols() != kernel.rows() {
                        return Err(Error::ShapeMismatch {
                            op: "dense forward",
                            lhs: current.shape(),
                            rhs: kernel.shape(),
                        });
                    }
                    let v1 = current.matmul(&kernel)?.add_row(&bias)?;
                    (v1.clone(), v1, Some(params.clone()), None, None)
                }
                Layer::Activation(act) => {
                    let v2 = activation::apply(*act, &current);
                    (current, v2, None, Some(*act), None)
                }
                Layer::Dropout { rate } => {
                    if mode == Mode::Inference || *rate == 0.0 {
                        (current.clone(), current, None, None, None)
                    } else {
                        let keep = 1.0 / (1.0 - rate);
                        let mut mask = Tensor::zeros(current.rows(), current.cols());
                        for m in mask.data_mut() {
                            *m = if rng.uniform(0.0, 1.0) >= *rate { keep } else { 0.0 };
                        }
                        let v2 = current.hadamard(&mask)?;
                        (current, v2, None, None, Some(mask))
                    }
                }
            };
            current = v2.clone();
            traces.push(LayerTrace {
                layer_index: i + 1,
                kind: layer.kind(),
                activation: act,
                v1,
                v2,
                w,
                dw: None,
                v3: None,
            });
            masks.push(mask);
        }
        Ok(ForwardPass {
            input: x.clone(),
            traces,
            masks,
        })
    }

    /// Inference-mode prediction (dropout disabled).
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        // inference never draws from the rng
        let mut rng = Rng::seeded(0);
        Ok(self.forward(x, Mode::Inference, &mut rng)?.output().clone())
    }

    /// Back-propagates the batch-mean loss, filling `dw` and `v3` in every
    /// trace, last layer first.
    pub fn backward(&self, pass: &mut ForwardPass, y: &Tensor) -> Result<()> {
        let mut grad = loss_gradient(
            pass.output(),
            y,
            self.spec.loss,
            self.spec.clip_probabilities,
        )?;
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 {
                &pass.input
            } else {
                &pass.traces[i - 1].v2
            };
            let trace = &pass.traces[i];
            let (dw, v3) = match &self.layers[i] {
                Layer::Dense { params } => {
                    let (kernel, _) = split_params(params);
                    let dk = input.transpose().matmul(&grad)?;
                    let db = grad.sum_rows();
                    let v3 = grad.matmul(&kernel.transpose())?;
                    (Some(dk.vstack(&db)?), v3)
                }
                Layer::Activation(act) => {
                    (None, activation::backward(*act, &trace.v1, &trace.v2, &grad))
                }
                Layer::Dropout { .. } => match &pass.masks[i] {
                    Some(mask) => (None, grad.hadamard(mask)?),
                    None => (None, grad.clone()),
                },
            };
            grad = v3.clone();
            let trace = &mut pass.traces[i];
            trace.dw = dw;
            trace.v3 = Some(v3);
        }
        Ok(())
    }
}

fn init_params(fan_in: usize, fan_out: usize, init: Init, bias: f64, rng: &mut Rng) -> Tensor {
    let mut params = Tensor::zeros(fan_in + 1, fan_out);
    let kernel_len = fan_in * fan_out;
    let data = params.data_mut();
    match init {
        Init::GlorotUniform => {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut data[..kernel_len] {
                *w = rng.uniform(-limit, limit);
            }
        }
        Init::UniformSmall { scale } => {
            for w in &mut data[..kernel_len] {
                *w = rng.uniform(-scale, scale);
            }
        }
        Init::Constant { value } => data[..kernel_len].fill(value),
    }
    data[kernel_len..].fill(bias);
    params
}

/// Splits a parameter matrix into (kernel, 1-row bias).
fn split_params(params: &Tensor) -> (Tensor, Tensor) {
    let fan_in = params.rows() - 1;
    let cols = params.cols();
    let kernel = Tensor::new(fan_in, cols, params.data()[..fan_in * cols].to_vec())
        .expect("dense layer has at least one input");
    let bias = Tensor::new(1, cols, params.data()[fan_in * cols..].to_vec()).expect("bias row");
    (kernel, bias)
}
