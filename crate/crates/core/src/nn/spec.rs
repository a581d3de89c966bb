//! Declarative model description, deserialized from JSON.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
    Linear,
}

impl Activation {
    /// Sigmoid and tanh: the functions that flatten out at large |x|.
    pub fn is_logistic(self) -> bool {
        matches!(self, Activation::Sigmoid | Activation::Tanh)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softmax => "softmax",
            Activation::Linear => "linear",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum Init {
    #[default]
    GlorotUniform,
    UniformSmall {
        #[serde(default = "default_small_scale")]
        scale: f64,
    },
    Constant {
        value: f64,
    },
}

fn default_small_scale() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        units: usize,
        /// Required on the first dense layer; checked against the running
        /// width elsewhere.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input_dim: Option<usize>,
        #[serde(default)]
        init: Init,
        #[serde(default)]
        bias_init: f64,
    },
    Activation {
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
}

impl LayerSpec {
    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense {
            units,
            input_dim: None,
            init: Init::GlorotUniform,
            bias_init: 0.0,
        }
    }

    pub fn dense_in(input_dim: usize, units: usize) -> Self {
        LayerSpec::Dense {
            units,
            input_dim: Some(input_dim),
            init: Init::GlorotUniform,
            bias_init: 0.0,
        }
    }

    pub fn activation(activation: Activation) -> Self {
        LayerSpec::Activation { activation }
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec::Dropout { rate }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
    BinaryCrossentropy,
    CategoricalCrossentropy,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::Mse => "mse",
            Loss::BinaryCrossentropy => "binary_crossentropy",
            Loss::CategoricalCrossentropy => "categorical_crossentropy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Rmsprop,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    pub loss: Loss,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    pub task: Task,
    /// Clamp predicted probabilities into `[1e-12, 1 - 1e-12]` inside the
    /// cross-entropy losses.
    #[serde(default)]
    pub clip_probabilities: bool,
    /// Reshuffle the sample order every epoch (seeded).
    #[serde(default)]
    pub shuffle: bool,
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<ModelSpec> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| Error::InvalidSpec {
            field: format!("line {} column {}", e.line(), e.column()),
            reason: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: String, reason: &str| {
            Err(Error::InvalidSpec {
                field,
                reason: reason.to_string(),
            })
        };
        if !self.layers.iter().any(LayerSpec::is_dense) {
            return bad("layers".into(), "at least one dense layer is required");
        }
        if self.batch_size == 0 {
            return bad("batch_size".into(), "must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs".into(), "must be >= 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate".into(), "must be a positive finite number");
        }
        let mut width: Option<usize> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let field = format!("layers[{i}]");
            match *layer {
                LayerSpec::Dense {
                    units,
                    input_dim,
                    init,
                    bias_init,
                } => {
                    if units == 0 {
                        return bad(field, "dense units must be >= 1");
                    }
                    match (width, input_dim) {
                        (None, None) => {
                            return bad(field, "first dense layer needs input_dim");
                        }
                        (_, Some(0)) => return bad(field, "input_dim must be >= 1"),
                        (Some(w), Some(d)) if w != d => {
                            return bad(field, "input_dim disagrees with the previous layer width");
                        }
                        _ => {}
                    }
                    match init {
                        Init::UniformSmall { scale } if !(scale.is_finite() && scale > 0.0) => {
                            return bad(field, "uniform_small scale must be positive");
                        }
                        Init::Constant { value } if !value.is_finite() => {
                            return bad(field, "constant init must be finite");
                        }
                        _ => {}
                    }
                    if !bias_init.is_finite() {
                        return bad(field, "bias_init must be finite");
                    }
                    width = Some(units);
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return bad(field, "rate in [0,1)");
                    }
                }
                LayerSpec::Activation { .. } => {
                    if width.is_none() {
                        return bad(field, "an activation cannot precede the first dense layer");
                    }
                }
            }
        }
        Ok(())
    }

    /// Feature count expected by the first dense layer.
    pub fn input_dim(&self) -> usize {
        self.layers
            .iter()
            .find_map(|l| match l {
                LayerSpec::Dense { input_dim, .. } => *input_dim,
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Width of the final layer output.
    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                LayerSpec::Dense { units, .. } => Some(*units),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// 1-based indices of the dense layers.
    pub fn dense_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_dense())
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// 1-based index and function of the last activation layer that comes
    /// after the last dense layer, if any.
    pub fn final_activation(&self) -> Option<(usize, Activation)> {
        let last_dense = *self.dense_indices().last()?;
        self.layers
            .iter()
            .enumerate()
            .skip(last_dense)
            .filter_map(|(i, l)| match l {
                LayerSpec::Activation { activation } => Some((i + 1, *activation)),
                _ => None,
            })
            .next_back()
    }

    /// Function applied to the network output: the final activation, or
    /// linear when the model ends in a dense layer.
    pub fn output_activation(&self) -> Activation {
        self.final_activation()
            .map(|(_, a)| a)
            .unwrap_or(Activation::Linear)
    }

    pub fn layer_activation(&self, index: usize) -> Option<Activation> {
        match self.layers.get(index.checked_sub(1)?)? {
            LayerSpec::Activation { activation } => Some(*activation),
            _ => None,
        }
    }
}
