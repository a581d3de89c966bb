//! Symptom detection rules.
//!
//! Every rule is a pure function of its inputs, the [`MonitorConfig`], and
//! (for the trend rules) a caller-owned [`Window`]. Threshold comparisons are
//! strict: a fraction has to *exceed* its layer ratio and a gradient has to
//! *drop below* the vanishing threshold.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::codes::Quantity;
use crate::error::{Error, Result};
use crate::nn::Activation;
use crate::tensor::Tensor;

/// Every tunable threshold used by detection and root-cause checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    /// Steps per trend window (N).
    pub history_window: usize,
    pub saturation_max: f64,
    pub saturation_min: f64,
    pub saturation_layer_ratio: f64,
    pub dead_node_threshold: f64,
    pub dead_node_layer_ratio: f64,
    pub vanishing_threshold: f64,
    pub data_range_low: f64,
    pub data_range_high: f64,
    pub weight_var_min: f64,
    pub weight_var_max: f64,
    pub learn_threshold: f64,
    pub learn_band_factor: f64,
    pub unchanged_rel_tolerance: f64,
    /// Parameterized-layer count above which depth is blamed.
    pub max_param_layers: usize,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            history_window: 5,
            saturation_max: 5.0,
            saturation_min: -5.0,
            saturation_layer_ratio: 0.5,
            dead_node_threshold: 0.0,
            dead_node_layer_ratio: 0.7,
            vanishing_threshold: 1e-7,
            data_range_low: -1.0,
            data_range_high: 1.0,
            weight_var_min: 1e-5,
            weight_var_max: 10.0,
            learn_threshold: 1e-3,
            learn_band_factor: 10.0,
            unchanged_rel_tolerance: 1e-6,
            max_param_layers: 8,
        }
    }
}

impl MonitorConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: MonitorConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig {
            field: format!("line {}", e.line()),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::InvalidConfig {
                field: field.into(),
                reason: reason.into(),
            })
        };
        let ratio_ok = |r: f64| r > 0.0 && r <= 1.0;
        if self.history_window < 2 {
            return bad("history_window", "must be >= 2");
        }
        if !ratio_ok(self.saturation_layer_ratio) {
            return bad("saturation_layer_ratio", "must lie in (0,1]");
        }
        if !ratio_ok(self.dead_node_layer_ratio) {
            return bad("dead_node_layer_ratio", "must lie in (0,1]");
        }
        if !(self.saturation_min < self.saturation_max) {
            return bad("saturation_min", "must be below saturation_max");
        }
        if !(self.weight_var_min < self.weight_var_max) {
            return bad("weight_var_min", "must be below weight_var_max");
        }
        if !(self.data_range_low < self.data_range_high) {
            return bad("data_range_low", "must be below data_range_high");
        }
        if !(self.vanishing_threshold >= 0.0) {
            return bad("vanishing_threshold", "must be >= 0");
        }
        if !(self.learn_threshold > 0.0) {
            return bad("learn_threshold", "must be positive");
        }
        if !(self.learn_band_factor >= 1.0) {
            return bad("learn_band_factor", "must be >= 1");
        }
        if !(self.unchanged_rel_tolerance >= 0.0) {
            return bad("unchanged_rel_tolerance", "must be >= 0");
        }
        Ok(())
    }
}

/// Ring buffer of the last N observations of one monitored quantity.
///
/// Trend rules are evaluated once every N steps, starting at step N + 1,
/// against the mean of the N values stored before the current one.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    capacity: usize,
    values: VecDeque<f64>,
    seen: usize,
}

impl Window {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            values: VecDeque::with_capacity(capacity),
            seen: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.values.len() == self.capacity
    }

    /// Steps observed so far.
    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Records `value`. On evaluation steps returns the mean of the values
    /// stored before it.
    pub fn observe(&mut self, value: f64) -> Option<f64> {
        let evaluate = self.is_full() && self.seen.is_multiple_of(self.capacity);
        // mean as offset + mean deviation: exact for constant windows
        let prior = evaluate.then(|| {
            let base = self.values[0];
            let dev = self.values.iter().fold(0.0, |acc, &v| acc + (v - base));
            base + dev / self.values.len() as f64
        });
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(value);
        self.seen += 1;
        prior
    }
}

/// Trend windows keyed by (layer, quantity); `None` layer for loss/accuracy.
#[derive(Debug, Clone, Default)]
pub struct History {
    capacity: usize,
    windows: BTreeMap<(Option<usize>, Quantity), Window>,
}

impl History {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            windows: BTreeMap::new(),
        }
    }

    pub fn window(&mut self, layer: Option<usize>, quantity: Quantity) -> &mut Window {
        let cap = self.capacity;
        self.windows
            .entry((layer, quantity))
            .or_insert_with(|| Window::new(cap))
    }
}

/// NaN/infinite mean, or every element exactly zero.
pub fn exploding_tensor(t: &Tensor) -> bool {
    !t.mean().is_finite() || t.all_zero()
}

/// The tensor mean has not moved relative to the window mean.
pub fn unchanged_weight(current: &Tensor, window: &mut Window, cfg: &MonitorConfig) -> bool {
    let m = current.mean();
    match window.observe(m) {
        Some(prior) => (m - prior).abs() <= cfg.unchanged_rel_tolerance * m.abs().max(1.0),
        None => false,
    }
}

fn fraction(t: &Tensor, pred: impl Fn(f64) -> bool) -> f64 {
    t.data().iter().filter(|&&x| pred(x)).count() as f64 / t.len() as f64
}

/// More than the configured share of a logistic layer's inputs sit beyond
/// the saturation bounds.
pub fn saturated_activation(v1: &Tensor, activation: Option<Activation>, cfg: &MonitorConfig) -> bool {
    if !activation.is_some_and(Activation::is_logistic) {
        return false;
    }
    let (hi, lo) = (cfg.saturation_max, cfg.saturation_min);
    fraction(v1, |x| x >= hi || x <= lo) > cfg.saturation_layer_ratio
}

/// More than the configured share of ReLU outputs are inactive.
pub fn dead_node(v2: &Tensor, activation: Option<Activation>, cfg: &MonitorConfig) -> bool {
    if activation != Some(Activation::Relu) {
        return false;
    }
    fraction(v2, |x| x <= cfg.dead_node_threshold) > cfg.dead_node_layer_ratio
}

/// The output range is not contained in the label range.
pub fn out_of_range(v2_last: &Tensor, y: &Tensor) -> bool {
    let (lo, hi) = (v2_last.min(), v2_last.max());
    // NaN fails both comparisons and counts as out of range
    !(lo >= y.min() && hi <= y.max())
}

pub fn loss_not_decreasing(loss: f64, window: &mut Window) -> bool {
    window.observe(loss).is_some_and(|prior| loss >= prior)
}

pub fn accuracy_not_increasing(accuracy: f64, window: &mut Window) -> bool {
    window.observe(accuracy).is_some_and(|prior| accuracy <= prior)
}

/// Mean absolute gradient below the vanishing threshold.
pub fn vanishing_gradient(dw: &Tensor, cfg: &MonitorConfig) -> bool {
    dw.mean_abs() < cfg.vanishing_threshold
}
