//! Wires the detectors into the training hooks and turns the first symptom
//! into a diagnosis report.
//!
//! Check order per batch:
//!
//! 1. forward, layer by layer: numerical error on V2 then V1, unchanged
//!    output on V2 then V1, saturation (logistic layers), dead nodes (ReLU
//!    layers), and output range on the last layer;
//! 2. invalid loss, invalid accuracy, loss trend, accuracy trend;
//! 3. backward over dense layers, last to first: numerical error on DW,
//!    vanishing DW, numerical error on W and V3, unchanged V3 then DW.
//!
//! The first check that fires ends the run.

use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codes::{Quantity, Stage, Symptom, SymptomCode};
use crate::data::Dataset;
use crate::detectors::{
    accuracy_not_increasing, dead_node, exploding_tensor, loss_not_decreasing, out_of_range,
    saturated_activation, unchanged_weight, vanishing_gradient, History, MonitorConfig,
};
use crate::diagnosis::{map_symptom, CheckerRecord, DiagnosisContext, ParamSnapshot};
use crate::error::Result;
use crate::nn::{
    compute_accuracy, compute_loss, train, Flow, ForwardPass, LayerKind, LayerTrace, Model,
    ModelSpec, RunRngs, Step, StepMetrics, TrainOutcome, TrainingHooks,
};
use crate::tensor::Tensor;

/// Detector state for one run.
#[derive(Debug, Clone)]
pub struct Monitor {
    cfg: MonitorConfig,
    history: History,
    evaluations: usize,
}

impl Monitor {
    pub fn new(cfg: MonitorConfig) -> Self {
        Self {
            history: History::new(cfg.history_window),
            cfg,
            evaluations: 0,
        }
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.cfg
    }

    /// Detector invocations so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    fn eval(&mut self, fired: bool) -> bool {
        self.evaluations += 1;
        fired
    }

    pub fn forward_hook(&mut self, step: Step, traces: &[LayerTrace], y: &Tensor) -> Option<SymptomCode> {
        let last = traces.len();
        let fw = |code, layer, q| SymptomCode::layer(code, Stage::FW, layer, q, step.epoch, step.batch);
        for t in traces {
            let l = t.layer_index;
            if self.eval(exploding_tensor(&t.v2)) {
                return Some(fw(Symptom::NS, l, Quantity::V2));
            }
            if self.eval(exploding_tensor(&t.v1)) {
                return Some(fw(Symptom::NS, l, Quantity::V1));
            }
            let w = self.history.window(Some(l), Quantity::V2);
            let fired = unchanged_weight(&t.v2, w, &self.cfg);
            if self.eval(fired) {
                return Some(fw(Symptom::UCS, l, Quantity::V2));
            }
            let w = self.history.window(Some(l), Quantity::V1);
            let fired = unchanged_weight(&t.v1, w, &self.cfg);
            if self.eval(fired) {
                return Some(fw(Symptom::UCS, l, Quantity::V1));
            }
            if self.eval(saturated_activation(&t.v1, t.activation, &self.cfg)) {
                return Some(fw(Symptom::SAS, l, Quantity::V1));
            }
            if self.eval(dead_node(&t.v2, t.activation, &self.cfg)) {
                return Some(fw(Symptom::DNS, l, Quantity::V2));
            }
            if l == last && self.eval(out_of_range(&t.v2, y)) {
                return Some(fw(Symptom::ORS, l, Quantity::V2));
            }
        }
        None
    }

    pub fn metrics_hook(&mut self, metrics: &StepMetrics) -> Option<SymptomCode> {
        let (e, b) = (metrics.epoch, metrics.batch);
        if self.eval(!metrics.loss.is_finite()) {
            return Some(SymptomCode::global(Symptom::ILS, Quantity::LOSS, e, b));
        }
        if let Some(acc) = metrics.accuracy {
            if self.eval(!acc.is_finite() || acc == 0.0) {
                return Some(SymptomCode::global(Symptom::IAS, Quantity::ACC, e, b));
            }
        }
        let w = self.history.window(None, Quantity::LOSS);
        let fired = loss_not_decreasing(metrics.loss, w);
        if self.eval(fired) {
            return Some(SymptomCode::global(Symptom::LNDS, Quantity::LOSS, e, b));
        }
        if let Some(acc) = metrics.accuracy {
            let w = self.history.window(None, Quantity::ACC);
            let fired = accuracy_not_increasing(acc, w);
            if self.eval(fired) {
                return Some(SymptomCode::global(Symptom::ANIS, Quantity::ACC, e, b));
            }
        }
        None
    }

    pub fn backward_hook(&mut self, step: Step, traces: &[LayerTrace]) -> Option<SymptomCode> {
        let bw = |code, layer, q| SymptomCode::layer(code, Stage::BW, layer, q, step.epoch, step.batch);
        for t in traces.iter().rev() {
            let (Some(w), Some(dw)) = (&t.w, &t.dw) else {
                continue;
            };
            let l = t.layer_index;
            if self.eval(exploding_tensor(dw)) {
                return Some(bw(Symptom::NS, l, Quantity::DW));
            }
            if self.eval(vanishing_gradient(dw, &self.cfg)) {
                return Some(bw(Symptom::VGS, l, Quantity::DW));
            }
            if self.eval(exploding_tensor(w)) {
                return Some(bw(Symptom::NS, l, Quantity::W));
            }
            if let Some(v3) = &t.v3 {
                if self.eval(exploding_tensor(v3)) {
                    return Some(bw(Symptom::NS, l, Quantity::V3));
                }
                let win = self.history.window(Some(l), Quantity::V3);
                let fired = unchanged_weight(v3, win, &self.cfg);
                if self.eval(fired) {
                    return Some(bw(Symptom::UCS, l, Quantity::V3));
                }
            }
            let win = self.history.window(Some(l), Quantity::DW);
            let fired = unchanged_weight(dw, win, &self.cfg);
            if self.eval(fired) {
                return Some(bw(Symptom::UCS, l, Quantity::DW));
            }
        }
        None
    }
}

impl TrainingHooks for Monitor {
    type Verdict = SymptomCode;

    fn on_forward(&mut self, step: Step, pass: &ForwardPass, y: &Tensor) -> Flow<SymptomCode> {
        self.forward_hook(step, &pass.traces, y).map_or(Flow::Continue, Flow::Stop)
    }

    fn on_metrics(&mut self, _step: Step, metrics: &StepMetrics) -> Flow<SymptomCode> {
        self.metrics_hook(metrics).map_or(Flow::Continue, Flow::Stop)
    }

    fn on_backward(&mut self, step: Step, pass: &ForwardPass) -> Flow<SymptomCode> {
        self.backward_hook(step, &pass.traces).map_or(Flow::Continue, Flow::Stop)
    }
}

// ---- report ----------------------------------------------------------------

/// An `f64` that survives JSON even when NaN or infinite (written as the
/// strings `"NaN"`, `"inf"`, `"-inf"`).
#[derive(Debug, Clone, Copy)]
pub struct Num(pub f64);

impl PartialEq for Num {
    fn eq(&self, other: &Self) -> bool {
        (self.0.is_nan() && other.0.is_nan()) || self.0.to_bits() == other.0.to_bits()
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(v) => Ok(Num(v)),
            Raw::S(s) => match s.as_str() {
                "NaN" => Ok(Num(f64::NAN)),
                "inf" => Ok(Num(f64::INFINITY)),
                "-inf" => Ok(Num(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("bad number {other:?}"))),
            },
        }
    }
}

/// Per-layer statistics at the detection step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: usize,
    pub kind: LayerKind,
    pub activation: Option<String>,
    pub v1_mean: Num,
    pub v2_mean: Num,
    pub v2_variance: Num,
    pub w_variance: Option<Num>,
    pub dw_norm: Option<Num>,
}

impl LayerSummary {
    fn from_trace(t: &LayerTrace) -> Self {
        Self {
            layer: t.layer_index,
            kind: t.kind,
            activation: t.activation.map(|a| a.name().to_string()),
            v1_mean: Num(t.v1.mean()),
            v2_mean: Num(t.v2.mean()),
            v2_variance: Num(t.v2.variance()),
            w_variance: t.w.as_ref().map(|w| Num(w.variance())),
            dw_norm: t.dw.as_ref().map(|d| Num(d.frobenius_norm())),
        }
    }
}

/// Outcome of one diagnosis run. Serializes to JSON with a fixed key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosisReport {
    /// Canonical rendering, e.g. `NS/BW/7/DW` or `CM`.
    pub verdict: String,
    pub symptom: Symptom,
    pub stage: Option<Stage>,
    pub layer: Option<usize>,
    pub quantity: Option<Quantity>,
    pub epoch: usize,
    pub batch: usize,
    pub description: String,
    pub message_code: Option<String>,
    pub message_target_layer: Option<usize>,
    pub message_text: Option<String>,
    /// Checker trace; present only when explanations were requested.
    pub checkers: Option<Vec<CheckerRecord>>,
    pub notes: Vec<String>,
    pub steps: usize,
    pub detector_evaluations: usize,
    pub final_loss: Option<Num>,
    pub train_accuracy: Option<Num>,
    pub layers: Vec<LayerSummary>,
    pub config: MonitorConfig,
    pub duration_seconds: f64,
}

impl DiagnosisReport {
    pub fn is_correct_model(&self) -> bool {
        self.symptom == Symptom::CM
    }

    pub fn symptom_code(&self) -> SymptomCode {
        SymptomCode {
            code: self.symptom,
            stage: self.stage,
            layer_index: self.layer,
            quantity: self.quantity,
            epoch: self.epoch,
            batch: self.batch,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Human-readable two-line summary.
    pub fn headline(&self) -> String {
        match &self.message_text {
            Some(msg) => format!("{}\n{}", self.description, msg),
            None => self.description.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Include the checker trace in the report.
    pub explain: bool,
}

/// Builds the model, trains it under the monitor and reports the first
/// symptom (with its mapped fix) or CM.
pub fn run_diagnosis(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &MonitorConfig,
    opts: RunOptions,
) -> Result<DiagnosisReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rngs = RunRngs::from_seed(spec.seed);
    let mut model = Model::build(spec, &mut rngs.init)?;
    let mut monitor = Monitor::new(cfg.clone());
    let outcome = train(&mut model, data, &mut rngs, &mut monitor)?;

    let train_accuracy = model
        .predict(&data.x)
        .ok()
        .and_then(|p| compute_accuracy(&p, &data.y, spec.task))
        .map(Num);

    let report = match outcome {
        TrainOutcome::Completed { steps, last_metrics } => {
            let (epoch, batch) = last_metrics.map(|m| (m.epoch, m.batch)).unwrap_or((0, 0));
            let verdict = SymptomCode::correct_model(epoch, batch);
            let final_pass = model.predict(&data.x)?;
            DiagnosisReport {
                verdict: verdict.render(),
                symptom: Symptom::CM,
                stage: None,
                layer: None,
                quantity: None,
                epoch,
                batch,
                description: "No issue detected in the model".to_string(),
                message_code: None,
                message_target_layer: None,
                message_text: None,
                checkers: opts.explain.then(Vec::new),
                notes: Vec::new(),
                steps,
                detector_evaluations: monitor.evaluations(),
                final_loss: compute_loss(&final_pass, &data.y, spec.loss, spec.clip_probabilities)
                    .ok()
                    .map(Num),
                train_accuracy,
                layers: Vec::new(),
                config: cfg.clone(),
                duration_seconds: 0.0,
            }
        }
        TrainOutcome::Halted(halt) => {
            let verdict = halt.verdict;
            let mut pass = halt.pass;
            if !pass.has_gradients() {
                // gradients for the mapper only; no update is applied
                let mut probe = pass.clone();
                if model.backward(&mut probe, &halt.batch_y).is_ok() {
                    pass = probe;
                }
            }
            let params = pass
                .traces
                .iter()
                .filter_map(|t| {
                    t.w.as_ref().map(|w| ParamSnapshot {
                        layer_index: t.layer_index,
                        w: w.clone(),
                        dw: t.dw.clone(),
                    })
                })
                .collect();
            let ctx = DiagnosisContext {
                faulty: verdict,
                model_spec: spec.clone(),
                training_inputs: data.x.clone(),
                labels: data.y.clone(),
                params,
                learning_rate: spec.learning_rate,
                batch_output: Some(pass.output().clone()),
                batch_labels: Some(halt.batch_y.clone()),
            };
            let mapping = map_symptom(&ctx, cfg)?;
            DiagnosisReport {
                verdict: verdict.render(),
                symptom: verdict.code,
                stage: verdict.stage,
                layer: verdict.layer_index,
                quantity: verdict.quantity,
                epoch: verdict.epoch,
                batch: verdict.batch,
                description: verdict.describe(),
                message_code: Some(mapping.message.code.code().to_string()),
                message_target_layer: mapping.message.target_layer,
                message_text: Some(mapping.message.text()),
                checkers: opts.explain.then_some(mapping.checkers),
                notes: mapping.notes,
                steps: halt.step.global,
                detector_evaluations: monitor.evaluations(),
                final_loss: halt.metrics.map(|m| Num(m.loss)),
                train_accuracy,
                layers: pass.traces.iter().map(LayerSummary::from_trace).collect(),
                config: cfg.clone(),
                duration_seconds: 0.0,
            }
        }
    };
    Ok(DiagnosisReport {
        duration_seconds: start.elapsed().as_secs_f64(),
        ..report
    })
}
