//! Root-cause checkers and the symptom-to-fix rule table.
//!
//! For each symptom the mapper walks an ordered list of candidate root
//! causes; the first candidate whose check fires decides the message. When
//! none fires, the symptom's fallback (an architecture-level change) is
//! returned. Candidates are ordered most-frequent cause first.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codes::{Message, MessageCode, Quantity, Stage, Symptom, SymptomCode};
use crate::detectors::{out_of_range, MonitorConfig};
use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, Loss, ModelSpec};
use crate::tensor::Tensor;

/// Parameters of one dense layer at the moment a symptom fired.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSnapshot {
    pub layer_index: usize,
    /// Kernel rows followed by the bias row.
    pub w: Tensor,
    pub dw: Option<Tensor>,
}

impl ParamSnapshot {
    /// The weight matrix without its bias row.
    pub fn kernel(&self) -> Tensor {
        let rows = self.w.rows().saturating_sub(1).max(1);
        let cols = self.w.cols();
        Tensor::new(rows, cols, self.w.data()[..rows * cols].to_vec()).expect("kernel rows")
    }
}

/// Everything the mapper may consult, captured when the symptom fired.
#[derive(Debug, Clone)]
pub struct DiagnosisContext {
    pub faulty: SymptomCode,
    pub model_spec: ModelSpec,
    pub training_inputs: Tensor,
    pub labels: Tensor,
    pub params: Vec<ParamSnapshot>,
    pub learning_rate: f64,
    /// Network output and labels of the batch the symptom fired on.
    pub batch_output: Option<Tensor>,
    pub batch_labels: Option<Tensor>,
}

// ---- checkers ---------------------------------------------------------------

/// True when the training inputs leave the configured data range, i.e. the
/// data is not normalized.
pub fn improper_data(x: &Tensor, cfg: &MonitorConfig) -> bool {
    let (lo, hi) = (x.min(), x.max());
    !(lo >= cfg.data_range_low && hi <= cfg.data_range_high)
}

/// True when any kernel's variance is at or below the minimum, at or above
/// the maximum, or not finite.
pub fn weight_initialization(kernels: &[Tensor], cfg: &MonitorConfig) -> bool {
    first_bad_kernel(kernels, cfg).is_some()
}

fn first_bad_kernel(kernels: &[Tensor], cfg: &MonitorConfig) -> Option<usize> {
    kernels.iter().position(|k| {
        let v = k.variance();
        !v.is_finite() || v <= cfg.weight_var_min || v >= cfg.weight_var_max
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LearnRate {
    Low,
    Ok,
    High,
}

impl fmt::Display for LearnRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnRate::Low => "LOW",
            LearnRate::Ok => "OK",
            LearnRate::High => "HIGH",
        })
    }
}

/// Mean over layers of `lr * |dw| / |w|`, the relative size of one SGD step.
/// Layers with a zero-norm weight are skipped; `None` when all are.
pub fn update_ratio(weights: &[Tensor], dws: &[Tensor], learning_rate: f64) -> Option<f64> {
    let ratios: Vec<f64> = weights
        .iter()
        .zip(dws)
        .filter_map(|(w, dw)| {
            let wn = w.frobenius_norm();
            (wn != 0.0).then(|| learning_rate * dw.frobenius_norm() / wn)
        })
        .collect();
    if ratios.is_empty() {
        return None;
    }
    Some(ratios.iter().fold(0.0, |a, &r| a + r) / ratios.len() as f64)
}

/// Places a step ratio relative to the band
/// `[learn_threshold / factor, learn_threshold * factor]`. A nonfinite ratio
/// means the step blew up and reads as HIGH.
pub fn classify_ratio(ratio: f64, cfg: &MonitorConfig) -> LearnRate {
    if !ratio.is_finite() {
        return LearnRate::High;
    }
    if ratio < cfg.learn_threshold / cfg.learn_band_factor {
        LearnRate::Low
    } else if ratio > cfg.learn_threshold * cfg.learn_band_factor {
        LearnRate::High
    } else {
        LearnRate::Ok
    }
}

pub fn tune_learn(
    weights: &[Tensor],
    dws: &[Tensor],
    learning_rate: f64,
    cfg: &MonitorConfig,
) -> LearnRate {
    match update_ratio(weights, dws, learning_rate) {
        Some(r) => classify_ratio(r, cfg),
        None => LearnRate::Ok,
    }
}

/// What the label tensor looks like.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelShape {
    Binary,
    MultiClass,
    Continuous,
}

pub fn label_shape(y: &Tensor) -> LabelShape {
    let is01 = |v: f64| v == 0.0 || v == 1.0;
    if y.cols() == 1 && y.data().iter().all(|&v| is01(v)) {
        return LabelShape::Binary;
    }
    let one_hot = (0..y.rows()).all(|r| {
        let row = y.row(r);
        row.iter().all(|&v| is01(v)) && row.iter().filter(|&&v| v == 1.0).count() == 1
    });
    if y.cols() > 1 && one_hot {
        LabelShape::MultiClass
    } else {
        LabelShape::Continuous
    }
}

/// The output activation and loss a label shape calls for.
pub fn expected_pairing(shape: LabelShape) -> (Activation, Loss) {
    match shape {
        LabelShape::Binary => (Activation::Sigmoid, Loss::BinaryCrossentropy),
        LabelShape::MultiClass => (Activation::Softmax, Loss::CategoricalCrossentropy),
        LabelShape::Continuous => (Activation::Linear, Loss::Mse),
    }
}

// ---- rule table -------------------------------------------------------------

/// A root-cause check and the message it yields when it fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    /// Inputs outside the data range → MSG0.
    ImproperData,
    /// A kernel with degenerate variance → MSG4 at that layer.
    BadInit,
    /// Step ratio outside the band → MSG3.
    LearnRate(LearnFilter),
    /// Batch output outside the label range → MSG2 at the last layer.
    OutputOutOfRange,
    /// More dense layers than configured → MSG5.
    TooDeep,
    /// A sigmoid/tanh before the output activation → MSG2 there.
    HiddenLogistic,
    /// The symptom sits on the last dense layer → MSG2 at the final
    /// activation.
    LastDenseLayer,
    /// Output activation does not suit the labels → MSG2 at the last layer.
    OutputActivationMismatch,
    /// Loss does not suit the labels → MSG1.
    LossMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnFilter {
    Low,
    High,
    Either,
}

/// Message returned when no candidate fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    /// MSG2 at the faulty layer's activation.
    ActivationAtFault,
    /// MSG2 at the output activation.
    OutputActivation,
    /// MSG1.
    LossFunction,
    /// MSG4 at the faulty layer.
    Initialization,
    /// MSG6.
    Optimizer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub candidates: Vec<Candidate>,
    pub fallback: Fallback,
}

/// The ordered candidates for a symptom. `None` for CM.
pub fn rule_for(symptom: &SymptomCode) -> Option<Rule> {
    use Candidate::*;
    let rule = |candidates: Vec<Candidate>, fallback| Some(Rule { candidates, fallback });
    match symptom.code {
        Symptom::DNS | Symptom::SAS => rule(
            vec![ImproperData, BadInit, LearnRate(LearnFilter::Either)],
            Fallback::ActivationAtFault,
        ),
        Symptom::NS if symptom.stage == Some(Stage::BW) => rule(
            vec![
                LastDenseLayer,
                LearnRate(LearnFilter::High),
                BadInit,
                ImproperData,
            ],
            Fallback::LossFunction,
        ),
        Symptom::NS => rule(
            vec![LearnRate(LearnFilter::High), BadInit, ImproperData],
            Fallback::ActivationAtFault,
        ),
        Symptom::UCS => rule(
            vec![LearnRate(LearnFilter::Low), OutputOutOfRange, BadInit],
            Fallback::Optimizer,
        ),
        Symptom::LNDS | Symptom::ANIS => rule(
            vec![
                ImproperData,
                LearnRate(LearnFilter::Either),
                TooDeep,
                OutputActivationMismatch,
                LossMismatch,
            ],
            Fallback::OutputActivation,
        ),
        Symptom::VGS => rule(
            vec![TooDeep, LearnRate(LearnFilter::Low), HiddenLogistic],
            Fallback::Initialization,
        ),
        Symptom::ILS => rule(vec![], Fallback::LossFunction),
        Symptom::IAS => rule(vec![OutputActivationMismatch], Fallback::LossFunction),
        Symptom::ORS => rule(vec![], Fallback::OutputActivation),
        Symptom::CM => None,
    }
}

/// One checker evaluation, kept for the explain trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckerRecord {
    pub check: String,
    pub detail: String,
    pub fired: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mapping {
    pub message: MessageCode,
    pub checkers: Vec<CheckerRecord>,
    pub notes: Vec<String>,
}

/// Maps a detected symptom to one actionable change.
pub fn map_symptom(ctx: &DiagnosisContext, cfg: &MonitorConfig) -> Result<Mapping> {
    let rule = rule_for(&ctx.faulty).ok_or(Error::MapCorrectModel)?;
    walk_rule(&rule, ctx, cfg)
}

/// Evaluates `rule` against `ctx`; exposed so the candidate order can be
/// varied.
pub fn walk_rule(rule: &Rule, ctx: &DiagnosisContext, cfg: &MonitorConfig) -> Result<Mapping> {
    if ctx.faulty.code == Symptom::CM {
        return Err(Error::MapCorrectModel);
    }
    let view = View::new(ctx, cfg);
    let mut checkers = Vec::new();
    for candidate in &rule.candidates {
        let (record, message) = view.check(*candidate);
        checkers.push(record);
        if let Some(message) = message {
            return Ok(Mapping {
                message,
                checkers,
                notes: Vec::new(),
            });
        }
    }
    let mut notes = Vec::new();
    if ctx.faulty.code == Symptom::NS && ctx.faulty.stage == Some(Stage::BW) {
        notes.push(
            "no data, initialization or learning-rate cause found; an oversized batch can also produce this"
                .to_string(),
        );
    }
    Ok(Mapping {
        message: view.fallback(rule.fallback),
        checkers,
        notes,
    })
}

/// Precomputed facts about a context, shared by all candidates.
struct View<'a> {
    ctx: &'a DiagnosisContext,
    cfg: &'a MonitorConfig,
    dense: Vec<usize>,
}

impl<'a> View<'a> {
    fn new(ctx: &'a DiagnosisContext, cfg: &'a MonitorConfig) -> Self {
        Self {
            ctx,
            cfg,
            dense: ctx.model_spec.dense_indices(),
        }
    }

    fn spec(&self) -> &ModelSpec {
        &self.ctx.model_spec
    }

    fn last_layer(&self) -> usize {
        self.spec().layers.len()
    }

    fn last_dense(&self) -> usize {
        *self.dense.last().expect("validated spec has a dense layer")
    }

    /// Final activation layer, or the last layer when the model ends in a
    /// dense layer.
    fn output_activation_layer(&self) -> usize {
        self.spec()
            .final_activation()
            .map(|(i, _)| i)
            .unwrap_or_else(|| self.last_layer())
    }

    fn faulty_layer(&self) -> Option<usize> {
        self.ctx.faulty.layer_index
    }

    /// The activation that acts on the faulty layer: the layer itself if it
    /// is an activation, else the next activation before another dense
    /// layer, else the faulty layer.
    fn activation_at_fault(&self) -> usize {
        let Some(fault) = self.faulty_layer() else {
            return self.output_activation_layer();
        };
        let layers = &self.spec().layers;
        for (i, layer) in layers.iter().enumerate().skip(fault - 1) {
            match layer {
                LayerSpec::Activation { .. } => return i + 1,
                LayerSpec::Dense { .. } if i + 1 != fault => break,
                _ => {}
            }
        }
        fault
    }

    fn layer_or_last_dense(&self) -> usize {
        self.faulty_layer().unwrap_or_else(|| self.last_dense())
    }

    fn kernels(&self) -> Vec<Tensor> {
        self.ctx.params.iter().map(ParamSnapshot::kernel).collect()
    }

    fn learn_rate(&self) -> (LearnRate, Option<f64>) {
        let (ws, dws): (Vec<Tensor>, Vec<Tensor>) = self
            .ctx
            .params
            .iter()
            .filter_map(|p| p.dw.as_ref().map(|dw| (p.w.clone(), dw.clone())))
            .unzip();
        let ratio = update_ratio(&ws, &dws, self.ctx.learning_rate);
        let class = ratio.map(|r| classify_ratio(r, self.cfg)).unwrap_or(LearnRate::Ok);
        (class, ratio)
    }

    fn pairing(&self) -> (LabelShape, Activation, Loss) {
        let shape = label_shape(&self.ctx.labels);
        let (act, loss) = expected_pairing(shape);
        (shape, act, loss)
    }

    fn check(&self, candidate: Candidate) -> (CheckerRecord, Option<MessageCode>) {
        let record = |check: &str, detail: String, fired: bool| CheckerRecord {
            check: check.to_string(),
            detail,
            fired,
        };
        match candidate {
            Candidate::ImproperData => {
                let x = &self.ctx.training_inputs;
                let fired = improper_data(x, self.cfg);
                (
                    record(
                        "C1 ImproperData",
                        format!(
                            "inputs span [{}, {}], allowed [{}, {}]",
                            x.min(),
                            x.max(),
                            self.cfg.data_range_low,
                            self.cfg.data_range_high
                        ),
                        fired,
                    ),
                    fired.then(|| MessageCode::new(Message::MSG0)),
                )
            }
            Candidate::BadInit => {
                let kernels = self.kernels();
                let bad = first_bad_kernel(&kernels, self.cfg);
                let variances: Vec<String> = self
                    .ctx
                    .params
                    .iter()
                    .zip(&kernels)
                    .map(|(p, k)| format!("layer {}: {:e}", p.layer_index, k.variance()))
                    .collect();
                let layer = bad.map(|i| self.ctx.params[i].layer_index);
                (
                    record(
                        "C2 WeightInitialization",
                        format!("kernel variances [{}]", variances.join(", ")),
                        bad.is_some(),
                    ),
                    layer.map(|l| MessageCode::at(Message::MSG4, l)),
                )
            }
            Candidate::LearnRate(filter) => {
                let (class, ratio) = self.learn_rate();
                let fired = match filter {
                    LearnFilter::Low => class == LearnRate::Low,
                    LearnFilter::High => class == LearnRate::High,
                    LearnFilter::Either => class != LearnRate::Ok,
                };
                let detail = match ratio {
                    Some(r) => format!("step ratio {r:e} -> {class}"),
                    None => "no gradients available -> OK".to_string(),
                };
                (
                    record("C3 TuneLearn", detail, fired),
                    fired.then(|| MessageCode::new(Message::MSG3)),
                )
            }
            Candidate::OutputOutOfRange => {
                let fired = match (&self.ctx.batch_output, &self.ctx.batch_labels) {
                    (Some(out), Some(y)) => out_of_range(out, y),
                    _ => false,
                };
                (
                    record(
                        "OutputRange",
                        "output range against label range".to_string(),
                        fired,
                    ),
                    fired.then(|| MessageCode::at(Message::MSG2, self.last_layer())),
                )
            }
            Candidate::TooDeep => {
                let n = self.dense.len();
                let fired = n > self.cfg.max_param_layers;
                (
                    record(
                        "Depth",
                        format!("{n} dense layers, limit {}", self.cfg.max_param_layers),
                        fired,
                    ),
                    fired.then(|| MessageCode::at(Message::MSG5, self.layer_or_last_dense())),
                )
            }
            Candidate::HiddenLogistic => {
                let output = self.spec().final_activation().map(|(i, _)| i);
                let hidden = self
                    .spec()
                    .layers
                    .iter()
                    .enumerate()
                    .find(|(i, l)| {
                        Some(i + 1) != output
                            && matches!(l, LayerSpec::Activation { activation } if activation.is_logistic())
                    })
                    .map(|(i, _)| i + 1);
                (
                    record(
                        "HiddenLogistic",
                        match hidden {
                            Some(l) => format!("sigmoid/tanh at hidden layer {l}"),
                            None => "no hidden sigmoid/tanh".to_string(),
                        },
                        hidden.is_some(),
                    ),
                    hidden.map(|l| MessageCode::at(Message::MSG2, l)),
                )
            }
            Candidate::LastDenseLayer => {
                let fired = self.faulty_layer() == Some(self.last_dense());
                (
                    record(
                        "LastDenseLayer",
                        format!(
                            "fault at layer {:?}, last dense layer {}",
                            self.faulty_layer(),
                            self.last_dense()
                        ),
                        fired,
                    ),
                    fired.then(|| MessageCode::at(Message::MSG2, self.output_activation_layer())),
                )
            }
            Candidate::OutputActivationMismatch => {
                let (shape, act, _) = self.pairing();
                let actual = self.spec().output_activation();
                let fired = actual != act;
                (
                    record(
                        "OutputActivation",
                        format!("{shape:?} labels expect {act}, model uses {actual}"),
                        fired,
                    ),
                    fired.then(|| MessageCode::at(Message::MSG2, self.output_activation_layer())),
                )
            }
            Candidate::LossMismatch => {
                let (shape, _, loss) = self.pairing();
                let actual = self.spec().loss;
                let fired = actual != loss;
                (
                    record(
                        "LossFunction",
                        format!(
                            "{shape:?} labels expect {}, model uses {}",
                            loss.name(),
                            actual.name()
                        ),
                        fired,
                    ),
                    fired.then(|| MessageCode::new(Message::MSG1)),
                )
            }
        }
    }

    fn fallback(&self, fallback: Fallback) -> MessageCode {
        match fallback {
            Fallback::ActivationAtFault => MessageCode::at(Message::MSG2, self.activation_at_fault()),
            Fallback::OutputActivation => {
                MessageCode::at(Message::MSG2, self.output_activation_layer())
            }
            Fallback::LossFunction => MessageCode::new(Message::MSG1),
            Fallback::Initialization => MessageCode::at(Message::MSG4, self.layer_or_last_dense()),
            Fallback::Optimizer => MessageCode::new(Message::MSG6),
        }
    }
}

/// Symptoms whose location is a tensor of a specific layer.
pub fn is_layer_quantity(q: Quantity) -> bool {
    matches!(
        q,
        Quantity::V1 | Quantity::V2 | Quantity::V3 | Quantity::W | Quantity::DW
    )
}
