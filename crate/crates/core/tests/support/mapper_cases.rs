//! Synthetic diagnosis contexts spanning every rule-table branch, and the
//! totality check run over them. Shared by the core tests and the acceptance
//! target.

use std::collections::BTreeSet;

use nndiag_core::codes::{Message, Quantity, Stage, Symptom, SymptomCode};
use nndiag_core::detectors::MonitorConfig;
use nndiag_core::diagnosis::{map_symptom, rule_for, walk_rule, DiagnosisContext, ParamSnapshot, Rule};
use nndiag_core::nn::{Activation, Init, LayerSpec, Loss, ModelSpec, OptimizerKind, Task};
use nndiag_core::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct Knobs {
    pub improper_data: bool,
    pub bad_init: bool,
    /// 0 = low, 1 = ok, 2 = high step ratio.
    pub lr_class: usize,
    pub deep: bool,
    pub hidden: Activation,
    pub output_mismatch: bool,
    pub loss_mismatch: bool,
    pub output_out_of_range: bool,
}

fn spec_for(k: &Knobs) -> ModelSpec {
    let n_dense = if k.deep { 10 } else { 2 };
    let mut layers = Vec::new();
    for d in 0..n_dense {
        let last = d + 1 == n_dense;
        layers.push(LayerSpec::Dense {
            units: if last { 1 } else { 4 },
            input_dim: (d == 0).then_some(2),
            init: Init::GlorotUniform,
            bias_init: 0.0,
        });
        let act = if !last {
            k.hidden
        } else if k.output_mismatch {
            Activation::Softmax
        } else {
            Activation::Sigmoid
        };
        layers.push(LayerSpec::activation(act));
    }
    ModelSpec {
        layers,
        loss: if k.loss_mismatch {
            Loss::Mse
        } else {
            Loss::BinaryCrossentropy
        },
        optimizer: OptimizerKind::Adam,
        learning_rate: [1e-6, 1e-3, 1.0][k.lr_class],
        batch_size: 4,
        epochs: 1,
        seed: 0,
        task: Task::Classification,
        clip_probabilities: false,
        shuffle: false,
    }
}

fn params_for(spec: &ModelSpec, bad_init: bool) -> Vec<ParamSnapshot> {
    let mut out = Vec::new();
    let mut fan_in = spec.input_dim();
    for (i, layer) in spec.layers.iter().enumerate() {
        if let LayerSpec::Dense { units, .. } = layer {
            let n = (fan_in + 1) * units;
            let w: Vec<f64> = (0..n)
                .map(|j| if bad_init { 0.3 } else if j % 2 == 0 { 0.5 } else { -0.5 })
                .collect();
            let w = Tensor::new(fan_in + 1, *units, w).unwrap();
            // |dw| == |w|, so the step ratio equals the learning rate
            let dw = w.clone();
            out.push(ParamSnapshot {
                layer_index: i + 1,
                w,
                dw: Some(dw),
            });
            fan_in = *units;
        }
    }
    out
}

pub fn context(faulty: SymptomCode, k: &Knobs) -> DiagnosisContext {
    let spec = spec_for(k);
    let x = if k.improper_data {
        Tensor::from_rows(&[[0.0, 255.0], [17.0, 3.0], [1.0, 0.0], [9.0, 4.0]])
    } else {
        Tensor::from_rows(&[[0.0, 0.5], [-0.5, 1.0], [1.0, -1.0], [0.25, 0.0]])
    };
    let y = Tensor::from_rows(&[[0.0], [1.0], [1.0], [0.0]]);
    let out = if k.output_out_of_range {
        Tensor::from_rows(&[[-0.4], [0.8], [0.6], [0.1]])
    } else {
        Tensor::from_rows(&[[0.2], [0.8], [0.6], [0.1]])
    };
    DiagnosisContext {
        faulty,
        params: params_for(&spec, k.bad_init),
        learning_rate: spec.learning_rate,
        model_spec: spec,
        training_inputs: x,
        labels: y.clone(),
        batch_output: Some(out),
        batch_labels: Some(y),
    }
}

pub fn all_knobs() -> Vec<Knobs> {
    let mut out = Vec::new();
    for bits in 0..128u32 {
        for lr_class in 0..3 {
            let b = |i: u32| bits & (1 << i) != 0;
            out.push(Knobs {
                improper_data: b(0),
                bad_init: b(1),
                lr_class,
                deep: b(2),
                hidden: if b(3) { Activation::Tanh } else { Activation::Relu },
                output_mismatch: b(4),
                loss_mismatch: b(5),
                output_out_of_range: b(6),
            });
        }
    }
    out
}

/// Every non-CM symptom at the coordinates the monitor can emit, for a model
/// with `layers` layers whose dense layers are `dense`.
pub fn faults(layers: usize, dense: &[usize]) -> Vec<SymptomCode> {
    let first = dense[0];
    let last = *dense.last().unwrap();
    let mut out = Vec::new();
    for code in Symptom::ALL {
        match code {
            Symptom::CM => {}
            Symptom::LNDS | Symptom::ILS => out.push(SymptomCode::global(code, Quantity::LOSS, 1, 1)),
            Symptom::ANIS | Symptom::IAS => out.push(SymptomCode::global(code, Quantity::ACC, 1, 1)),
            Symptom::VGS => {
                for l in [first, last] {
                    out.push(SymptomCode::layer(code, Stage::BW, l, Quantity::DW, 1, 1));
                }
            }
            Symptom::ORS => out.push(SymptomCode::layer(code, Stage::FW, layers, Quantity::V2, 1, 1)),
            Symptom::SAS | Symptom::DNS => {
                out.push(SymptomCode::layer(code, Stage::FW, first + 1, Quantity::V1, 1, 1))
            }
            Symptom::NS | Symptom::UCS => {
                for l in [first, last, first + 1] {
                    out.push(SymptomCode::layer(code, Stage::FW, l, Quantity::V2, 1, 1));
                }
                for l in [first, last] {
                    for q in [Quantity::DW, Quantity::V3, Quantity::W] {
                        out.push(SymptomCode::layer(code, Stage::BW, l, q, 1, 1));
                    }
                }
            }
        }
    }
    out
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

#[derive(Debug, Default)]
pub struct Totality {
    pub cases: usize,
    pub permuted_walks: usize,
    /// (symptom, stage, branch) where branch is a candidate index or
    /// `usize::MAX` for the fallback.
    pub branches: BTreeSet<(Symptom, Option<Stage>, usize)>,
}

fn check_one(
    ctx: &DiagnosisContext,
    cfg: &MonitorConfig,
    rule: &Rule,
) -> Result<(Message, usize), String> {
    let mapping = map_symptom(ctx, cfg).map_err(|e| format!("{}: {e}", ctx.faulty.render()))?;
    let msg = mapping.message;
    let layer_specific = matches!(msg.code, Message::MSG2 | Message::MSG4 | Message::MSG5);
    if layer_specific != msg.target_layer.is_some() {
        return Err(format!("{}: {} target presence", ctx.faulty.render(), msg.text()));
    }
    if let Some(t) = msg.target_layer {
        if t == 0 || t > ctx.model_spec.layers.len() {
            return Err(format!("{}: target {t} out of range", ctx.faulty.render()));
        }
    }
    let fired = mapping.checkers.last().is_some_and(|c| c.fired);
    let branch = if fired {
        mapping.checkers.len() - 1
    } else {
        if mapping.checkers.len() != rule.candidates.len() {
            return Err(format!("{}: fallback before all candidates", ctx.faulty.render()));
        }
        usize::MAX
    };
    Ok((msg.code, branch))
}

/// Maps every (symptom, context) pair, checks exactly one message results,
/// that reordering candidates never loses the message, and records which
/// rule branches were reached.
pub fn check_totality() -> Result<Totality, String> {
    let cfg = MonitorConfig::default();
    let mut report = Totality::default();
    for knobs in all_knobs() {
        let spec = spec_for(&knobs);
        for fault in faults(spec.layers.len(), &spec.dense_indices()) {
            let ctx = context(fault, &knobs);
            let rule = rule_for(&fault).ok_or("non-CM symptom without rule")?;
            let (_, branch) = check_one(&ctx, &cfg, &rule)?;
            report.cases += 1;
            report.branches.insert((fault.code, branch_stage(&fault), branch));
        }
    }
    // reordering: a smaller sweep, since candidate lists have up to 5! orders
    for knobs in all_knobs().into_iter().step_by(7) {
        let spec = spec_for(&knobs);
        for fault in faults(spec.layers.len(), &spec.dense_indices()) {
            let ctx = context(fault, &knobs);
            let rule = rule_for(&fault).unwrap();
            let idx: Vec<usize> = (0..rule.candidates.len()).collect();
            for perm in permutations(&idx) {
                let permuted = Rule {
                    candidates: perm.iter().map(|&i| rule.candidates[i]).collect(),
                    fallback: rule.fallback,
                };
                walk_rule(&permuted, &ctx, &cfg)
                    .map_err(|e| format!("{} permuted: {e}", fault.render()))?;
                report.permuted_walks += 1;
            }
        }
    }
    Ok(report)
}

/// NS is the only symptom whose rule depends on the stage.
fn branch_stage(fault: &SymptomCode) -> Option<Stage> {
    (fault.code == Symptom::NS && fault.stage == Some(Stage::BW)).then_some(Stage::BW)
}

/// Branches every rule must reach: each candidate plus the fallback.
pub fn expected_branches() -> BTreeSet<(Symptom, Option<Stage>, usize)> {
    let mut out = BTreeSet::new();
    for code in Symptom::ALL {
        if code == Symptom::CM {
            continue;
        }
        let stages: &[Option<Stage>] = if code == Symptom::NS {
            &[Some(Stage::FW), Some(Stage::BW)]
        } else {
            &[Some(Stage::FW)]
        };
        for &stage in stages {
            let probe = SymptomCode {
                code,
                stage,
                layer_index: Some(1),
                quantity: Some(Quantity::DW),
                epoch: 1,
                batch: 1,
            };
            let rule = rule_for(&probe).unwrap();
            let key_stage = stage.filter(|s| *s == Stage::BW);
            for i in 0..rule.candidates.len() {
                out.insert((code, key_stage, i));
            }
            out.insert((code, key_stage, usize::MAX));
        }
    }
    out
}
