//! Instrumented mini-batch training loop.
//!
//! Each batch runs forward, loss/accuracy, backward, then the optimizer
//! update. Hooks observe the step after each of the first three phases and
//! may halt training; a halt in the backward hook happens before the update
//! is applied.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::loss::{compute_accuracy, compute_loss};
use crate::nn::model::{ForwardPass, Mode, Model};
use crate::nn::optimizer::Optimizer;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Position of a batch in the run. All counters are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub epoch: usize,
    pub batch: usize,
    /// Batches executed so far, including this one.
    pub global: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    /// `None` for regression.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Flow<V> {
    Continue,
    Stop(V),
}

/// Observer callbacks driven by [`train`].
pub trait TrainingHooks {
    type Verdict;

    fn on_forward(&mut self, step: Step, pass: &ForwardPass, y: &Tensor) -> Flow<Self::Verdict>;

    fn on_metrics(&mut self, step: Step, metrics: &StepMetrics) -> Flow<Self::Verdict>;

    /// `pass` carries `dw` and `v3` for every layer.
    fn on_backward(&mut self, step: Step, pass: &ForwardPass) -> Flow<Self::Verdict>;
}

/// Hooks that never stop training.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoHooks;

impl TrainingHooks for NoHooks {
    type Verdict = ();

    fn on_forward(&mut self, _: Step, _: &ForwardPass, _: &Tensor) -> Flow<()> {
        Flow::Continue
    }

    fn on_metrics(&mut self, _: Step, _: &StepMetrics) -> Flow<()> {
        Flow::Continue
    }

    fn on_backward(&mut self, _: Step, _: &ForwardPass) -> Flow<()> {
        Flow::Continue
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Forward,
    Metrics,
    Backward,
}

/// The batch a hook halted on, as it was when the hook fired.
#[derive(Debug, Clone)]
pub struct Halt<V> {
    pub verdict: V,
    pub step: Step,
    pub phase: Phase,
    pub pass: ForwardPass,
    pub batch_y: Tensor,
    pub metrics: Option<StepMetrics>,
}

#[derive(Debug, Clone)]
pub enum TrainOutcome<V> {
    Completed {
        steps: usize,
        last_metrics: Option<StepMetrics>,
    },
    Halted(Box<Halt<V>>),
}

impl<V> TrainOutcome<V> {
    pub fn steps(&self) -> usize {
        match self {
            TrainOutcome::Completed { steps, .. } => *steps,
            TrainOutcome::Halted(h) => h.step.global,
        }
    }
}

/// Random streams used by one run, derived from the model seed.
#[derive(Debug, Clone)]
pub struct RunRngs {
    pub init: Rng,
    pub dropout: Rng,
    pub shuffle: Rng,
}

impl RunRngs {
    pub fn from_seed(seed: u64) -> Self {
        let mut root = Rng::seeded(seed);
        Self {
            init: root.split(),
            dropout: root.split(),
            shuffle: root.split(),
        }
    }
}

/// Trains `model` on `data` using the epochs, batch size, loss and optimizer
/// of its spec.
pub fn train<H: TrainingHooks>(
    model: &mut Model,
    data: &Dataset,
    rngs: &mut RunRngs,
    hooks: &mut H,
) -> Result<TrainOutcome<H::Verdict>> {
    let spec = model.spec().clone();
    if data.x.cols() != spec.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "train inputs",
            lhs: data.x.shape(),
            rhs: crate::tensor::Shape {
                rows: data.x.rows(),
                cols: spec.input_dim(),
            },
        });
    }
    if data.y.cols() != spec.output_dim() {
        return Err(Error::ShapeMismatch {
            op: "train labels",
            lhs: data.y.shape(),
            rhs: crate::tensor::Shape {
                rows: data.y.rows(),
                cols: spec.output_dim(),
            },
        });
    }

    let mut optimizer = Optimizer::new(spec.optimizer, spec.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut global = 0;
    let mut last_metrics = None;

    for epoch in 1..=spec.epochs {
        if spec.shuffle {
            rngs.shuffle.shuffle(&mut order);
        }
        for (b, chunk) in order.chunks(spec.batch_size).enumerate() {
            global += 1;
            let step = Step {
                epoch,
                batch: b + 1,
                global,
            };
            let x = data.x.select_rows(chunk);
            let y = data.y.select_rows(chunk);

            let mut pass = model.forward(&x, Mode::Train, &mut rngs.dropout)?;
            if let Flow::Stop(verdict) = hooks.on_forward(step, &pass, &y) {
                return Ok(halted(verdict, step, Phase::Forward, pass, y, None));
            }

            let metrics = StepMetrics {
                epoch,
                batch: b + 1,
                loss: compute_loss(pass.output(), &y, spec.loss, spec.clip_probabilities)?,
                accuracy: compute_accuracy(pass.output(), &y, spec.task),
            };
            last_metrics = Some(metrics);
            if let Flow::Stop(verdict) = hooks.on_metrics(step, &metrics) {
                return Ok(halted(verdict, step, Phase::Metrics, pass, y, Some(metrics)));
            }

            model.backward(&mut pass, &y)?;
            if let Flow::Stop(verdict) = hooks.on_backward(step, &pass) {
                return Ok(halted(verdict, step, Phase::Backward, pass, y, Some(metrics)));
            }
            optimizer.step(model, &pass);
        }
    }
    Ok(TrainOutcome::Completed {
        steps: global,
        last_metrics,
    })
}

fn halted<V>(
    verdict: V,
    step: Step,
    phase: Phase,
    pass: ForwardPass,
    batch_y: Tensor,
    metrics: Option<StepMetrics>,
) -> TrainOutcome<V> {
    TrainOutcome::Halted(Box::new(Halt {
        verdict,
        step,
        phase,
        pass,
        batch_y,
        metrics,
    }))
}
