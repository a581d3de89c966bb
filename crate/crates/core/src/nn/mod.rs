//! A small deterministic feed-forward trainer with instrumentation hooks.

pub mod activation;
pub mod loss;
pub mod model;
pub mod optimizer;
pub mod spec;
pub mod train;

pub use loss::{compute_accuracy, compute_loss, loss_gradient};
pub use model::{ForwardPass, Layer, LayerKind, LayerTrace, Mode, Model};
pub use optimizer::Optimizer;
pub use spec::{Activation, Init, LayerSpec, Loss, ModelSpec, OptimizerKind, Task};
pub use train::{
    train, Flow, Halt, NoHooks, Phase, RunRngs, Step, StepMetrics, TrainOutcome, TrainingHooks,
};
