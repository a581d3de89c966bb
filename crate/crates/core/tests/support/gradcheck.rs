//! Finite-difference gradient check over a fixed family of small models.
//! Shared by the core tests and the acceptance target.

use nndiag_core::nn::{
    compute_loss, Activation, Init, LayerSpec, Loss, Mode, Model, ModelSpec, OptimizerKind, Task,
};
use nndiag_core::{Rng, Tensor};

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor so gradients at round-off level compare absolutely.
pub const FLOOR: f64 = 1e-6;

pub struct Case {
    pub spec: ModelSpec,
    pub x: Tensor,
    pub y: Tensor,
}

fn random_tensor(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

fn labels(rng: &mut Rng, rows: usize, cols: usize, loss: Loss) -> Tensor {
    let mut y = Tensor::zeros(rows, cols);
    for r in 0..rows {
        match loss {
            Loss::CategoricalCrossentropy => y.set(r, rng.index(cols), 1.0),
            Loss::BinaryCrossentropy => {
                for c in 0..cols {
                    y.set(r, c, rng.index(2) as f64);
                }
            }
            Loss::Mse => {
                for c in 0..cols {
                    y.set(r, c, rng.uniform(-1.0, 1.0));
                }
            }
        }
    }
    y
}

/// Dense layer with a small bias so no pre-activation sits exactly on the
/// ReLU kink (a dead row plus zero bias gives exactly 0).
fn dense(input_dim: Option<usize>, units: usize) -> LayerSpec {
    LayerSpec::Dense {
        units,
        input_dim,
        init: Init::GlorotUniform,
        bias_init: 0.05,
    }
}

pub fn cases() -> Vec<Case> {
    let hidden = [
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Linear,
    ];
    // (output activation, loss, output width)
    let heads = [
        (Activation::Sigmoid, Loss::BinaryCrossentropy, 1),
        (Activation::Sigmoid, Loss::BinaryCrossentropy, 3),
        (Activation::Softmax, Loss::CategoricalCrossentropy, 3),
        (Activation::Linear, Loss::Mse, 2),
        (Activation::Tanh, Loss::Mse, 1),
        (Activation::Sigmoid, Loss::Mse, 2),
        (Activation::Softmax, Loss::Mse, 4),
        (Activation::Relu, Loss::Mse, 2),
    ];
    let mut rng = Rng::seeded(2024);
    let mut out = Vec::new();
    for (i, &act) in hidden.iter().enumerate() {
        for (j, &(head, loss, width)) in heads.iter().enumerate() {
            let n = i * heads.len() + j;
            let depth = 1 + n % 3;
            let input = 2 + n % 4;
            let mut layers = Vec::new();
            let mut fan_in = input;
            for d in 0..depth - 1 {
                let units = 2 + (n + d) % 7;
                layers.push(dense((d == 0).then_some(fan_in), units));
                layers.push(LayerSpec::activation(act));
                fan_in = units;
            }
            layers.push(dense((depth == 1).then_some(fan_in), width));
            layers.push(LayerSpec::activation(head));
            let rows = 3 + n % 4;
            let spec = ModelSpec {
                layers,
                loss,
                optimizer: OptimizerKind::Sgd,
                learning_rate: 0.1,
                batch_size: rows,
                epochs: 1,
                seed: n as u64,
                task: if loss == Loss::Mse {
                    Task::Regression
                } else {
                    Task::Classification
                },
                clip_probabilities: false,
                shuffle: false,
            };
            let x = random_tensor(&mut rng, rows, input);
            let y = labels(&mut rng, rows, width, loss);
            out.push(Case { spec, x, y });
        }
    }
    out
}

pub fn loss_of(model: &Model, case: &Case) -> f64 {
    let pred = model.predict(&case.x).unwrap();
    compute_loss(&pred, &case.y, case.spec.loss, false).unwrap()
}

/// Central difference of the loss with respect to parameter `k` of layer `i`.
pub fn numeric_gradient(model: &mut Model, case: &Case, i: usize, k: usize) -> f64 {
    let orig = model.params(i).unwrap().data()[k];
    model.params_mut(i).unwrap().data_mut()[k] = orig + H;
    let up = loss_of(model, case);
    model.params_mut(i).unwrap().data_mut()[k] = orig - H;
    let down = loss_of(model, case);
    model.params_mut(i).unwrap().data_mut()[k] = orig;
    (up - down) / (2.0 * H)
}

/// Checks every parameter of every case. Returns (models, parameters checked)
/// or the first mismatch.
pub fn check_all() -> Result<(usize, usize), String> {
    let cases = cases();
    let mut checked = 0;
    for (n, case) in cases.iter().enumerate() {
        let mut rng = Rng::seeded(case.spec.seed);
        let mut model = Model::build(&case.spec, &mut rng).map_err(|e| e.to_string())?;
        let mut pass = model.forward(&case.x, Mode::Train, &mut rng).map_err(|e| e.to_string())?;
        model.backward(&mut pass, &case.y).map_err(|e| e.to_string())?;
        for (i, trace) in pass.traces.iter().enumerate() {
            let Some(dw) = &trace.dw else { continue };
            for k in 0..dw.len() {
                let numeric = numeric_gradient(&mut model, case, i, k);
                let analytic = dw.data()[k];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
                // NaN fails too
                if rel.is_nan() || rel > REL_TOL {
                    return Err(format!(
                        "case {n} layer {} param {k}: analytic {analytic} numeric {numeric} rel {rel}",
                        trace.layer_index
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok((cases.len(), checked))
}
