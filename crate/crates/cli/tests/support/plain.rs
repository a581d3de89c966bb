//! Plain-loop reference math for the corpus construction oracles: no tensor
//! ops from the engine, only nested loops over the initial parameters.

use nndiag_core::nn::{Activation, LayerSpec, Model, ModelSpec, RunRngs};
use nndiag_core::{Dataset, Tensor};

/// One dense layer: `w[i][j]` for inputs `i`, then the bias row.
pub type Dense = Vec<Vec<f64>>;

pub fn corpus_file(name: &str) -> String {
    let path = format!("{}/corpus/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn spec(name: &str) -> ModelSpec {
    ModelSpec::from_json(&corpus_file(&format!("{name}.model.json"))).unwrap()
}

pub fn data(name: &str) -> Dataset {
    let spec = nndiag_core::DatasetSpec::from_json(&corpus_file(&format!("{name}.data.json"))).unwrap();
    nndiag_core::data::load_or_generate(&spec).unwrap()
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// Initial dense parameters as the monitored run builds them.
pub fn initial_params(spec: &ModelSpec) -> Vec<Dense> {
    let mut rngs = RunRngs::from_seed(spec.seed);
    let model = Model::build(spec, &mut rngs.init).unwrap();
    (0..spec.layers.len())
        .filter_map(|i| model.params(i).map(rows))
        .collect()
}

/// The first `n` samples: the first batch of an unshuffled run.
pub fn first_batch(data: &Dataset, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = n.min(data.len());
    ((0..n).map(|r| data.x.row(r).to_vec()).collect(), (0..n).map(|r| data.y.row(r).to_vec()).collect())
}

pub fn affine(x: &[Vec<f64>], w: &Dense) -> Vec<Vec<f64>> {
    let inputs = w.len() - 1;
    let units = w[0].len();
    x.iter()
        .map(|row| {
            (0..units)
                .map(|j| {
                    let mut z = w[inputs][j];
                    for i in 0..inputs {
                        z += row[i] * w[i][j];
                    }
                    z
                })
                .collect()
        })
        .collect()
}

pub fn activate(z: &[Vec<f64>], act: Activation) -> Vec<Vec<f64>> {
    z.iter()
        .map(|row| match act {
            Activation::Softmax => {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| v / s).collect()
            }
            _ => row
                .iter()
                .map(|&v| match act {
                    Activation::Relu => v.max(0.0),
                    Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
                    Activation::Tanh => v.tanh(),
                    _ => v,
                })
                .collect(),
        })
        .collect()
}

/// Inference forward through dense/activation layers (dropout is identity).
pub fn forward(spec: &ModelSpec, params: &[Dense], x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut h = x.to_vec();
    let mut d = 0;
    for layer in &spec.layers {
        match layer {
            LayerSpec::Dense { .. } => {
                h = affine(&h, &params[d]);
                d += 1;
            }
            LayerSpec::Activation { activation } => h = activate(&h, *activation),
            LayerSpec::Dropout { .. } => {}
        }
    }
    h
}

/// Batch-mean binary cross-entropy, with optional probability clipping.
pub fn bce(p: &[Vec<f64>], y: &[Vec<f64>], clip: bool) -> f64 {
    let mut total = 0.0;
    let mut n = 0.0;
    for (pr, yr) in p.iter().zip(y) {
        for (&pv, &yv) in pr.iter().zip(yr) {
            let pv = if clip { pv.clamp(1e-12, 1.0 - 1e-12) } else { pv };
            total -= yv * pv.ln() + (1.0 - yv) * (1.0 - pv).ln();
            n += 1.0;
        }
    }
    total / n
}

pub fn mean(v: &[Vec<f64>]) -> f64 {
    let n: usize = v.iter().map(Vec::len).sum();
    v.iter().flatten().sum::<f64>() / n as f64
}

pub fn fraction(v: &[Vec<f64>], pred: impl Fn(f64) -> bool) -> f64 {
    let n: usize = v.iter().map(Vec::len).sum();
    v.iter().flatten().filter(|&&x| pred(x)).count() as f64 / n as f64
}

/// Mean absolute central-difference gradient of `loss` w.r.t. dense layer `d`.
pub fn fd_mean_abs(params: &[Dense], d: usize, h: f64, loss: impl Fn(&[Dense]) -> f64) -> f64 {
    let mut p = params.to_vec();
    let mut total = 0.0;
    let mut count = 0.0;
    for i in 0..p[d].len() {
        for j in 0..p[d][i].len() {
            let orig = p[d][i][j];
            p[d][i][j] = orig + h;
            let up = loss(&p);
            p[d][i][j] = orig - h;
            let down = loss(&p);
            p[d][i][j] = orig;
            total += ((up - down) / (2.0 * h)).abs();
            count += 1.0;
        }
    }
    total / count
}
