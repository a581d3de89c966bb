use crate::nn::spec::Activation;
use crate::tensor::Tensor;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn apply(act: Activation, v1: &Tensor) -> Tensor {
    match act {
        Activation::Relu => v1.map(|x| if x > 0.0 { x } else { 0.0 }),
        Activation::Sigmoid => v1.map(sigmoid),
        Activation::Tanh => v1.map(f64::tanh),
        Activation::Linear => v1.clone(),
        Activation::Softmax => {
            let mut out = v1.clone();
            let cols = v1.cols();
            for r in 0..v1.rows() {
                let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            out
        }
    }
}

/// Pulls the upstream gradient `grad` (w.r.t. the activation output) back to
/// the activation input. `v1`/`v2` are the forward input and output.
pub fn backward(act: Activation, v1: &Tensor, v2: &Tensor, grad: &Tensor) -> Tensor {
    let cols = grad.cols();
    let mut out = grad.clone();
    let g = grad.data();
    let (x, y) = (v1.data(), v2.data());
    let o = out.data_mut();
    match act {
        Activation::Relu => {
            for i in 0..o.len() {
                o[i] = if x[i] > 0.0 { g[i] } else { 0.0 };
            }
        }
        Activation::Sigmoid => {
            for i in 0..o.len() {
                o[i] = g[i] * y[i] * (1.0 - y[i]);
            }
        }
        Activation::Tanh => {
            for i in 0..o.len() {
                o[i] = g[i] * (1.0 - y[i] * y[i]);
            }
        }
        Activation::Linear => {}
        Activation::Softmax => {
            // dz_i = s_i * (g_i - sum_j g_j s_j)
            for r in 0..grad.rows() {
                let span = r * cols..(r + 1) * cols;
                let dot = g[span.clone()]
                    .iter()
                    .zip(&y[span.clone()])
                    .fold(0.0, |acc, (&a, &b)| acc + a * b);
                for i in span {
                    o[i] = y[i] * (g[i] - dot);
                }
            }
        }
    }
    out
}
