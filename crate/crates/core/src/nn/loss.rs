//! Batch-mean losses, their gradients, and classification accuracy.

use crate::error::{Error, Result};
use crate::nn::spec::{Loss, Task};
use crate::tensor::Tensor;

pub const PROBABILITY_CLIP: f64 = 1e-12;

fn check_shapes(pred: &Tensor, y: &Tensor) -> Result<()> {
    if pred.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            op: "loss",
            lhs: pred.shape(),
            rhs: y.shape(),
        });
    }
    Ok(())
}

fn clip(p: f64, enabled: bool) -> f64 {
    if enabled {
        p.clamp(PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP)
    } else {
        p
    }
}

/// Mean loss over the batch. Nonfinite results are returned as-is.
pub fn compute_loss(pred: &Tensor, y: &Tensor, loss: Loss, clip_probs: bool) -> Result<f64> {
    check_shapes(pred, y)?;
    let n = pred.rows() as f64;
    let total = pred.len() as f64;
    let pairs = pred.data().iter().zip(y.data());
    let value = match loss {
        Loss::Mse => pairs.fold(0.0, |acc, (&p, &t)| acc + (p - t) * (p - t)) / total,
        Loss::BinaryCrossentropy => {
            let sum = pairs.fold(0.0, |acc, (&p, &t)| {
                let p = clip(p, clip_probs);
                // 0 * log(0) is taken as 0
                let mut term = 0.0;
                if t != 0.0 {
                    term += t * p.ln();
                }
                if t != 1.0 {
                    term += (1.0 - t) * (1.0 - p).ln();
                }
                acc - term
            });
            sum / total
        }
        Loss::CategoricalCrossentropy => {
            let sum = pairs.fold(0.0, |acc, (&p, &t)| {
                if t == 0.0 {
                    acc
                } else {
                    acc - t * clip(p, clip_probs).ln()
                }
            });
            sum / n
        }
    };
    Ok(value)
}

/// Gradient of [`compute_loss`] with respect to the predictions.
pub fn loss_gradient(pred: &Tensor, y: &Tensor, loss: Loss, clip_probs: bool) -> Result<Tensor> {
    check_shapes(pred, y)?;
    let n = pred.rows() as f64;
    let total = pred.len() as f64;
    match loss {
        Loss::Mse => pred.zip_map(y, "loss", |p, t| 2.0 * (p - t) / total),
        Loss::BinaryCrossentropy => pred.zip_map(y, "loss", |p, t| {
            let p = clip(p, clip_probs);
            let mut g = 0.0;
            if t != 0.0 {
                g -= t / p;
            }
            if t != 1.0 {
                g += (1.0 - t) / (1.0 - p);
            }
            g / total
        }),
        Loss::CategoricalCrossentropy => pred.zip_map(y, "loss", |p, t| {
            if t == 0.0 {
                0.0
            } else {
                -t / clip(p, clip_probs) / n
            }
        }),
    }
}

/// Fraction of correctly classified rows, or `None` for regression.
///
/// A single output column is thresholded at 0.5; wider outputs use argmax
/// (first maximum wins).
pub fn compute_accuracy(pred: &Tensor, y: &Tensor, task: Task) -> Option<f64> {
    if task == Task::Regression || pred.shape() != y.shape() {
        return None;
    }
    let mut correct = 0usize;
    for r in 0..pred.rows() {
        let (p, t) = (pred.row(r), y.row(r));
        let hit = if pred.cols() == 1 {
            if p[0].is_nan() {
                false
            } else {
                (p[0] >= 0.5) == (t[0] >= 0.5)
            }
        } else {
            argmax(p).is_some() && argmax(p) == argmax(t)
        };
        if hit {
            correct += 1;
        }
    }
    Some(correct as f64 / pred.rows() as f64)
}

fn argmax(row: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in row.iter().enumerate() {
        if v.is_nan() {
            return None;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}
