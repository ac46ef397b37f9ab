//! Cross-entropy and mean-squared-error losses with analytic gradients.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

pub const PROB_CLAMP: f64 = 1e-12;

/// Batch-mean cross entropy of predicted probabilities against simplex
/// targets (one-hot or mixed). Returns the loss and its gradient with
/// respect to the predictions.
pub fn cross_entropy(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape != target.shape {
        return Err(Error::Shape(format!(
            "cross_entropy shapes differ: {:?} vs {:?}",
            pred.shape, target.shape
        )));
    }
    let (n, c) = match pred.shape.as_slice() {
        [n, c] => (*n, *c),
        other => return Err(Error::Shape(format!("cross_entropy expects [N,C], got {other:?}"))),
    };
    for s in 0..n {
        let row = &target.data[s * c..(s + 1) * c];
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&t| t < 0.0) {
            return Err(Error::Validation(format!(
                "target row {s} is off the probability simplex (sum {sum})"
            )));
        }
    }
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&pred.shape);
    for i in 0..pred.len() {
        let p = pred.data[i].max(PROB_CLAMP);
        let t = target.data[i];
        loss -= t * p.ln();
        grad.data[i] = -t / p / n as f64;
    }
    Ok((loss / n as f64, grad))
}

/// Squared error summed over feature dimensions, averaged over the batch
/// (first axis). Per-sample normalization keeps the 1:1 weighting against
/// the per-sample cross-entropy term meaningful; a per-element mean would
/// silently down-weight distillation by the embedding width.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape != target.shape {
        return Err(Error::Shape(format!(
            "mse shapes differ: {:?} vs {:?}",
            pred.shape, target.shape
        )));
    }
    let b = *pred.shape.first().unwrap_or(&1) as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&pred.shape);
    for i in 0..pred.len() {
        let d = pred.data[i] - target.data[i];
        loss += d * d;
        grad.data[i] = 2.0 * d / b;
    }
    Ok((loss / b, grad))
}
