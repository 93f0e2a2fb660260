use super::activation::{sigmoid, softmax};
use crate::error::{Error, Result};

/// `-ln probs[target]`.
pub fn cross_entropy_loss(probs: &[f64], target: usize) -> Result<f64> {
    let p = *probs.get(target).ok_or(Error::InvalidClass {
        index: target,
        classes: probs.len(),
    })?;
    Ok(-p.max(f64::MIN_POSITIVE).ln())
}

/// Fused softmax + cross-entropy: returns `(loss, probs, d loss / d logits)`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::InvalidClass {
            index: target,
            classes: logits.len(),
        });
    }
    let probs = softmax(logits)?;
    // log-sum-exp form keeps the loss finite when probs[target] underflows
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[target];
    let mut grad = probs.clone();
    grad[target] -= 1.0;
    Ok((loss, probs, grad))
}

/// Mean squared error over the vector entries.
pub fn mse_loss(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let n = pred.len() as f64;
    Ok(pred.iter().zip(truth).map(|(p, g)| (p - g).powi(2)).sum::<f64>() / n)
}

pub fn mse_grad(pred: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    check_pair(pred, truth)?;
    let n = pred.len() as f64;
    Ok(pred.iter().zip(truth).map(|(p, g)| 2.0 * (p - g) / n).collect())
}

/// Fused sigmoid + MSE: returns `(loss, scores, d loss / d logits)`.
pub fn sigmoid_mse(logits: &[f64], truth: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let scores = sigmoid(logits);
    let loss = mse_loss(&scores, truth)?;
    let grad = mse_grad(&scores, truth)?
        .into_iter()
        .zip(&scores)
        .map(|(g, s)| g * s * (1.0 - s))
        .collect();
    Ok((loss, scores, grad))
}

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Empty("loss over an empty vector"));
    }
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} entries, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}
