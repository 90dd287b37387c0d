use super::{softmax, TensorError};

/// Negative log-likelihood of `target` under `softmax(logits)`, with its gradient
/// with respect to the logits (`softmax - onehot`).
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>), TensorError> {
    if target >= logits.len() {
        return Err(TensorError::BadTarget {
            target,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - logits[target];
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    Ok((loss, grad))
}

pub fn reduce_sum_loss(per_step: &[f64]) -> Result<f64, TensorError> {
    if per_step.is_empty() {
        return Err(TensorError::EmptyInput);
    }
    Ok(per_step.iter().sum())
}

/// Summed loss divided by the number of predicted tokens.
pub fn per_token_loss(total: f64, batch: usize, seq_len: usize) -> f64 {
    total / (batch * seq_len) as f64
}
