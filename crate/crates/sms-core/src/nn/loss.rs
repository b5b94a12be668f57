//! Loss functions and softmax utilities.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Log arguments are floored at this value so a fully-confident wrong
/// prediction cannot produce an infinite loss.
const LOG_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max-subtraction for stability.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let (rows, cols) = (logits.rows(), logits.cols());
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dst = &mut out[r * cols..(r + 1) * cols];
        let mut sum = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            sum += *d;
        }
        for d in dst.iter_mut() {
            *d /= sum;
        }
    }
    Tensor::new(vec![rows, cols], out).expect("consistent dims")
}

/// Index of the largest element; first occurrence wins ties.
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean negative log-likelihood of the labelled class under row-wise
/// softmax, and its gradient with respect to the logits.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, c) = (logits.rows(), logits.cols());
    if b == 0 {
        return Err(Error::Input("cross-entropy needs at least one row".into()));
    }
    if labels.len() != b {
        return Err(Error::Input(format!(
            "{} logit rows but {} labels",
            b,
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Input(format!("label {} out of range for {} classes", bad, c)));
    }

    let probs = softmax_rows(logits);
    let mut loss = 0.0;
    let mut grad = probs.data().to_vec();
    let scale = 1.0 / b as f64;
    for (r, &label) in labels.iter().enumerate() {
        let p = probs.row(r)[label];
        loss -= p.max(LOG_FLOOR).ln();
        let grow = &mut grad[r * c..(r + 1) * c];
        grow[label] -= 1.0;
        for g in grow.iter_mut() {
            *g *= scale;
        }
    }
    loss *= scale;
    let grad = Tensor::new(vec![b, c], grad).expect("consistent dims");
    grad.check_finite("cross_entropy_loss grad")?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross_entropy_loss".into()));
    }
    Ok((loss, grad))
}

/// Mean squared error over all `B·d` elements and its gradient
/// `2 (recon − target) / (B·d)`.
pub fn mse_loss(recon: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if !recon.same_shape(target) {
        return Err(Error::dimension(
            "mse_loss",
            format!("recon shape {:?} vs target {:?}", recon.shape(), target.shape()),
        ));
    }
    let n = recon.len();
    if n == 0 {
        return Err(Error::Input("mse_loss on empty tensors".into()));
    }
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for ((g, &r), &t) in grad.iter_mut().zip(recon.data()).zip(target.data()) {
        let d = r - t;
        loss += d * d;
        *g = 2.0 * d * inv;
    }
    loss *= inv;
    if !loss.is_finite() {
        return Err(Error::NonFinite("mse_loss".into()));
    }
    Ok((loss, Tensor::new(recon.shape().to_vec(), grad).expect("same shape")))
}
