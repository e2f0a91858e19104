//! Loss functions. Both return the batch-mean scalar together with the
//! gradient with respect to the predictions, already normalized by the batch
//! size so `MlpModel::backward` can consume it unscaled.

use crate::error::{CoreError, Result};
use crate::matrix::Matrix2D;

/// Predictions are clamped to `[BCE_EPSILON, 1 − BCE_EPSILON]` before the log,
/// so a "perfect" prediction yields a loss of about `BCE_EPSILON`, not zero.
pub const BCE_EPSILON: f64 = 1e-7;

/// Binary cross-entropy, mean over the batch, summed over output columns.
pub fn bce_loss(predictions: &Matrix2D, labels: &Matrix2D) -> Result<(f64, Matrix2D)> {
    if !predictions.same_shape(labels) {
        return Err(CoreError::ShapeMismatch {
            context: "bce_loss".into(),
            expected: format!("{}x{}", predictions.rows(), predictions.cols()),
            actual: format!("{}x{}", labels.rows(), labels.cols()),
        });
    }
    for &y in labels.data() {
        if y != 0.0 && y != 1.0 {
            return Err(CoreError::InvalidLabel(y));
        }
    }
    predictions.require_finite("bce_loss predictions")?;
    let batch = predictions.rows() as f64;
    let mut grad = predictions.clone();
    let mut loss = 0.0;
    for (g, (&p, &y)) in grad
        .data_mut()
        .iter_mut()
        .zip(predictions.data().iter().zip(labels.data()))
    {
        let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        *g = (p - y) / (p * (1.0 - p)) / batch;
    }
    Ok((loss / batch, grad))
}

/// Squared-error reconstruction loss: mean over the batch of the per-sample
/// sum of squared differences.
pub fn squared_error_loss(predictions: &Matrix2D, targets: &Matrix2D) -> Result<(f64, Matrix2D)> {
    if !predictions.same_shape(targets) {
        return Err(CoreError::ShapeMismatch {
            context: "squared_error_loss".into(),
            expected: format!("{}x{}", predictions.rows(), predictions.cols()),
            actual: format!("{}x{}", targets.rows(), targets.cols()),
        });
    }
    let batch = predictions.rows() as f64;
    let mut grad = predictions.clone();
    let mut loss = 0.0;
    for (g, (&p, &t)) in grad
        .data_mut()
        .iter_mut()
        .zip(predictions.data().iter().zip(targets.data()))
    {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / batch;
    }
    Ok((loss / batch, grad))
}
