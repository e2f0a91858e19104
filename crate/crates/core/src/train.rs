//! Shared mini-batch training loop for binary classifiers.
//!
//! The host's joint-training loop and the centralized comparator both call
//! into this function with different batch providers, so the two paths run
//! the exact same arithmetic and RNG schedule for identical configurations.

use crate::loss::bce_loss;
use crate::matrix::Matrix2D;
use crate::model::MlpModel;
use crate::optim::{adam_step, AdamState, TrainConfig};
use crate::rng::stream_rng;
use rand::seq::SliceRandom;

#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Trains `model` with Adam + binary cross-entropy. `fetch_batch` maps the
/// shuffled row indices of one mini-batch to `(features, labels)`; the last
/// incomplete batch is trained, not dropped. Batch order is reshuffled from a
/// fresh per-epoch stream of `config.rng_seed`. Generic over the caller's
/// error type so protocol-backed batch providers keep their own errors.
pub fn train_binary_classifier<F, E>(
    model: &mut MlpModel,
    n_rows: usize,
    mut fetch_batch: F,
    config: &TrainConfig,
) -> std::result::Result<Vec<EpochStats>, E>
where
    F: FnMut(&[usize]) -> std::result::Result<(Matrix2D, Matrix2D), E>,
    E: From<crate::error::CoreError>,
{
    config.validate()?;
    if n_rows == 0 {
        return Err(crate::error::CoreError::Empty(
            "train_binary_classifier: no rows".into(),
        )
        .into());
    }
    let mut adam = AdamState::for_params(&model.param_slices());
    let mut stats = Vec::with_capacity(config.epochs);
    let mut indices: Vec<usize> = (0..n_rows).collect();
    for epoch in 0..config.epochs {
        let mut rng = stream_rng(config.rng_seed, "epoch-shuffle", epoch as u64);
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_no, batch_idx) in indices.chunks(config.batch_size).enumerate() {
            let (x, y) = fetch_batch(batch_idx)?;
            let (pred, cache) = model.forward(&x)?;
            let (loss, out_grad) = bce_loss(&pred, &y)?;
            if !loss.is_finite() {
                return Err(crate::error::CoreError::DivergedLoss {
                    epoch,
                    batch: batch_no,
                    loss,
                }
                .into());
            }
            loss_sum += loss * batch_idx.len() as f64;
            for (p, t) in pred.data().iter().zip(y.data()) {
                if (*p >= 0.5) == (*t >= 0.5) {
                    correct += 1;
                }
            }
            let (grads, _) = model.backward(&cache, &out_grad)?;
            let grad_slices = grads.slices();
            let mut params = model.param_slices_mut();
            adam_step(&mut params, &grad_slices, &mut adam, config.learning_rate)?;
        }
        stats.push(EpochStats {
            epoch,
            loss: loss_sum / n_rows as f64,
            accuracy: correct as f64 / (n_rows * model.output_dim()) as f64,
        });
    }
    Ok(stats)
}
