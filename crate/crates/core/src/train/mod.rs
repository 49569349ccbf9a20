//! Loss, optimizer and the validated training loop.

mod adam;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use trainer::{predict, train, TrainConfig, TrainHistory, TrainOutcome, ValidationRecord};

use crate::error::{Error, Result};

/// Mean squared error `(1/N)·Σ(pred − target)²`.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::dim("mse", &[predictions.len()], &[targets.len()]));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predictions.len() as f64)
}
