use crate::error::Result;
use crate::numerics::{smoothed_cross_entropy, Scalar, Tensor};

use super::TrainConfig;

/// Mean over the batch of `−Σ q · log softmax(z)` with
/// `q = (1 − ε) · onehot + ε / C`.
pub fn label_smoothed_ce<F: Scalar>(logits: &Tensor<F>, labels: &[usize], epsilon: f64) -> Result<F> {
    Ok(smoothed_cross_entropy(logits, labels, F::of(epsilon))?.0)
}

/// Number of warmup steps for a run of `total_steps`.
pub fn warmup_steps(total_steps: usize, config: &TrainConfig) -> f64 {
    config.warmup_fraction * total_steps as f64
}

/// Learning rate at optimizer step `step` (1-based).
///
/// Before the drop point: `d_model^−0.5 · min(step^−0.5, step · warmup^−1.5)`.
/// From `step_fraction · total_steps` on: `post_step_lr`.
pub fn lr_schedule(step: usize, total_steps: usize, config: &TrainConfig, d_model: usize) -> f64 {
    let step = step.max(1) as f64;
    if step >= config.step_fraction * total_steps as f64 {
        return config.post_step_lr;
    }
    let warmup = warmup_steps(total_steps, config).max(1.0);
    (d_model as f64).powf(-0.5) * step.powf(-0.5).min(step * warmup.powf(-1.5))
}
