//! Training recipe: loss, schedule, optimizer, epoch loop and metrics.

mod config;
mod fit;
mod metrics;
mod optimizer;
mod schedule;

pub use config::TrainConfig;
pub use fit::{
    batch_gradients, evaluate, steps_per_epoch, train_one, train_step, train_with_progress, EpochRecord, Example,
    SubSeeds, TrainOutcome, GRAD_CHUNK,
};
pub use metrics::{argmax, balanced_accuracy, Metrics, Summary};
pub use optimizer::{adamw_step, OptimizerState};
pub use schedule::{label_smoothed_ce, lr_schedule, warmup_steps};
