//! Action Transformer: a self-attentional classifier for short 2D pose sequences.

pub mod data;
pub mod error;
pub mod infer;
pub mod model;
pub mod numerics;
pub mod train;

pub use data::{Dataset, PoseSample, Split};
pub use error::{Error, Result};
pub use model::{ActParams, AttentionMaps, Checkpoint, ModelConfig, Preset};
pub use numerics::{Scalar, Tape, Tensor, Var};
pub use train::{Metrics, TrainConfig};
