//! The encoder architecture: presets, parameters, forward pass and checkpoints.

mod checkpoint;
mod config;
pub mod forward;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, Preset, DEFAULT_CLASSES, DEFAULT_FEATURES, DEFAULT_MAX_FRAMES, HEAD_DIM};
pub use forward::{
    forward, forward_batch, forward_on_tape, register, AttentionMaps, Clip, ForwardOutput, ForwardVars, ParamVars,
    Segment,
};
pub use params::{param_specs, ActParams, EncoderLayerParams, Linear, Norm, ParamKind, ParamSpec, INIT_STD};
