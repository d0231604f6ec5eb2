use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_FRAMES: usize = 30;
pub const DEFAULT_FEATURES: usize = 52;
pub const DEFAULT_CLASSES: usize = 20;
pub const HEAD_DIM: usize = 64;

/// The four published model sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Micro,
    Small,
    Medium,
    Large,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Micro, Preset::Small, Preset::Medium, Preset::Large];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Micro => "micro",
            Preset::Small => "small",
            Preset::Medium => "medium",
            Preset::Large => "large",
        }
    }

    /// `(heads, d_model, layers, head hidden width)`
    fn dims(self) -> (usize, usize, usize, usize) {
        match self {
            Preset::Micro => (1, 64, 4, 256),
            Preset::Small => (2, 128, 5, 256),
            Preset::Medium => (3, 192, 6, 256),
            Preset::Large => (4, 256, 6, 512),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "micro" | "mu" | "μ" => Ok(Preset::Micro),
            "small" | "s" => Ok(Preset::Small),
            "medium" | "m" => Ok(Preset::Medium),
            "large" | "l" => Ok(Preset::Large),
            _ => Err(Error::Parameter(format!(
                "unknown preset {s:?}; valid names: micro, small, medium, large"
            ))),
        }
    }
}

/// Architectural hyperparameters of one model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Longest accepted sequence, in frames.
    pub max_frames: usize,
    /// Features per frame.
    pub features: usize,
    pub num_classes: usize,
    pub d_model: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub layers: usize,
    /// Hidden width of the encoder feed-forward block.
    pub d_ffn: usize,
    /// Hidden width of the classification head.
    pub d_head_hidden: usize,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn preset(preset: Preset) -> Self {
        Self::preset_with(preset, DEFAULT_FEATURES, DEFAULT_CLASSES)
    }

    pub fn preset_with(preset: Preset, features: usize, num_classes: usize) -> Self {
        let (heads, d_model, layers, d_head_hidden) = preset.dims();
        Self {
            max_frames: DEFAULT_MAX_FRAMES,
            features,
            num_classes,
            d_model,
            heads,
            head_dim: HEAD_DIM,
            layers,
            d_ffn: 4 * d_model,
            d_head_hidden,
            dropout: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("max_frames", self.max_frames),
            ("features", self.features),
            ("num_classes", self.num_classes),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
            ("layers", self.layers),
            ("d_ffn", self.d_ffn),
            ("d_head_hidden", self.d_head_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.heads * self.head_dim != self.d_model {
            return Err(Error::Config(format!(
                "d_model ({}) must equal heads ({}) x head_dim ({})",
                self.d_model, self.heads, self.head_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Closed-form trainable scalar count.
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let (f, hh, c) = (self.d_ffn, self.d_head_hidden, self.num_classes);
        let attn = self.heads * self.head_dim;
        let embedding = (self.features * d + d) + d + (self.max_frames + 1) * d;
        let layer = 3 * (d * attn + attn) + (attn * d + d) + (d * f + f) + (f * d + d) + 4 * d;
        let head = (d * hh + hh) + (hh * c + c);
        embedding + self.layers * layer + head
    }
}
