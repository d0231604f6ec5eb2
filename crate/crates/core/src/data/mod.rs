//! Pose-sequence datasets: sample types, preprocessing, augmentation, folds,
//! the synthetic generator and the POSEPACK interchange format.

mod augment;
mod folds;
mod posepack;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

pub use augment::{augment_flip, augment_noise, flip};
pub use folds::{stratified_folds, Fold};
pub use posepack::{load_dataset, save_dataset, BLOB_FILE, MANIFEST_FILE, POSEPACK_FORMAT, POSEPACK_VERSION};
pub use synth::{synth_generate, SynthConfig, SYNTH_JOINTS};

/// Shortest sequence a dataset may hold.
pub const MIN_LENGTH: usize = 20;
/// Longest sequence a dataset may hold.
pub const MAX_LENGTH: usize = 30;
/// Channels per keypoint: x, y, vx, vy.
pub const CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Parameter(format!("unknown split {s:?}; expected train or test"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    OpenPose,
    PoseNet,
    Synthetic,
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Detector::OpenPose => "openpose",
            Detector::PoseNet => "posenet",
            Detector::Synthetic => "synthetic",
        })
    }
}

/// One actor's feature sequence, `[length, P]` with x, y, vx, vy per keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample {
    pub id: String,
    pub actor: String,
    pub label: usize,
    pub split: Split,
    pub features: Tensor<f32>,
}

impl PoseSample {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub detector: Detector,
    pub class_names: Vec<String>,
    /// Features per frame (P).
    pub features: usize,
    pub samples: Vec<PoseSample>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn split(&self, split: Split) -> Vec<&PoseSample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    pub fn find(&self, id: &str) -> Option<&PoseSample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Checks every invariant the loader enforces.
    pub fn validate(&self) -> Result<()> {
        if self.class_names.is_empty() {
            return Err(Error::Data("dataset has no classes".into()));
        }
        if self.features == 0 || !self.features.is_multiple_of(CHANNELS) {
            return Err(Error::Data(format!(
                "feature width {} is not a positive multiple of {CHANNELS}",
                self.features
            )));
        }
        let mut ids = std::collections::HashSet::new();
        for s in &self.samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id {}", s.id)));
            }
            if s.label >= self.num_classes() {
                return Err(Error::Data(format!(
                    "sample {}: label {} out of range for {} classes",
                    s.id,
                    s.label,
                    self.num_classes()
                )));
            }
            if !(MIN_LENGTH..=MAX_LENGTH).contains(&s.len()) {
                return Err(Error::Data(format!(
                    "sample {}: length {} outside [{MIN_LENGTH}, {MAX_LENGTH}]",
                    s.id,
                    s.len()
                )));
            }
            if s.width() != self.features {
                return Err(Error::Data(format!(
                    "sample {}: width {} but dataset declares {}",
                    s.id,
                    s.width(),
                    self.features
                )));
            }
            if !s.features.is_finite() {
                return Err(Error::Data(format!("sample {}: non-finite feature value", s.id)));
            }
        }
        Ok(())
    }
}

/// Turns `[length, K, 2]` keypoint positions into `[length, 4K]` features
/// ordered x, y, vx, vy per keypoint, with `v_t = p_t − p_{t−1}` and `v_0 = 0`.
pub fn compute_velocities<F: Scalar>(positions: &Tensor<F>) -> Result<Tensor<F>> {
    let shape = positions.shape();
    if shape.len() != 3 || shape[2] != 2 {
        return Err(Error::Shape {
            op: "compute_velocities",
            lhs: shape.to_vec(),
            rhs: vec![0, 0, 2],
        });
    }
    let (len, k) = (shape[0], shape[1]);
    let p = positions.data();
    let mut out = Tensor::zeros(&[len, CHANNELS * k]);
    for t in 0..len {
        let row = out.row_mut(t);
        for j in 0..k {
            let at = |s: usize, c: usize| p[(s * k + j) * 2 + c];
            row[4 * j] = at(t, 0);
            row[4 * j + 1] = at(t, 1);
            if t > 0 {
                row[4 * j + 2] = at(t, 0) - at(t - 1, 0);
                row[4 * j + 3] = at(t, 1) - at(t - 1, 1);
            }
        }
    }
    Ok(out)
}

/// Zero-pads trailing frames up to `max_frames`; returns the padded tensor and the true length.
pub fn pad_or_truncate<F: Scalar>(features: &Tensor<F>, max_frames: usize) -> Result<(Tensor<F>, usize)> {
    let len = features.rows();
    if len > max_frames {
        return Err(Error::Length { len, max: max_frames });
    }
    let width = features.cols();
    let mut data = features.data().to_vec();
    data.resize(max_frames * width, F::zero());
    Ok((Tensor::new(vec![max_frames, width], data)?, len))
}

/// Inverse of [`pad_or_truncate`]: keeps the first `len` frames.
pub fn trim<F: Scalar>(padded: &Tensor<F>, len: usize) -> Result<Tensor<F>> {
    if len == 0 || len > padded.rows() {
        return Err(Error::Length {
            len,
            max: padded.rows(),
        });
    }
    let width = padded.cols();
    Tensor::new(vec![len, width], padded.data()[..len * width].to_vec())
}
