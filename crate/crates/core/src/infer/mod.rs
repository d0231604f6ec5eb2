//! Prediction, ensembles and introspection of trained models.

mod export;
mod introspect;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, forward_batch, ActParams, Clip};
use crate::numerics::{softmax, Scalar, Tensor};

pub use export::{read_blob, read_curve, write_blob, write_curve, Blob, BLOB_MAGIC};
pub use introspect::{
    attention_maps, cls_attention_scores, frame_drop_sweep, pos_embed_similarity, CurvePoint, ScoreNorm,
};

/// Sequences per forward call when scoring many samples.
const CHUNK: usize = 32;

/// Which end of a sequence loses frames when it is shortened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropFrom {
    Head,
    Tail,
}

impl fmt::Display for DropFrom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropFrom::Head => "head",
            DropFrom::Tail => "tail",
        })
    }
}

impl FromStr for DropFrom {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head" => Ok(DropFrom::Head),
            "tail" => Ok(DropFrom::Tail),
            _ => Err(Error::Parameter(format!(
                "unknown drop side {s:?}; expected head or tail"
            ))),
        }
    }
}

/// Positional rows used for frames that survive a head drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    /// Keep each frame's original position.
    #[default]
    Original,
    /// Number retained frames from position 1 again.
    Reindex,
}

impl FromStr for Alignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Alignment::Original),
            "reindex" => Ok(Alignment::Reindex),
            _ => Err(Error::Parameter(format!(
                "unknown alignment {s:?}; expected original or reindex"
            ))),
        }
    }
}

/// Keeps at most `retain` frames of every sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncation {
    pub retain: usize,
    pub from: DropFrom,
    pub alignment: Alignment,
}

impl Truncation {
    pub fn new(retain: usize, from: DropFrom) -> Self {
        Self {
            retain,
            from,
            alignment: Alignment::Original,
        }
    }

    pub fn apply<'d, F: Scalar>(&self, features: &'d Tensor<F>) -> Result<Clip<'d, F>> {
        if self.retain == 0 {
            return Err(Error::Parameter("must retain at least one frame".into()));
        }
        let clip = Clip::from_tensor(features);
        let len = clip.frames;
        if len <= self.retain {
            return Ok(clip);
        }
        let width = features.cols();
        Ok(match self.from {
            DropFrom::Tail => Clip {
                data: &features.data()[..self.retain * width],
                frames: self.retain,
                start: 0,
            },
            DropFrom::Head => {
                let dropped = len - self.retain;
                Clip {
                    data: &features.data()[dropped * width..],
                    frames: self.retain,
                    start: match self.alignment {
                        Alignment::Original => dropped,
                        Alignment::Reindex => 0,
                    },
                }
            }
        })
    }
}

/// Inference-mode logits `[N, C]` for a list of sequences, optionally truncated.
pub fn logits_for<F: Scalar>(
    params: &ActParams<F>,
    sequences: &[&Tensor<F>],
    truncation: Option<&Truncation>,
) -> Result<Tensor<F>> {
    if sequences.is_empty() {
        return Err(Error::Parameter("no sequences to score".into()));
    }
    let clips = sequences
        .iter()
        .map(|s| match truncation {
            Some(t) => t.apply(s),
            None => Ok(Clip::from_tensor(s)),
        })
        .collect::<Result<Vec<_>>>()?;
    let parts = clips
        .par_chunks(CHUNK)
        .map(|chunk| forward(params, chunk, None, false).map(|o| o.logits))
        .collect::<Result<Vec<_>>>()?;
    let c = params.config.num_classes;
    let data = parts.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::new(vec![sequences.len(), c], data)
}

/// Class probabilities for a rectangular batch `[B, T', P]`.
pub fn predict<F: Scalar>(params: &ActParams<F>, batch: &Tensor<F>) -> Result<Tensor<F>> {
    Ok(softmax(&forward_batch(params, batch, None, false)?.logits))
}

fn check_members<F: Scalar>(members: &[&ActParams<F>]) -> Result<()> {
    let first = members
        .first()
        .ok_or_else(|| Error::Parameter("an ensemble needs at least one member".into()))?;
    if let Some(i) = members.iter().position(|m| m.config != first.config) {
        return Err(Error::Config(format!(
            "ensemble member {i} has a different model configuration than member 0"
        )));
    }
    Ok(())
}

/// Mean of the members' logits.
pub fn ensemble_logits<F: Scalar>(
    members: &[&ActParams<F>],
    sequences: &[&Tensor<F>],
    truncation: Option<&Truncation>,
) -> Result<Tensor<F>> {
    check_members(members)?;
    let mut total = logits_for(members[0], sequences, truncation)?;
    for m in &members[1..] {
        let z = logits_for(m, sequences, truncation)?;
        for (a, &b) in total.data_mut().iter_mut().zip(z.data()) {
            *a += b;
        }
    }
    let k = F::of(members.len() as f64);
    Ok(total.map(|v| v / k))
}

/// Softmax of the averaged member logits for a batch `[B, T', P]`.
pub fn ensemble_predict<F: Scalar>(members: &[&ActParams<F>], batch: &Tensor<F>) -> Result<Tensor<F>> {
    check_members(members)?;
    let mut total: Option<Tensor<F>> = None;
    for m in members {
        let z = forward_batch(m, batch, None, false)?.logits;
        total = Some(match total {
            None => z,
            Some(mut t) => {
                for (a, &b) in t.data_mut().iter_mut().zip(z.data()) {
                    *a += b;
                }
                t
            }
        });
    }
    let k = F::of(members.len() as f64);
    Ok(softmax(&total.expect("non-empty").map(|v| v / k)))
}
