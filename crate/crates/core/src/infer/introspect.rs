use serde::{Deserialize, Serialize};

use crate::data::PoseSample;
use crate::error::{Error, Result};
use crate::model::{forward, ActParams, AttentionMaps, Clip};
use crate::numerics::{Scalar, Tensor};
use crate::train::evaluate;

use super::{Alignment, DropFrom, Truncation};

/// Every layer's and head's attention matrix for one sequence.
pub fn attention_maps<F: Scalar>(params: &ActParams<F>, features: &Tensor<F>) -> Result<AttentionMaps<F>> {
    let out = forward(params, &[Clip::from_tensor(features)], None, true)?;
    Ok(out.attention.expect("requested").remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreNorm {
    /// Divide by the largest score.
    #[default]
    Max,
    /// Divide by the total.
    Sum,
}

/// Per-frame relevance: the last layer's class-token attention row, summed
/// over heads, without the class token's own column, then normalized.
pub fn cls_attention_scores<F: Scalar>(params: &ActParams<F>, features: &Tensor<F>, norm: ScoreNorm) -> Result<Vec<F>> {
    let maps = attention_maps(params, features)?;
    let last = maps.layers() - 1;
    let n = maps.get(last, 0).cols();
    let mut scores = vec![F::zero(); n - 1];
    for h in 0..maps.heads() {
        for (s, &a) in scores.iter_mut().zip(&maps.get(last, h).row(0)[1..]) {
            *s += a;
        }
    }
    let denom = match norm {
        ScoreNorm::Max => scores.iter().copied().fold(F::zero(), F::max),
        ScoreNorm::Sum => scores.iter().copied().sum(),
    };
    if denom > F::zero() {
        for s in &mut scores {
            *s /= denom;
        }
    }
    Ok(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub retained_frames: usize,
    pub balanced_accuracy: f64,
}

/// Balanced accuracy with at most `T'` frames per sequence, for `T' = T` down to 1.
pub fn frame_drop_sweep<F: Scalar>(
    params: &ActParams<F>,
    samples: &[&PoseSample],
    num_classes: usize,
    from: DropFrom,
    alignment: Alignment,
) -> Result<Vec<CurvePoint>> {
    (1..=params.config.max_frames)
        .rev()
        .map(|retain| {
            let t = Truncation {
                retain,
                from,
                alignment,
            };
            let metrics = evaluate(params, samples, num_classes, Some(&t))?;
            Ok(CurvePoint {
                retained_frames: retain,
                balanced_accuracy: metrics.balanced_accuracy,
            })
        })
        .collect()
}

/// Cosine similarity between every pair of positional-embedding rows.
/// Rows with zero norm get similarity 0 with everything.
pub fn pos_embed_similarity<F: Scalar>(params: &ActParams<F>) -> Result<Tensor<F>> {
    let pos = &params.pos_embedding;
    let n = pos.rows();
    let norms: Vec<F> = (0..n)
        .map(|i| pos.row(i).iter().map(|&v| v * v).sum::<F>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|v| *v == F::zero()) {
        log::warn!("positional embedding row {i} has zero norm; its similarities are set to 0");
    }
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let denom = norms[i] * norms[j];
            if denom == F::zero() {
                continue;
            }
            let dot: F = pos.row(i).iter().zip(pos.row(j)).map(|(&a, &b)| a * b).sum();
            out.row_mut(i)[j] = (dot / denom).max(-F::one()).min(F::one());
        }
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("positional similarity".into()));
    }
    Ok(out)
}
