//! Tape-level forward pass.
//!
//! Sequences of different lengths are packed row-wise into one token matrix
//! so that every linear map runs as a single product; attention is computed
//! per sequence ("segment") and per head on sub-blocks of that matrix.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::params::{ActParams, EncoderLayerParams, Linear, Norm};
use crate::model::ModelConfig;
use crate::numerics::{Scalar, Tape, Tensor, Var, LAYER_NORM_EPS};

/// One input sequence of `frames` rows, `features` values each.
///
/// Frame `i` is paired with positional row `1 + start + i`; `start` is
/// non-zero only when leading frames were dropped and the retained frames
/// keep their original positions.
#[derive(Debug, Clone, Copy)]
pub struct Clip<'d, F> {
    pub data: &'d [F],
    pub frames: usize,
    pub start: usize,
}

impl<'d, F: Scalar> Clip<'d, F> {
    pub fn new(data: &'d [F], features: usize) -> Result<Self> {
        if features == 0 || data.is_empty() || !data.len().is_multiple_of(features) {
            return Err(Error::Shape {
                op: "clip",
                lhs: vec![data.len()],
                rhs: vec![features],
            });
        }
        Ok(Self {
            data,
            frames: data.len() / features,
            start: 0,
        })
    }

    pub fn from_tensor(frames: &'d Tensor<F>) -> Self {
        Self {
            data: frames.data(),
            frames: frames.rows(),
            start: 0,
        }
    }

    pub fn with_start(mut self, start: usize) -> Self {
        self.start = start;
        self
    }

    fn check(&self, config: &ModelConfig) -> Result<()> {
        if self.frames == 0 || self.start + self.frames > config.max_frames {
            return Err(Error::Length {
                len: self.start + self.frames,
                max: config.max_frames,
            });
        }
        if self.data.len() != self.frames * config.features {
            return Err(Error::Shape {
                op: "embed",
                lhs: vec![self.frames, self.data.len() / self.frames.max(1)],
                rhs: vec![self.frames, config.features],
            });
        }
        Ok(())
    }
}

/// Row range of one sequence's tokens inside a packed token matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub offset: usize,
    pub len: usize,
}

pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

pub struct NormVars {
    pub gain: Var,
    pub bias: Var,
}

pub struct LayerVars {
    pub query: LinearVars,
    pub key: LinearVars,
    pub value: LinearVars,
    pub output: LinearVars,
    pub ffn_in: LinearVars,
    pub ffn_out: LinearVars,
    pub norm1: NormVars,
    pub norm2: NormVars,
}

/// Parameters registered on a tape, mirroring [`ActParams`].
pub struct ParamVars {
    pub projection: LinearVars,
    pub cls_token: Var,
    pub pos_embedding: Var,
    pub layers: Vec<LayerVars>,
    pub head_hidden: LinearVars,
    pub head_out: LinearVars,
}

impl ParamVars {
    /// Canonical-order handles, matching [`ActParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![
            self.projection.weight,
            self.projection.bias,
            self.cls_token,
            self.pos_embedding,
        ];
        for l in &self.layers {
            for lin in [&l.query, &l.key, &l.value, &l.output, &l.ffn_in, &l.ffn_out] {
                out.push(lin.weight);
                out.push(lin.bias);
            }
            out.extend([l.norm1.gain, l.norm1.bias, l.norm2.gain, l.norm2.bias]);
        }
        out.extend([
            self.head_hidden.weight,
            self.head_hidden.bias,
            self.head_out.weight,
            self.head_out.bias,
        ]);
        out
    }

    /// Inverse of [`ParamVars::vars`] for a list of handles in canonical order.
    pub fn from_vars(config: &ModelConfig, vars: &[Var]) -> Result<Self> {
        let expected = 8 + config.layers * 16;
        if vars.len() != expected {
            return Err(Error::Config(format!(
                "expected {expected} parameter handles, got {}",
                vars.len()
            )));
        }
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("length checked above");
        let mut linear = || LinearVars {
            weight: next(),
            bias: next(),
        };
        let projection = linear();
        let cls_token = next();
        let pos_embedding = next();
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let mut linear = || LinearVars {
                weight: next(),
                bias: next(),
            };
            let (query, key, value, output, ffn_in, ffn_out) =
                (linear(), linear(), linear(), linear(), linear(), linear());
            let norm1 = NormVars {
                gain: next(),
                bias: next(),
            };
            let norm2 = NormVars {
                gain: next(),
                bias: next(),
            };
            layers.push(LayerVars {
                query,
                key,
                value,
                output,
                ffn_in,
                ffn_out,
                norm1,
                norm2,
            });
        }
        let head_hidden = LinearVars {
            weight: next(),
            bias: next(),
        };
        let head_out = LinearVars {
            weight: next(),
            bias: next(),
        };
        Ok(Self {
            projection,
            cls_token,
            pos_embedding,
            layers,
            head_hidden,
            head_out,
        })
    }
}

/// Registers every parameter on `tape`; `trainable` decides whether they collect gradients.
pub fn register<'a, F: Scalar>(params: &'a ActParams<F>, tape: &mut Tape<'a, F>, trainable: bool) -> ParamVars {
    let mut leaf = |t: &'a Tensor<F>| {
        if trainable {
            tape.param(t)
        } else {
            tape.constant_ref(t)
        }
    };
    let linear = |l: &'a Linear<F>, leaf: &mut dyn FnMut(&'a Tensor<F>) -> Var| LinearVars {
        weight: leaf(&l.weight),
        bias: leaf(&l.bias),
    };
    let norm = |n: &'a Norm<F>, leaf: &mut dyn FnMut(&'a Tensor<F>) -> Var| NormVars {
        gain: leaf(&n.gain),
        bias: leaf(&n.bias),
    };
    let projection = linear(&params.projection, &mut leaf);
    let cls_token = leaf(&params.cls_token);
    let pos_embedding = leaf(&params.pos_embedding);
    let layers = params
        .layers
        .iter()
        .map(|l: &'a EncoderLayerParams<F>| LayerVars {
            query: linear(&l.query, &mut leaf),
            key: linear(&l.key, &mut leaf),
            value: linear(&l.value, &mut leaf),
            output: linear(&l.output, &mut leaf),
            ffn_in: linear(&l.ffn_in, &mut leaf),
            ffn_out: linear(&l.ffn_out, &mut leaf),
            norm1: norm(&l.norm1, &mut leaf),
            norm2: norm(&l.norm2, &mut leaf),
        })
        .collect();
    let head_hidden = linear(&params.head_hidden, &mut leaf);
    let head_out = linear(&params.head_out, &mut leaf);
    ParamVars {
        projection,
        cls_token,
        pos_embedding,
        layers,
        head_hidden,
        head_out,
    }
}

/// Dropout state for one pass: `None` means inference mode.
pub type DropoutRng<'r> = Option<&'r mut ChaCha8Rng>;

fn maybe_dropout<F: Scalar>(tape: &mut Tape<'_, F>, x: Var, rate: f64, rng: &mut DropoutRng<'_>) -> Result<Var> {
    match rng {
        Some(r) => tape.dropout(x, rate, &mut **r, true),
        None => Ok(x),
    }
}

/// Projects frames to tokens, prepends the class token to every sequence and
/// adds positional rows. Returns the packed `[Σ(frames+1), d_model]` matrix.
pub fn embed<F: Scalar>(
    tape: &mut Tape<'_, F>,
    vars: &ParamVars,
    config: &ModelConfig,
    clips: &[Clip<'_, F>],
) -> Result<(Var, Vec<Segment>)> {
    if clips.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let mut frames = Vec::new();
    for clip in clips {
        clip.check(config)?;
        frames.extend_from_slice(clip.data);
    }
    let total = frames.len() / config.features;
    let x = tape.constant(Tensor::new(vec![total, config.features], frames)?);
    let projected = tape.linear(x, vars.projection.weight, vars.projection.bias)?;

    let mut parts = Vec::with_capacity(2 * clips.len());
    let mut positions = Vec::with_capacity(total + clips.len());
    let mut segments = Vec::with_capacity(clips.len());
    let (mut row, mut offset) = (0, 0);
    for clip in clips {
        parts.push(vars.cls_token);
        parts.push(tape.block(projected, row, clip.frames, 0, config.d_model)?);
        positions.push(0);
        positions.extend((0..clip.frames).map(|i| 1 + clip.start + i));
        segments.push(Segment {
            offset,
            len: clip.frames + 1,
        });
        row += clip.frames;
        offset += clip.frames + 1;
    }
    let tokens = tape.concat_rows(&parts)?;
    let pos = tape.gather_rows(vars.pos_embedding, &positions)?;
    Ok((tape.add(tokens, pos)?, segments))
}

/// Multi-head self-attention. Returns the projected output and, per segment,
/// the `heads` attention matrices.
pub fn msa<F: Scalar>(
    tape: &mut Tape<'_, F>,
    layer: &LayerVars,
    x: Var,
    segments: &[Segment],
    config: &ModelConfig,
) -> Result<(Var, Vec<Vec<Var>>)> {
    let dh = config.head_dim;
    let scale = F::of(1.0 / (dh as f64).sqrt());
    let q = tape.linear(x, layer.query.weight, layer.query.bias)?;
    let k = tape.linear(x, layer.key.weight, layer.key.bias)?;
    let v = tape.linear(x, layer.value.weight, layer.value.bias)?;

    let mut maps = Vec::with_capacity(segments.len());
    let mut per_segment = Vec::with_capacity(segments.len());
    for seg in segments {
        let mut heads = Vec::with_capacity(config.heads);
        let mut seg_maps = Vec::with_capacity(config.heads);
        for h in 0..config.heads {
            let qh = tape.block(q, seg.offset, seg.len, h * dh, dh)?;
            let kh = tape.block(k, seg.offset, seg.len, h * dh, dh)?;
            let vh = tape.block(v, seg.offset, seg.len, h * dh, dh)?;
            let scores = tape.matmul_nt(qh, kh)?;
            let scores = tape.scale(scores, scale);
            let attention = tape.softmax(scores);
            heads.push(tape.matmul(attention, vh)?);
            seg_maps.push(attention);
        }
        let joined = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat_cols(&heads)?
        };
        per_segment.push(joined);
        maps.push(seg_maps);
    }
    let joined = if per_segment.len() == 1 {
        per_segment[0]
    } else {
        tape.concat_rows(&per_segment)?
    };
    let out = tape.linear(joined, layer.output.weight, layer.output.bias)?;
    Ok((out, maps))
}

/// Post-norm encoder layer:
/// `x1 = LN1(x + Dropout(MSA(x)))`, `x2 = LN2(x1 + Dropout(FFN(x1)))`.
pub fn encoder_layer<F: Scalar>(
    tape: &mut Tape<'_, F>,
    layer: &LayerVars,
    x: Var,
    segments: &[Segment],
    config: &ModelConfig,
    rng: &mut DropoutRng<'_>,
) -> Result<(Var, Vec<Vec<Var>>)> {
    let eps = F::of(LAYER_NORM_EPS);
    let (attended, maps) = msa(tape, layer, x, segments, config)?;
    let attended = maybe_dropout(tape, attended, config.dropout, rng)?;
    let residual = tape.add(x, attended)?;
    let x1 = tape.layer_norm(residual, layer.norm1.gain, layer.norm1.bias, eps)?;

    let hidden = tape.linear(x1, layer.ffn_in.weight, layer.ffn_in.bias)?;
    let hidden = tape.gelu(hidden);
    let ffn = tape.linear(hidden, layer.ffn_out.weight, layer.ffn_out.bias)?;
    let ffn = maybe_dropout(tape, ffn, config.dropout, rng)?;
    let residual = tape.add(x1, ffn)?;
    let x2 = tape.layer_norm(residual, layer.norm2.gain, layer.norm2.bias, eps)?;
    Ok((x2, maps))
}

/// Handles produced by [`forward_on_tape`].
pub struct ForwardVars {
    /// `[B, num_classes]`
    pub logits: Var,
    /// `attention[layer][segment][head]`
    pub attention: Vec<Vec<Vec<Var>>>,
    pub segments: Vec<Segment>,
}

/// Full pass: embedding, encoder stack, class-token readout, classification head.
pub fn forward_on_tape<F: Scalar>(
    tape: &mut Tape<'_, F>,
    vars: &ParamVars,
    config: &ModelConfig,
    clips: &[Clip<'_, F>],
    mut rng: DropoutRng<'_>,
) -> Result<ForwardVars> {
    let (mut x, segments) = embed(tape, vars, config, clips)?;
    let mut attention = Vec::with_capacity(config.layers);
    for layer in &vars.layers {
        let (next, maps) = encoder_layer(tape, layer, x, &segments, config, &mut rng)?;
        x = next;
        attention.push(maps);
    }
    let cls_rows: Vec<usize> = segments.iter().map(|s| s.offset).collect();
    let cls = tape.gather_rows(x, &cls_rows)?;
    let hidden = tape.linear(cls, vars.head_hidden.weight, vars.head_hidden.bias)?;
    let hidden = tape.gelu(hidden);
    let hidden = maybe_dropout(tape, hidden, config.dropout, &mut rng)?;
    let logits = tape.linear(hidden, vars.head_out.weight, vars.head_out.bias)?;
    Ok(ForwardVars {
        logits,
        attention,
        segments,
    })
}

/// Attention matrices of one sequence: `maps[layer][head]`, each `[n, n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMaps<F> {
    pub maps: Vec<Vec<Tensor<F>>>,
}

impl<F: Scalar> AttentionMaps<F> {
    pub fn layers(&self) -> usize {
        self.maps.len()
    }

    pub fn heads(&self) -> usize {
        self.maps.first().map_or(0, Vec::len)
    }

    pub fn count(&self) -> usize {
        self.maps.iter().map(Vec::len).sum()
    }

    pub fn get(&self, layer: usize, head: usize) -> &Tensor<F> {
        &self.maps[layer][head]
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<F> {
    /// `[B, num_classes]`
    pub logits: Tensor<F>,
    /// One entry per input sequence when requested.
    pub attention: Option<Vec<AttentionMaps<F>>>,
}

/// Runs the model on `clips`. `rng = Some(..)` enables training-mode dropout.
pub fn forward<F: Scalar>(
    params: &ActParams<F>,
    clips: &[Clip<'_, F>],
    rng: DropoutRng<'_>,
    want_attention: bool,
) -> Result<ForwardOutput<F>> {
    let mut tape = Tape::new();
    let vars = register(params, &mut tape, false);
    let out = forward_on_tape(&mut tape, &vars, &params.config, clips, rng)?;
    let attention = want_attention.then(|| {
        (0..out.segments.len())
            .map(|s| AttentionMaps {
                maps: out
                    .attention
                    .iter()
                    .map(|layer| layer[s].iter().map(|&v| tape.value(v).clone()).collect())
                    .collect(),
            })
            .collect()
    });
    Ok(ForwardOutput {
        logits: tape.value(out.logits).clone(),
        attention,
    })
}

/// Convenience wrapper for a rectangular `[B, T', P]` batch.
pub fn forward_batch<F: Scalar>(
    params: &ActParams<F>,
    batch: &Tensor<F>,
    rng: DropoutRng<'_>,
    want_attention: bool,
) -> Result<ForwardOutput<F>> {
    let shape = batch.shape();
    if shape.len() != 3 || shape[2] != params.config.features {
        return Err(Error::Shape {
            op: "forward",
            lhs: shape.to_vec(),
            rhs: vec![0, params.config.max_frames, params.config.features],
        });
    }
    let per = shape[1] * shape[2];
    let clips: Vec<Clip<'_, F>> = batch
        .data()
        .chunks(per)
        .map(|d| Clip {
            data: d,
            frames: shape[1],
            start: 0,
        })
        .collect();
    forward(params, &clips, rng, want_attention)
}
