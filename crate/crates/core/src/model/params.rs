use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numerics::{Scalar, Tensor};

pub const INIT_STD: f64 = 0.02;

/// How a parameter tensor is initialized and whether weight decay touches it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Gain,
    Embedding,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        self == ParamKind::Weight
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    /// `[in, out]`
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Norm<F> {
    pub gain: Tensor<F>,
    pub bias: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams<F> {
    pub query: Linear<F>,
    pub key: Linear<F>,
    pub value: Linear<F>,
    pub output: Linear<F>,
    pub ffn_in: Linear<F>,
    pub ffn_out: Linear<F>,
    pub norm1: Norm<F>,
    pub norm2: Norm<F>,
}

/// All trainable tensors of one model, plus the configuration they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ActParams<F> {
    pub config: ModelConfig,
    pub projection: Linear<F>,
    /// `[d_model]`
    pub cls_token: Tensor<F>,
    /// `[max_frames + 1, d_model]`; row 0 belongs to the class token.
    pub pos_embedding: Tensor<F>,
    pub layers: Vec<EncoderLayerParams<F>>,
    pub head_hidden: Linear<F>,
    pub head_out: Linear<F>,
}

fn linear_specs(out: &mut Vec<ParamSpec>, name: &str, fan_in: usize, fan_out: usize) {
    out.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: vec![fan_in, fan_out],
        kind: ParamKind::Weight,
    });
    out.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: vec![fan_out],
        kind: ParamKind::Bias,
    });
}

fn norm_specs(out: &mut Vec<ParamSpec>, name: &str, width: usize) {
    out.push(ParamSpec {
        name: format!("{name}.gain"),
        shape: vec![width],
        kind: ParamKind::Gain,
    });
    out.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: vec![width],
        kind: ParamKind::Bias,
    });
}

/// Tensor layout in canonical order: projection, class token, positional
/// embedding, then each layer's Q, K, V, output, FFN1, FFN2, LN1, LN2, then
/// the head. Checkpoints and optimizer state follow this order.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let d = config.d_model;
    let attn = config.heads * config.head_dim;
    let mut specs = Vec::new();
    linear_specs(&mut specs, "projection", config.features, d);
    specs.push(ParamSpec {
        name: "cls_token".into(),
        shape: vec![d],
        kind: ParamKind::Embedding,
    });
    specs.push(ParamSpec {
        name: "pos_embedding".into(),
        shape: vec![config.max_frames + 1, d],
        kind: ParamKind::Embedding,
    });
    for l in 0..config.layers {
        let p = format!("layers.{l}");
        linear_specs(&mut specs, &format!("{p}.query"), d, attn);
        linear_specs(&mut specs, &format!("{p}.key"), d, attn);
        linear_specs(&mut specs, &format!("{p}.value"), d, attn);
        linear_specs(&mut specs, &format!("{p}.output"), attn, d);
        linear_specs(&mut specs, &format!("{p}.ffn_in"), d, config.d_ffn);
        linear_specs(&mut specs, &format!("{p}.ffn_out"), config.d_ffn, d);
        norm_specs(&mut specs, &format!("{p}.norm1"), d);
        norm_specs(&mut specs, &format!("{p}.norm2"), d);
    }
    linear_specs(&mut specs, "head.hidden", d, config.d_head_hidden);
    linear_specs(&mut specs, "head.out", config.d_head_hidden, config.num_classes);
    specs
}

/// Normal(0, std) sample rejected outside ±2 std.
fn truncated_normal<R: Rng>(rng: &mut R, std: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

impl<F: Scalar> ActParams<F> {
    /// Deterministic initialization: truncated-normal weights and embeddings,
    /// zero biases, unit gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = param_specs(config)
            .into_iter()
            .map(|spec| match spec.kind {
                ParamKind::Weight | ParamKind::Embedding => {
                    Tensor::from_fn(&spec.shape, |_| F::of(truncated_normal(&mut rng, INIT_STD)))
                }
                ParamKind::Bias => Tensor::zeros(&spec.shape),
                ParamKind::Gain => Tensor::ones(&spec.shape),
            })
            .collect();
        Self::from_tensors(config.clone(), tensors)
    }

    /// Reassembles parameters from tensors in canonical order.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor<F>>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != tensors.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (spec, t) in specs.iter().zip(&tensors) {
            if spec.shape != t.shape() {
                return Err(Error::Shape {
                    op: "parameter layout",
                    lhs: spec.shape.clone(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked above");
        let mut linear = || Linear {
            weight: next(),
            bias: next(),
        };
        let projection = linear();
        let cls_token = next();
        let pos_embedding = next();
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let mut linear = || Linear {
                weight: next(),
                bias: next(),
            };
            let (query, key, value, output, ffn_in, ffn_out) =
                (linear(), linear(), linear(), linear(), linear(), linear());
            let norm1 = Norm {
                gain: next(),
                bias: next(),
            };
            let norm2 = Norm {
                gain: next(),
                bias: next(),
            };
            layers.push(EncoderLayerParams {
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
        let head_hidden = Linear {
            weight: next(),
            bias: next(),
        };
        let head_out = Linear {
            weight: next(),
            bias: next(),
        };
        Ok(Self {
            config,
            projection,
            cls_token,
            pos_embedding,
            layers,
            head_hidden,
            head_out,
        })
    }

    /// Tensors in canonical order.
    pub fn tensors(&self) -> Vec<&Tensor<F>> {
        let mut out = vec![
            &self.projection.weight,
            &self.projection.bias,
            &self.cls_token,
            &self.pos_embedding,
        ];
        for l in &self.layers {
            for lin in [&l.query, &l.key, &l.value, &l.output, &l.ffn_in, &l.ffn_out] {
                out.push(&lin.weight);
                out.push(&lin.bias);
            }
            out.extend([&l.norm1.gain, &l.norm1.bias, &l.norm2.gain, &l.norm2.bias]);
        }
        out.extend([
            &self.head_hidden.weight,
            &self.head_hidden.bias,
            &self.head_out.weight,
            &self.head_out.bias,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = vec![
            &mut self.projection.weight,
            &mut self.projection.bias,
            &mut self.cls_token,
            &mut self.pos_embedding,
        ];
        for l in &mut self.layers {
            for lin in [
                &mut l.query,
                &mut l.key,
                &mut l.value,
                &mut l.output,
                &mut l.ffn_in,
                &mut l.ffn_out,
            ] {
                out.push(&mut lin.weight);
                out.push(&mut lin.bias);
            }
            out.extend([
                &mut l.norm1.gain,
                &mut l.norm1.bias,
                &mut l.norm2.gain,
                &mut l.norm2.bias,
            ]);
        }
        out.extend([
            &mut self.head_hidden.weight,
            &mut self.head_hidden.bias,
            &mut self.head_out.weight,
            &mut self.head_out.bias,
        ]);
        out
    }

    pub fn into_tensors(self) -> Vec<Tensor<F>> {
        self.tensors().into_iter().cloned().collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<G: Scalar>(&self) -> ActParams<G> {
        let tensors = self.tensors().into_iter().map(Tensor::cast).collect();
        ActParams::from_tensors(self.config.clone(), tensors).expect("same layout")
    }

    /// FNV-1a over the bit patterns of every scalar, in canonical order.
    pub fn checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for &v in t.data() {
                for byte in v.as_f64().to_bits().to_le_bytes() {
                    hash ^= u64::from(byte);
                    hash = hash.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        hash
    }
}
