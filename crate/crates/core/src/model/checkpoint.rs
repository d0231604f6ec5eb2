//! `ACTCKPT v1` checkpoint files.
//!
//! Layout:
//!
//! ```text
//! ACTCKPT v1\n
//! <header: one line of JSON>\n
//! <every parameter tensor, canonical order, row-major, f32 little-endian>
//! ```
//!
//! The header records the format version, byte order, dtype, the full
//! [`ModelConfig`], class names, the creation seed and the name and shape of
//! every tensor in the order they appear in the payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::params::{param_specs, ActParams};
use crate::model::ModelConfig;
use crate::numerics::{Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &str = "ACTCKPT v1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    byte_order: String,
    dtype: String,
    config: ModelConfig,
    class_names: Vec<String>,
    seed: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ActParams<f32>,
    pub class_names: Vec<String>,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new<F: Scalar>(params: &ActParams<F>, class_names: Vec<String>, seed: u64) -> Self {
        Self {
            params: params.cast(),
            class_names,
            seed,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            byte_order: "little-endian".into(),
            dtype: "f32".into(),
            config: self.params.config.clone(),
            class_names: self.class_names.clone(),
            seed: self.seed,
            tensors: param_specs(&self.params.config)
                .into_iter()
                .map(|s| TensorEntry {
                    name: s.name,
                    shape: s.shape,
                })
                .collect(),
        };
        let mut out = Vec::with_capacity(self.params.scalar_count() * 4 + 4096);
        out.extend_from_slice(CHECKPOINT_MAGIC.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(serde_json::to_string(&header).expect("header serializes").as_bytes());
        out.push(b'\n');
        for t in self.params.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: String| Error::format(path, m);
        let magic_end = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing checkpoint magic line".into()))?;
        let magic = std::str::from_utf8(&bytes[..magic_end]).map_err(|_| bad("magic line is not text".into()))?;
        if !magic.starts_with("ACTCKPT ") {
            return Err(bad(format!("not an ACTCKPT file (found {magic:?})")));
        }
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Version {
                what: "checkpoint",
                expected: CHECKPOINT_MAGIC.into(),
                found: magic.into(),
            });
        }
        let rest = &bytes[magic_end + 1..];
        let header_end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("unterminated header".into()))?;
        let header: Header =
            serde_json::from_slice(&rest[..header_end]).map_err(|e| bad(format!("invalid header: {e}")))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                what: "checkpoint",
                expected: CHECKPOINT_VERSION.to_string(),
                found: header.format_version.to_string(),
            });
        }
        if header.byte_order != "little-endian" || header.dtype != "f32" {
            return Err(bad(format!(
                "unsupported encoding {} / {}",
                header.byte_order, header.dtype
            )));
        }
        header.config.validate()?;
        let specs = param_specs(&header.config);
        let listed: Vec<(&str, &[usize])> = header
            .tensors
            .iter()
            .map(|t| (t.name.as_str(), t.shape.as_slice()))
            .collect();
        let expected: Vec<(&str, &[usize])> = specs.iter().map(|s| (s.name.as_str(), s.shape.as_slice())).collect();
        if listed != expected {
            return Err(bad("tensor table does not match the configured layout".into()));
        }

        let payload = &rest[header_end + 1..];
        let scalars = header.config.param_count();
        if payload.len() != scalars * 4 {
            return Err(bad(format!(
                "payload holds {} bytes, layout needs {}",
                payload.len(),
                scalars * 4
            )));
        }
        let mut values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in &specs {
            let n = spec.shape.iter().product();
            let data: Vec<f32> = values.by_ref().take(n).collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("non-finite value in {}", spec.name)));
            }
            tensors.push(Tensor::new(spec.shape.clone(), data)?);
        }
        Ok(Self {
            params: ActParams::from_tensors(header.config, tensors)?,
            class_names: header.class_names,
            seed: header.seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig::preset_with(Preset::Micro, 8, 3);
        let params = ActParams::<f32>::init(&cfg, 9).unwrap();
        Checkpoint::new(&params, vec!["a".into(), "b".into(), "c".into()], 9)
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes.truncate(bytes.len() - 3);
        let err = Checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("payload"), "{err}");
    }

    #[test]
    fn other_version_is_rejected() {
        let bytes = sample().to_bytes();
        let mut text = b"ACTCKPT v2".to_vec();
        text.extend_from_slice(&bytes[CHECKPOINT_MAGIC.len()..]);
        assert!(matches!(
            Checkpoint::from_bytes(&text, Path::new("mem")),
            Err(Error::Version { .. })
        ));
    }

    #[test]
    fn header_is_a_single_json_line() {
        let bytes = sample().to_bytes();
        let text = String::from_utf8_lossy(&bytes);
        let header = text.lines().nth(1).unwrap();
        let value: serde_json::Value = serde_json::from_str(header).unwrap();
        assert_eq!(value["byte_order"], "little-endian");
        assert_eq!(value["tensors"][0]["name"], "projection.weight");
        assert_eq!(value["config"]["d_model"], 64);
    }
}
