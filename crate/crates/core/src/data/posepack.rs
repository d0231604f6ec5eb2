//! `POSEPACK v1` dataset directories.
//!
//! A dataset is a directory holding two files:
//!
//! * `manifest.json`: `format` (`"POSEPACK"`), `version` (1), `detector`
//!   (`openpose`, `posenet` or `synthetic`), `features` (P), `byte_order`
//!   (`"little-endian"`), `dtype` (`"f32"`), `class_names` (ordered), and
//!   `samples`, an array of `{id, actor, label, length, split, offset}`.
//! * `tensors.bin`: for each sample, `length × P` little-endian f32 values,
//!   row-major, starting at byte `offset`.
//!
//! Samples are written back to back in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::{Dataset, Detector, PoseSample, Split};

pub const POSEPACK_FORMAT: &str = "POSEPACK";
pub const POSEPACK_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "tensors.bin";

#[derive(Debug, Serialize, Deserialize)]
struct Probe {
    format: String,
    version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    actor: String,
    label: usize,
    length: usize,
    split: Split,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    detector: Detector,
    features: usize,
    byte_order: String,
    dtype: String,
    class_names: Vec<String>,
    samples: Vec<SampleRecord>,
}

/// Writes `dataset` into `dir`, creating it if needed.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::new();
    let mut records = Vec::with_capacity(dataset.samples.len());
    for s in &dataset.samples {
        records.push(SampleRecord {
            id: s.id.clone(),
            actor: s.actor.clone(),
            label: s.label,
            length: s.len(),
            split: s.split,
            offset: blob.len() as u64,
        });
        for v in s.features.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: POSEPACK_FORMAT.into(),
        version: POSEPACK_VERSION,
        detector: dataset.detector,
        features: dataset.features,
        byte_order: "little-endian".into(),
        dtype: "f32".into(),
        class_names: dataset.class_names.clone(),
        samples: records,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    let blob_path = dir.join(BLOB_FILE);
    fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))
}

/// Reads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let bad = |m: String| Error::format(&manifest_path, m);
    let probe: Probe = serde_json::from_str(&text).map_err(|e| bad(format!("invalid manifest: {e}")))?;
    if probe.format != POSEPACK_FORMAT {
        return Err(bad(format!("not a POSEPACK manifest (format {:?})", probe.format)));
    }
    if probe.version != POSEPACK_VERSION {
        return Err(Error::Version {
            what: "dataset",
            expected: POSEPACK_VERSION.to_string(),
            found: probe.version.to_string(),
        });
    }
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| bad(format!("invalid manifest: {e}")))?;
    if manifest.byte_order != "little-endian" || manifest.dtype != "f32" {
        return Err(bad(format!(
            "unsupported encoding {} / {}",
            manifest.byte_order, manifest.dtype
        )));
    }

    let blob_path = dir.join(BLOB_FILE);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    let width = manifest.features;
    let mut spans: Vec<(u64, u64, &str)> = Vec::with_capacity(manifest.samples.len());
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for r in &manifest.samples {
        let bytes = (r.length * width * 4) as u64;
        let end = r
            .offset
            .checked_add(bytes)
            .filter(|&e| e <= blob.len() as u64)
            .ok_or_else(|| {
                Error::format(
                    &blob_path,
                    format!(
                        "sample {}: bytes {}..{} lie beyond the {}-byte blob",
                        r.id,
                        r.offset,
                        r.offset.saturating_add(bytes),
                        blob.len()
                    ),
                )
            })?;
        spans.push((r.offset, end, &r.id));
        if r.length == 0 || width == 0 {
            return Err(Error::Data(format!("sample {}: empty feature tensor", r.id)));
        }
        let data: Vec<f32> = blob[r.offset as usize..end as usize]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        samples.push(PoseSample {
            id: r.id.clone(),
            actor: r.actor.clone(),
            label: r.label,
            split: r.split,
            features: Tensor::new(vec![r.length, width], data)?,
        });
    }
    spans.sort_unstable();
    for pair in spans.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(Error::format(
                &blob_path,
                format!("samples {} and {} overlap", pair[0].2, pair[1].2),
            ));
        }
    }

    let dataset = Dataset {
        detector: manifest.detector,
        class_names: manifest.class_names,
        features: width,
        samples,
    };
    dataset.validate()?;
    Ok(dataset)
}
