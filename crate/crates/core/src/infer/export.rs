//! Introspection exports.
//!
//! Matrices are written as `ACTBLOB v1` files: text header lines
//!
//! ```text
//! ACTBLOB v1
//! name <name>
//! dims <d0> <d1> ...
//! labels <label0> <label1> ...
//! end_header
//! ```
//!
//! followed by `Π dims` little-endian f32 values, row-major. Curves are CSV
//! with the header `retained_frames,balanced_accuracy`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::CurvePoint;

pub const BLOB_MAGIC: &str = "ACTBLOB v1";
const CURVE_HEADER: &str = "retained_frames,balanced_accuracy";

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub name: String,
    pub dims: Vec<usize>,
    /// One label per axis, e.g. `layer head row col`.
    pub labels: Vec<String>,
    pub data: Vec<f32>,
}

pub fn write_blob(path: impl AsRef<Path>, blob: &Blob) -> Result<()> {
    let path = path.as_ref();
    if blob.dims.iter().product::<usize>() != blob.data.len() || blob.labels.len() != blob.dims.len() {
        return Err(Error::Shape {
            op: "write_blob",
            lhs: blob.dims.clone(),
            rhs: vec![blob.data.len()],
        });
    }
    if blob.name.contains(char::is_whitespace) || blob.labels.iter().any(|l| l.contains(char::is_whitespace)) {
        return Err(Error::Parameter(
            "blob names and labels must not contain whitespace".into(),
        ));
    }
    let join = |v: Vec<String>| v.join(" ");
    let header = format!(
        "{BLOB_MAGIC}\nname {}\ndims {}\nlabels {}\nend_header\n",
        blob.name,
        join(blob.dims.iter().map(usize::to_string).collect()),
        join(blob.labels.clone()),
    );
    let mut bytes = header.into_bytes();
    for v in &blob.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_blob(path: impl AsRef<Path>) -> Result<Blob> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::format(path, m.to_string());
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("unterminated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("header is not text"))?;
        pos += end + 1;
        Ok(line)
    };
    let magic = next_line()?;
    if magic != BLOB_MAGIC {
        return Err(Error::Version {
            what: "blob",
            expected: BLOB_MAGIC.into(),
            found: magic.into(),
        });
    }
    let (mut name, mut dims, mut labels) = (None, None, None);
    loop {
        let line = next_line()?;
        if line == "end_header" {
            break;
        }
        let (key, value) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "name" => name = Some(value.to_string()),
            "dims" => {
                dims = Some(
                    value
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<std::result::Result<Vec<usize>, _>>()
                        .map_err(|_| bad("invalid dims"))?,
                )
            }
            "labels" => labels = Some(value.split_whitespace().map(String::from).collect()),
            _ => return Err(bad(&format!("unknown header key {key:?}"))),
        }
    }
    let dims: Vec<usize> = dims.ok_or_else(|| bad("missing dims"))?;
    let payload = &bytes[pos..];
    let count: usize = dims.iter().product();
    if payload.len() != count * 4 {
        return Err(bad(&format!(
            "payload holds {} bytes, dims need {}",
            payload.len(),
            count * 4
        )));
    }
    Ok(Blob {
        name: name.ok_or_else(|| bad("missing name"))?,
        labels: labels.ok_or_else(|| bad("missing labels"))?,
        dims,
        data: payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    })
}

pub fn write_curve(path: impl AsRef<Path>, curve: &[CurvePoint]) -> Result<()> {
    let path = path.as_ref();
    let mut text = format!("{CURVE_HEADER}\n");
    for p in curve {
        text += &format!("{},{}\n", p.retained_frames, p.balanced_accuracy);
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_curve(path: impl AsRef<Path>) -> Result<Vec<CurvePoint>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::format(path, format!("expected header {CURVE_HEADER:?}")));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let parsed = l
                .split_once(',')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)));
            let (retained_frames, balanced_accuracy) =
                parsed.ok_or_else(|| Error::format(path, format!("bad curve row {l:?}")))?;
            Ok(CurvePoint {
                retained_frames,
                balanced_accuracy,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.blob");
        let blob = Blob {
            name: "attention".into(),
            dims: vec![2, 1, 3, 3],
            labels: vec!["layer".into(), "head".into(), "row".into(), "col".into()],
            data: (0..18).map(|i| i as f32 / 7.0).collect(),
        };
        write_blob(&path, &blob).unwrap();
        assert_eq!(read_blob(&path).unwrap(), blob);
    }

    #[test]
    fn curve_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let curve = vec![
            CurvePoint {
                retained_frames: 2,
                balanced_accuracy: 0.8125,
            },
            CurvePoint {
                retained_frames: 1,
                balanced_accuracy: 0.1,
            },
        ];
        write_curve(&path, &curve).unwrap();
        assert_eq!(read_curve(&path).unwrap(), curve);
    }
}
