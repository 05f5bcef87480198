//! Binary feature files: `"FEAT"`, kind tag `u8`, rows `u32`, cols `u32`,
//! then row-major little-endian `f32` values. One file per segment, named
//! `<utt_id>__<segment_index>.feat`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FEAT";
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

pub fn file_name(source_id: &str, segment_index: usize) -> String {
    format!("{source_id}__{segment_index}.feat")
}

/// Splits `<utt_id>__<segment_index>.feat` into its parts.
pub fn parse_file_name(name: &str) -> Option<(&str, usize)> {
    let stem = name.strip_suffix(".feat")?;
    let (id, idx) = stem.rsplit_once("__")?;
    Some((id, idx.parse().ok()?))
}

pub fn encode(f: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * f.values().len());
    out.extend_from_slice(MAGIC);
    out.push(f.kind().tag());
    out.extend_from_slice(&(f.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(f.cols() as u32).to_le_bytes());
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], source_id: &str, segment_index: usize) -> Result<FeatureMatrix> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format("not a feature file (bad magic)"));
    }
    let kind = FeatureKind::from_tag(bytes[4])?;
    let rows = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes")) as usize;
    if (rows, cols) != kind.dims() {
        return Err(Error::format(format!(
            "{} feature file declares {rows}x{cols}",
            kind.name()
        )));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != rows * cols * 4 {
        return Err(Error::format(format!(
            "feature file body has {} bytes, expected {}",
            body.len(),
            rows * cols * 4
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    FeatureMatrix::new(kind, values, source_id, segment_index)
}

/// Writes via a temporary sibling and a rename so readers never see a
/// partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::file(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::file(&tmp, e))?;
    f.sync_all().map_err(|e| Error::file(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::file(path, e))
}

/// Writes `f` into `dir` under its canonical name and returns the path.
pub fn write(dir: &Path, f: &FeatureMatrix) -> Result<PathBuf> {
    let path = dir.join(file_name(&f.source_id, f.segment_index));
    write_atomic(&path, &encode(f))?;
    Ok(path)
}

/// Reads a feature file; utterance id and segment index come from its name.
pub fn read(path: &Path) -> Result<FeatureMatrix> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    let (id, idx) = parse_file_name(name).ok_or_else(|| {
        Error::format(format!(
            "{} is not named <utt>__<index>.feat",
            path.display()
        ))
    })?;
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode(&bytes, id, idx).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// All segments of one utterance in `dir`, ordered by segment index.
pub fn read_utterance(dir: &Path, source_id: &str) -> Result<Vec<FeatureMatrix>> {
    let mut out = Vec::new();
    for idx in 0.. {
        let path = dir.join(file_name(source_id, idx));
        if !path.exists() {
            break;
        }
        out.push(read(&path)?);
    }
    if out.is_empty() {
        return Err(Error::invalid(format!(
            "no feature files for {source_id} in {}",
            dir.display()
        )));
    }
    Ok(out)
}
