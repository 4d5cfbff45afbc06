//! On-disk segment store.
//!
//! A store is a directory holding `segments.bin` and, when the segments were
//! normalized, `norm_stats.txt`. The binary layout:
//!
//! ```text
//! "ECGS"                magic
//! u16                   format version
//! u32                   segment count n
//! u32                   segment length L
//! u8                    1 if normalized, else 0
//! u8 + bytes            class codes, one ASCII byte each
//! f32 × n·L             values, segment after segment
//! u8 × n                class index per segment
//! u32                   CRC-32 of everything above
//! ```
//!
//! Integers and floats are little-endian.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ingest::{LabelScheme, NormScope, NormStats, Segment};
use crate::kv::KvMap;
use crate::training::Dataset;

pub const MAGIC: &[u8; 4] = b"ECGS";
pub const FORMAT_VERSION: u16 = 1;
pub const SEGMENTS_FILE: &str = "segments.bin";
pub const NORM_FILE: &str = "norm_stats.txt";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] io::Error),
    #[error("not a segment store (bad magic)")]
    BadMagic,
    #[error("segment store version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("segment store is truncated")]
    Truncated,
    #[error("segment store checksum mismatch: stored {stored:08x}, computed {actual:08x}")]
    ChecksumMismatch { stored: u32, actual: u32 },
    #[error("corrupt segment store: {0}")]
    Corrupt(String),
    #[error("cannot store dataset: {0}")]
    Unstorable(String),
}

pub fn encode(data: &Dataset) -> Result<Vec<u8>, StoreError> {
    let len = data.segment_len().unwrap_or(0);
    let normalized = data.segments.first().is_some_and(|s| s.normalized);
    if data.segments.iter().any(|s| s.normalized != normalized) {
        return Err(StoreError::Unstorable("mix of normalized and raw segments".into()));
    }
    let codes = data.scheme.codes();
    if codes.len() > u8::MAX as usize || codes.iter().any(|c| !c.is_ascii()) {
        return Err(StoreError::Unstorable(format!("label scheme {} does not fit one byte per code", data.scheme)));
    }
    let mut buf = Vec::with_capacity(24 + data.len() * (4 * len + 1));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(data.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(len as u32).to_le_bytes());
    buf.push(u8::from(normalized));
    buf.push(codes.len() as u8);
    buf.extend(codes.iter().map(|&c| c as u8));
    for s in &data.segments {
        for &v in &s.values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf.extend(data.segments.iter().map(|s| s.label.index as u8));
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], StoreError> {
    let end = pos.checked_add(n).filter(|&e| e <= buf.len()).ok_or(StoreError::Truncated)?;
    let out = &buf[*pos..end];
    *pos = end;
    Ok(out)
}

fn u32_at(buf: &[u8], pos: &mut usize) -> Result<u32, StoreError> {
    Ok(u32::from_le_bytes(take(buf, pos, 4)?.try_into().unwrap()))
}

/// Segments come back with ids `<prefix>#<index>`.
pub fn decode(buf: &[u8], prefix: &str) -> Result<Dataset, StoreError> {
    let mut pos = 0;
    if take(buf, &mut pos, 4)? != MAGIC {
        return Err(StoreError::BadMagic);
    }
    let version = u16::from_le_bytes(take(buf, &mut pos, 2)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(StoreError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let n = u32_at(buf, &mut pos)? as usize;
    let len = u32_at(buf, &mut pos)? as usize;
    let normalized = match take(buf, &mut pos, 1)?[0] {
        0 => false,
        1 => true,
        other => return Err(StoreError::Corrupt(format!("normalized flag {other}"))),
    };
    let k = take(buf, &mut pos, 1)?[0] as usize;
    let codes: Vec<char> = take(buf, &mut pos, k)?.iter().map(|&b| b as char).collect();
    let values_bytes = n
        .checked_mul(len)
        .and_then(|v| v.checked_mul(4))
        .ok_or(StoreError::Truncated)?;
    let raw = take(buf, &mut pos, values_bytes)?;
    let labels = take(buf, &mut pos, n)?;
    let body_end = pos;
    let stored = u32_at(buf, &mut pos)?;
    if pos != buf.len() {
        return Err(StoreError::Corrupt(format!("{} trailing bytes", buf.len() - pos)));
    }
    let actual = crc32fast::hash(&buf[..body_end]);
    if stored != actual {
        return Err(StoreError::ChecksumMismatch { stored, actual });
    }

    let scheme = LabelScheme::new(codes).map_err(|e| StoreError::Corrupt(e.to_string()))?;
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let segments = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let label = scheme
                .class(l as usize)
                .ok_or_else(|| StoreError::Corrupt(format!("segment {i}: label {l} outside {k} classes")))?;
            Ok(Segment {
                source_id: format!("{prefix}#{i}"),
                values: values[i * len..(i + 1) * len].to_vec(),
                label,
                normalized,
            })
        })
        .collect::<Result<Vec<_>, StoreError>>()?;
    Dataset::new(segments, scheme).map_err(|e| StoreError::Corrupt(e.to_string()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    fs::write(path, bytes).map_err(|e| StoreError::Io(path.to_path_buf(), e))
}

/// Writes the store into `dir`, creating it if needed.
pub fn write_store(dir: &Path, data: &Dataset, stats: Option<&NormStats>) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(|e| StoreError::Io(dir.to_path_buf(), e))?;
    write(&dir.join(SEGMENTS_FILE), &encode(data)?)?;
    if let Some(st) = stats {
        write(&dir.join(NORM_FILE), norm_stats_text(st, NormScope::All).as_bytes())?;
    }
    Ok(())
}

pub fn read_store(dir: &Path) -> Result<Dataset, StoreError> {
    let path = dir.join(SEGMENTS_FILE);
    let buf = fs::read(&path).map_err(|e| StoreError::Io(path.clone(), e))?;
    decode(&buf, &path.display().to_string())
}

pub fn norm_stats_text(stats: &NormStats, scope: NormScope) -> String {
    format!("mean = {}\nstd = {}\nscope = {scope}\n", stats.mean, stats.std)
}

pub fn parse_norm_stats(text: &str) -> Result<NormStats, StoreError> {
    let kv = KvMap::parse(text).map_err(|e| StoreError::Corrupt(e.to_string()))?;
    let get = |key: &str| kv.require::<f64>(key).map_err(|e| StoreError::Corrupt(e.to_string()));
    Ok(NormStats {
        mean: get("mean")?,
        std: get("std")?,
    })
}
