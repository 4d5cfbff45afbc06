//! Binary checkpoint format.
//!
//! ```text
//! "SEVL"                      magic
//! u16                         format version
//! u32 + bytes                 model config, canonical key-value text
//! u32                         parameter count
//! per parameter:
//!   u16 + bytes               name
//!   u8, u32 × rank            shape
//!   f32 × product(shape)      values
//! u32                         CRC-32 of everything above
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{ModelConfig, ModelError, ModelGraph};
use crate::kv::KvMap;

pub const MAGIC: &[u8; 4] = b"SEVL";
pub const FORMAT_VERSION: u16 = 1;

pub fn encode(model: &ModelGraph) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let cfg = model.config().to_kv_text();
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(cfg.as_bytes());
    let params = model.params();
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.rank() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(ModelError::Truncated)?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.bytes(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<ModelGraph, ModelError> {
    let mut r = Reader { buf, pos: 0 };
    if r.bytes(4)? != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let cfg_len = r.u32()? as usize;
    let cfg_text = std::str::from_utf8(r.bytes(cfg_len)?)
        .map_err(|_| ModelError::Corrupt("config block is not UTF-8".into()))?;
    let n_params = r.u32()? as usize;
    let mut records = Vec::with_capacity(n_params.min(1024));
    for _ in 0..n_params {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.bytes(name_len)?)
            .map_err(|_| ModelError::Corrupt("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or(ModelError::Truncated)?;
        let raw = r.bytes(count.checked_mul(4).ok_or(ModelError::Truncated)?)?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        records.push((name, shape, values));
    }
    let body_end = r.pos;
    let stored = r.u32()?;
    if r.pos != buf.len() {
        return Err(ModelError::Corrupt(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    let actual = crc32fast::hash(&buf[..body_end]);
    if stored != actual {
        return Err(ModelError::ChecksumMismatch { stored, actual });
    }

    let kv = KvMap::parse(cfg_text).map_err(|e| ModelError::Corrupt(format!("config block: {e}")))?;
    let config = ModelConfig::from_kv(&kv)?;
    let mut model = ModelGraph::build(&config, 0)?;
    let expected: Vec<(String, Vec<usize>)> = model
        .params()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if expected.len() != records.len() {
        return Err(ModelError::Corrupt(format!(
            "{} parameter records, config implies {}",
            records.len(),
            expected.len()
        )));
    }
    for ((exp_name, exp_shape), (name, shape, _)) in expected.iter().zip(&records) {
        if exp_name != name || exp_shape != shape {
            return Err(ModelError::Corrupt(format!(
                "parameter {name} {shape:?} where {exp_name} {exp_shape:?} was expected"
            )));
        }
    }
    for (dst, (_, _, values)) in model.params_mut().into_iter().zip(records) {
        dst.data_mut().copy_from_slice(&values);
    }
    Ok(model)
}

pub fn save_checkpoint(model: &ModelGraph, path: &Path) -> Result<(), ModelError> {
    fs::write(path, encode(model)).map_err(|e| ModelError::Io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelGraph, ModelError> {
    let buf = fs::read(path).map_err(|e| ModelError::Io(path.display().to_string(), e))?;
    decode(&buf)
}
