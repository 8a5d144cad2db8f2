//! Binary checkpoint format:
//!
//! ```text
//! "GTU1"  version:u8
//! count:u32
//! count × { name_len:u32 name:utf8  rank:u32 dims:u32×rank  data:f64×numel }
//! config_len:u32 config:json
//! ```
//!
//! All integers and scalars are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::config::GtUNetConfig;
use super::unet::GtUNet;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GTU1";
pub const VERSION: u8 = 1;

/// A decoded checkpoint entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode(model: &GtUNet) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    put_u32(&mut out, model.params().len())?;
    for (_, name, t) in model.params().iter() {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank())?;
        for &d in t.shape() {
            put_u32(&mut out, d)?;
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let config = serde_json::to_vec(model.config())?;
    put_u32(&mut out, config.len())?;
    out.extend_from_slice(&config);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("checkpoint truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

/// Parses the raw entries and configuration.
pub fn decode_entries(bytes: &[u8]) -> Result<(Vec<Entry>, GtUNetConfig)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("not a GTU1 checkpoint".into()));
    }
    let version = cur.take(1)?[0];
    if version != VERSION {
        return Err(Error::Unsupported(format!("checkpoint version {version}")));
    }
    let count = cur.u32()?;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = cur.u32()?;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u32()?;
        let shape = (0..rank).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = cur.take(numel.checked_mul(8).ok_or_else(|| Error::Format("entry too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        entries.push(Entry { name, shape, data });
    }
    let len = cur.u32()?;
    let config: GtUNetConfig = serde_json::from_slice(cur.take(len)?)?;
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok((entries, config))
}

pub fn decode(bytes: &[u8]) -> Result<GtUNet> {
    let (entries, config) = decode_entries(bytes)?;
    let mut model = GtUNet::new(config, 0)?;
    if entries.len() != model.params().len() {
        return Err(Error::Format(format!(
            "checkpoint has {} tensors, architecture has {}",
            entries.len(),
            model.params().len()
        )));
    }
    for e in entries {
        model.params_mut().load_values(&e.name, &e.shape, e.data)?;
    }
    Ok(model)
}

pub fn write<W: Write>(model: &GtUNet, mut w: W) -> Result<()> {
    w.write_all(&encode(model)?)?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<GtUNet> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn save(model: &GtUNet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(model)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<GtUNet> {
    decode(&std::fs::read(path)?)
}
