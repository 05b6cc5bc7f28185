//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    b"FLSHCK1\0"
//! version  u16
//! config   u32 length + UTF-8 TOML
//! step     u64
//! entries  u32 count, then per entry:
//!   name   u16 length + UTF-8
//!   kind   u8 (0 value, 1 first moment, 2 second moment)
//!   dims   u8 rank + u32 per axis
//!   data   f32 per element, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::config::TrainConfig;
use crate::element::Element;
use crate::error::{GenError, Result};
use crate::model::ModelState;

pub const MAGIC: &[u8; 8] = b"FLSHCK1\0";
pub const VERSION: u16 = 1;

const KIND_VALUE: u8 = 0;
const KIND_M: u8 = 1;
const KIND_V: u8 = 2;

fn put_f32s<T: Element>(out: &mut Vec<u8>, xs: &[T]) {
    for x in xs {
        out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
    }
}

/// Serializes the model. Values are stored as `f32`.
pub fn to_bytes<T: Element>(state: &ModelState<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = state.config.to_toml()?;
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(cfg.as_bytes());
    out.extend_from_slice(&state.step.to_le_bytes());

    let params = state.params();
    let count: usize = params.iter().map(|p| if p.trainable { 3 } else { 1 }).sum();
    out.extend_from_slice(&(count as u32).to_le_bytes());
    for p in params {
        let mut entries = vec![(KIND_VALUE, &p.value)];
        if p.trainable {
            entries.push((KIND_M, &p.m));
            entries.push((KIND_V, &p.v));
        }
        for (kind, data) in entries {
            out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.push(kind);
            out.push(p.shape.len() as u8);
            for &d in &p.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            put_f32s(&mut out, data);
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(GenError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize, what: &'static str) -> Result<String> {
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|e| GenError::Parse(e.to_string()))
    }
}

/// Reads the header only.
pub fn read_config(bytes: &[u8]) -> Result<TrainConfig> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    header(&mut c)
}

fn header(c: &mut Cursor) -> Result<TrainConfig> {
    if c.take(8, "magic").map_err(|_| GenError::BadMagic)? != MAGIC {
        return Err(GenError::BadMagic);
    }
    let version = c.u16("version")?;
    if version != VERSION {
        return Err(GenError::UnsupportedVersion(version));
    }
    let n = c.u32("config length")? as usize;
    let cfg = c.string(n, "config")?;
    TrainConfig::from_toml(&cfg)
}

/// Rebuilds a model from [`to_bytes`] output. Every tensor of the
/// architecture described by the stored config must be present exactly once.
pub fn from_bytes<T: Element>(bytes: &[u8]) -> Result<ModelState<T>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let config = header(&mut c)?;
    let mut state = ModelState::<T>::new(config)?;
    state.step = c.u64("step")?;
    let count = c.u32("entry count")? as usize;
    let mut seen = std::collections::HashSet::new();
    {
        let mut params = state.params_mut();
        for _ in 0..count {
            let len = c.u16("name length")? as usize;
            let name = c.string(len, "name")?;
            let kind = c.u8("kind")?;
            let rank = c.u8("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(c.u32("dims")? as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = c.take(numel * 4, "payload")?;
            let p = params
                .iter_mut()
                .find(|p| p.name == name)
                .ok_or_else(|| GenError::CheckpointMismatch(format!("unknown tensor {name}")))?;
            if p.shape != shape {
                return Err(GenError::CheckpointMismatch(format!(
                    "{name}: stored shape {shape:?}, model has {:?}",
                    p.shape
                )));
            }
            let dst = match (kind, p.trainable) {
                (KIND_VALUE, _) => &mut p.value,
                (KIND_M, true) => &mut p.m,
                (KIND_V, true) => &mut p.v,
                _ => return Err(GenError::CheckpointMismatch(format!("{name}: unexpected kind {kind}"))),
            };
            if !seen.insert((name.clone(), kind)) {
                return Err(GenError::CheckpointMismatch(format!("{name}: duplicate entry")));
            }
            for (d, b) in dst.iter_mut().zip(raw.chunks_exact(4)) {
                *d = T::cst(f32::from_le_bytes(b.try_into().unwrap()) as f64);
            }
        }
        let expected: usize = params.iter().map(|p| if p.trainable { 3 } else { 1 }).sum();
        if seen.len() != expected {
            return Err(GenError::CheckpointMismatch(format!(
                "{} of {expected} tensors present",
                seen.len()
            )));
        }
    }
    if c.pos != bytes.len() {
        return Err(GenError::CheckpointMismatch("trailing bytes".into()));
    }
    Ok(state)
}

pub fn write<T: Element>(state: &ModelState<T>, mut w: impl Write) -> Result<()> {
    w.write_all(&to_bytes(state)?)?;
    Ok(())
}

pub fn read<T: Element>(mut r: impl Read) -> Result<ModelState<T>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

pub fn save<T: Element>(state: &ModelState<T>, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(state)?)?;
    Ok(())
}

pub fn load<T: Element>(path: &Path) -> Result<ModelState<T>> {
    from_bytes(&std::fs::read(path)?)
}
