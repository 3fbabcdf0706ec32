//! `CTCK` parameter store files.
//!
//! Layout (little-endian): magic `CTCK`, version `u16`, parameter count `u32`, then per
//! parameter the name length `u16` and UTF-8 name, rank `u8`, each dim as `u32`, and the
//! data as `f32`. A trailing block holds a `u32` byte length and UTF-8 text describing
//! the model that owns the parameters.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use super::{ParamStore, Real, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CTCK";
pub const VERSION: u16 = 1;

/// Parameters as stored on disk plus the free-form model description.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: Vec<(String, Tensor<f32>)>,
    pub model_block: String,
}

impl Checkpoint {
    pub fn from_store<T: Real>(store: &ParamStore<T>, model_block: impl Into<String>) -> Self {
        let params = store.iter().map(|p| (p.name.clone(), p.tensor.cast())).collect();
        Self { params, model_block: model_block.into() }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            let n = u16::try_from(name.len()).map_err(|_| Error::Contract(format!("parameter name too long: {name}")))?;
            out.extend_from_slice(&n.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let rank = u8::try_from(t.rank()).map_err(|_| Error::Contract(format!("rank too large for {name}")))?;
            out.push(rank);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.model_block.len() as u32).to_le_bytes());
        out.extend_from_slice(self.model_block.as_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::format(path, msg.to_string());
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("not a CTCK checkpoint (bad magic)"));
        }
        let version = read_u16(&mut r).ok_or_else(|| bad("truncated header"))?;
        if version != VERSION {
            return Err(bad(&format!("unsupported checkpoint version {version}")));
        }
        let count = read_u32(&mut r).ok_or_else(|| bad("truncated header"))?;
        let mut params = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let n = read_u16(&mut r).ok_or_else(|| bad("truncated parameter"))? as usize;
            let mut name = vec![0u8; n];
            r.read_exact(&mut name).map_err(|_| bad("truncated parameter name"))?;
            let name = String::from_utf8(name).map_err(|_| bad("parameter name is not UTF-8"))?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank).map_err(|_| bad("truncated parameter"))?;
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                shape.push(read_u32(&mut r).ok_or_else(|| bad("truncated dims"))? as usize);
            }
            let len: usize = shape.iter().product();
            let mut raw = vec![0u8; len * 4];
            r.read_exact(&mut raw).map_err(|_| bad("truncated parameter data"))?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            params.push((name, Tensor::new(&shape, data)?));
        }
        let n = read_u32(&mut r).ok_or_else(|| bad("missing model block"))? as usize;
        let mut block = vec![0u8; n];
        r.read_exact(&mut block).map_err(|_| bad("truncated model block"))?;
        let model_block = String::from_utf8(block).map_err(|_| bad("model block is not UTF-8"))?;
        Ok(Self { params, model_block })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

fn read_u16(r: &mut impl Read) -> Option<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b).ok()?;
    Some(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Option<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).ok()?;
    Some(u32::from_le_bytes(b))
}
