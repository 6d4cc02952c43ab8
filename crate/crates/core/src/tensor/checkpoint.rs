//! Named-parameter checkpoint encoding.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "SFATCKPT"
//! version  u32
//! dtype    u8       1 = f32, 2 = f64
//! reserved 3 bytes  zero
//! count    u32      number of entries
//! entry*   name_len u32, name utf-8, ndim u32, dims u64 × ndim,
//!          values dtype-sized × product(dims)
//! ```

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use super::{ParamStore, Tensor};
use crate::real::{DType, Real};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SFATCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("unknown dtype code {0}")]
    DType(u8),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("parameter name is not utf-8")]
    Name,
}

pub fn encode_checkpoint<T: Real>(params: &ParamStore<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + params.scalar_count() * T::DTYPE.size());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(T::DTYPE.code());
    out.extend_from_slice(&[0; 3]);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.values() {
            v.to_le_bytes_vec(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(a))
    }
}

/// Decodes a checkpoint, converting stored values to `T` when the dtypes differ.
pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<ParamStore<T>, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let code = r.take(4)?[0];
    let dtype = DType::from_code(code).ok_or(CheckpointError::DType(code))?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from(core::str::from_utf8(r.take(len)?).map_err(|_| CheckpointError::Name)?);
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel.checked_mul(dtype.size()).ok_or(CheckpointError::Truncated)?)?;
        let values: Vec<T> = raw
            .chunks(dtype.size())
            .map(|c| match dtype {
                DType::F32 => T::from_f64(f32::from_le_slice(c) as f64),
                DType::F64 => T::from_f64(f64::from_le_slice(c)),
            })
            .collect();
        let t = Tensor::new(&shape, values).map_err(|_| CheckpointError::Truncated)?;
        store.push(name, t);
    }
    Ok(store)
}
