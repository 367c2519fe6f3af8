//! UTEN binary tensor serialization.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   4 bytes  "UTEN"
//! version u32      currently 1
//! rank    u32      at most MAX_RANK
//! extents u64 × rank
//! dtype   u8       0 = f32, 1 = f64
//! values  extent-product elements, row-major, little-endian
//! ```
//!
//! The decoder is total: any byte string either parses into a tensor or
//! returns a descriptive [`Error::Format`]. Header fields are validated
//! before any allocation, and the payload length must match the header
//! exactly (no trailing bytes), so decoding never allocates more than the
//! input size.

use super::{Dtype, Scalar, Tensor};
use crate::error::{Error, Result};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"UTEN";
pub const VERSION: u32 = 1;
pub const MAX_RANK: usize = 8;

/// A decoded tensor of either supported precision.
#[derive(Clone, Debug, PartialEq)]
pub enum DynTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl DynTensor {
    pub fn dtype(&self) -> Dtype {
        match self {
            DynTensor::F32(_) => Dtype::F32,
            DynTensor::F64(_) => Dtype::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            DynTensor::F32(t) => t.shape(),
            DynTensor::F64(t) => t.shape(),
        }
    }

    /// Require the stored precision to match `T` exactly.
    pub fn into_typed<T: Scalar>(self) -> Result<Tensor<T>> {
        if self.dtype() != T::DTYPE {
            return Err(Error::Format(format!(
                "tensor stored as {:?}, requested {:?}",
                self.dtype(),
                T::DTYPE
            )));
        }
        Ok(match self {
            DynTensor::F32(t) => t.cast::<T>(),
            DynTensor::F64(t) => t.cast::<T>(),
        })
    }

    /// Convert to `T`, rounding if precisions differ.
    pub fn convert<T: Scalar>(&self) -> Tensor<T> {
        match self {
            DynTensor::F32(t) => t.cast::<T>(),
            DynTensor::F64(t) => t.cast::<T>(),
        }
    }
}

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + t.shape().len() * 8 + t.len() * T::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &e in t.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    out.push(T::DTYPE.tag());
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated tensor: missing {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<DynTensor> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:02x?}, expected \"UTEN\"")));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported tensor format version {version} (expected {VERSION})"
        )));
    }
    let rank = cur.u32("rank")? as usize;
    if rank > MAX_RANK {
        return Err(Error::Format(format!("rank {rank} exceeds maximum {MAX_RANK}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut count: u64 = 1;
    for i in 0..rank {
        let e = cur.u64(&format!("extent {i}"))?;
        count = count
            .checked_mul(e)
            .ok_or_else(|| Error::Format("extent product overflows u64".into()))?;
        shape.push(usize::try_from(e).map_err(|_| Error::Format("extent exceeds usize".into()))?);
    }
    let count = usize::try_from(count).map_err(|_| Error::Format("element count exceeds usize".into()))?;
    let tag = cur.take(1, "dtype tag")?[0];
    let dtype = Dtype::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown dtype tag {tag}")))?;
    let need = count
        .checked_mul(dtype.size())
        .ok_or_else(|| Error::Format("payload size overflows usize".into()))?;
    let payload = cur.take(need, "values")?;
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensor payload",
            bytes.len() - cur.pos
        )));
    }
    Ok(match dtype {
        Dtype::F32 => DynTensor::F32(read_values::<f32>(&shape, payload, count)),
        Dtype::F64 => DynTensor::F64(read_values::<f64>(&shape, payload, count)),
    })
}

fn read_values<T: Scalar>(shape: &[usize], payload: &[u8], count: usize) -> Tensor<T> {
    let sz = T::DTYPE.size();
    let data = (0..count).map(|i| T::read_le(&payload[i * sz..])).collect();
    Tensor::from_vec(shape, data).expect("count matches shape by construction")
}

pub fn save<T: Scalar>(t: &Tensor<T>, path: &Path) -> Result<()> {
    crate::fsio::write_atomic(path, &encode(t))
}

pub fn load(path: &Path) -> Result<DynTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Load requiring the stored precision to be exactly `T`.
pub fn load_typed<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    load(path)?.into_typed::<T>()
}
