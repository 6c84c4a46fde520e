//! The "MSF1" tensor container.
//!
//! Layout: magic `MSF1`, `u32` rank, `rank` x `u32` dims, then the payload as
//! little-endian `f32` in row-major order. All integers are little-endian.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MSF1";
pub const MAX_RANK: usize = 4;

/// Dense `f32` array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl RawTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n = element_count(&dims)?;
        if n != data.len() {
            return Err(Error::Tensor(format!(
                "dims {dims:?} hold {n} values, got {}",
                data.len()
            )));
        }
        Ok(RawTensor { dims, data })
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Tensor(format!("dims {dims:?} overflow")))
}

/// Size in bytes of an encoded tensor.
pub fn encoded_len(dims: &[usize]) -> Result<usize> {
    let n = element_count(dims)?;
    n.checked_mul(4)
        .and_then(|p| p.checked_add(8 + 4 * dims.len()))
        .ok_or_else(|| Error::Tensor(format!("dims {dims:?} overflow")))
}

pub fn encode(dims: &[usize], data: &[f32]) -> Result<Vec<u8>> {
    if dims.len() > MAX_RANK {
        return Err(Error::Tensor(format!(
            "rank {} exceeds {MAX_RANK}",
            dims.len()
        )));
    }
    if element_count(dims)? != data.len() {
        return Err(Error::Tensor(format!(
            "dims {dims:?} do not match {} values",
            data.len()
        )));
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("tensor element {i}")));
    }
    let mut out = Vec::with_capacity(encoded_len(dims)?);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Tensor(format!("dim {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<RawTensor> {
    if bytes.len() < 8 {
        return Err(Error::Tensor("truncated header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Tensor(format!("bad magic {:?}", &bytes[..4])));
    }
    let word =
        |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
    let rank = word(4) as usize;
    if rank > MAX_RANK {
        return Err(Error::Tensor(format!("rank {rank} exceeds {MAX_RANK}")));
    }
    if bytes.len() < 8 + 4 * rank {
        return Err(Error::Tensor("truncated dims".into()));
    }
    let dims: Vec<usize> = (0..rank).map(|i| word(8 + 4 * i) as usize).collect();
    let expected = encoded_len(&dims)?;
    if bytes.len() != expected {
        return Err(Error::Tensor(format!(
            "payload is {} bytes, dims {dims:?} need {expected}",
            bytes.len()
        )));
    }
    let data = bytes[8 + 4 * rank..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(RawTensor { dims, data })
}
