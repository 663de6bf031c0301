//! Versioned binary serialization for tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"LCTB"
//! version u32            (currently 1)
//! rank    u32
//! extents u64 * rank
//! payload f64 * prod(extents), row-major
//! ```

use super::tensor::Tensor;
use std::fmt;
use std::io::{Read, Write};

const MAGIC: [u8; 4] = *b"LCTB";
const VERSION: u32 = 1;

/// Sanity bound so a corrupted header cannot ask for a huge allocation.
const MAX_RANK: u32 = 16;
const MAX_NUMEL: u64 = 1 << 32;

#[derive(Debug)]
pub enum BlobError {
    Io(std::io::Error),
    BadMagic([u8; 4]),
    UnsupportedVersion(u32),
    CorruptHeader(String),
    NonFinite,
}

impl fmt::Display for BlobError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlobError::Io(e) => write!(f, "tensor blob i/o error: {e}"),
            BlobError::BadMagic(m) => write!(f, "tensor blob has bad magic {m:?}"),
            BlobError::UnsupportedVersion(v) => write!(f, "tensor blob version {v} unsupported"),
            BlobError::CorruptHeader(why) => write!(f, "tensor blob header corrupt: {why}"),
            BlobError::NonFinite => write!(f, "tensor blob payload contains non-finite values"),
        }
    }
}

impl std::error::Error for BlobError {}

impl From<std::io::Error> for BlobError {
    fn from(e: std::io::Error) -> Self {
        BlobError::Io(e)
    }
}

pub fn write_blob<W: Write>(tensor: &Tensor, w: &mut W) -> Result<(), BlobError> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
    for &e in tensor.shape() {
        w.write_all(&(e as u64).to_le_bytes())?;
    }
    for &v in tensor.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_blob<R: Read>(r: &mut R) -> Result<Tensor, BlobError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(BlobError::BadMagic(magic));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(BlobError::UnsupportedVersion(version));
    }
    let rank = read_u32(r)?;
    if rank > MAX_RANK {
        return Err(BlobError::CorruptHeader(format!("rank {rank} exceeds {MAX_RANK}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut numel: u64 = 1;
    for _ in 0..rank {
        let e = read_u64(r)?;
        numel = numel.saturating_mul(e.max(1));
        if numel > MAX_NUMEL {
            return Err(BlobError::CorruptHeader(format!("{numel} elements exceed bound")));
        }
        shape.push(e as usize);
    }
    let count: usize = shape.iter().product();
    let mut data = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(BlobError::NonFinite);
    }
    Ok(Tensor::new(shape, data))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, BlobError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, BlobError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
