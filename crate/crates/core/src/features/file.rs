//! `.ft` feature files: magic `FT01`, u32 LE dim count (always 4), four u32
//! LE dims, then f32 LE values in (batch, height, width, channels) order.

use std::io::Write;
use std::path::Path;

use super::FeatureTensor;
use crate::{Error, Result};

pub const FT_MAGIC: &[u8; 4] = b"FT01";
const HEADER_LEN: usize = 4 + 4 + 4 * 4;

pub fn encode_features(t: &FeatureTensor) -> Result<Vec<u8>> {
    if let Some(i) = t.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite feature at index {i}")));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t.data().len());
    out.extend_from_slice(FT_MAGIC);
    out.extend_from_slice(&4u32.to_le_bytes());
    for d in t.dims() {
        let d = u32::try_from(d)
            .map_err(|_| Error::invalid(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn write_features(t: &FeatureTensor, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_features(t)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

fn u32_at(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4-byte slice")))
        .ok_or_else(|| Error::format(offset as u64, "truncated header"))
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureTensor> {
    match bytes.get(..4) {
        Some(m) if m == FT_MAGIC => {}
        Some(_) => return Err(Error::format(0, "bad magic, expected FT01")),
        None => return Err(Error::format(0, "truncated header")),
    }
    let ndim = u32_at(bytes, 4)?;
    if ndim != 4 {
        return Err(Error::format(4, format!("dim count {ndim}, expected 4")));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = u32_at(bytes, 8 + 4 * i)? as usize;
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4).map(|_| n))
        .ok_or_else(|| Error::format(8, format!("dims {dims:?} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    let expected = count * 4;
    if payload.len() < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!(
                "truncated payload: dims {dims:?} need {expected} bytes, found {}",
                payload.len()
            ),
        ));
    }
    if payload.len() > expected {
        return Err(Error::format(
            (HEADER_LEN + expected) as u64,
            format!("{} trailing bytes", payload.len() - expected),
        ));
    }
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(Error::format(
                (HEADER_LEN + 4 * i) as u64,
                "non-finite value",
            ));
        }
        data.push(v);
    }
    FeatureTensor::new(dims, data)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    decode_features(&std::fs::read(path)?)
}
