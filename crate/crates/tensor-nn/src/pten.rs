//! `.pten` tensor files: magic "PTEN", u16 version 1, u8 dtype (0 = f32),
//! u8 rank, u32 dims[rank], then the little-endian payload in channel-major
//! planar order.

use std::fs;
use std::path::Path;

use crate::{NnError, Result, TensorBuffer};

pub const MAGIC: [u8; 4] = *b"PTEN";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;

pub fn encode(t: &TensorBuffer<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.push(t.rank() as u8);
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<TensorBuffer<f32>> {
    if bytes.len() < 8 {
        return Err(NnError::Truncated("pten header".into()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(NnError::BadMagic { expected: MAGIC, found: magic });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(NnError::Version(version));
    }
    if bytes[6] != DTYPE_F32 {
        return Err(NnError::Malformed(format!("unsupported dtype {}", bytes[6])));
    }
    let rank = bytes[7] as usize;
    let header = 8 + 4 * rank;
    if bytes.len() < header {
        return Err(NnError::Truncated("pten dims".into()));
    }
    let dims: Vec<usize> = bytes[8..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() != count * 4 {
        return Err(NnError::Truncated(format!(
            "pten payload holds {} bytes, dims {dims:?} need {}",
            payload.len(),
            count * 4
        )));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    TensorBuffer::from_vec(&dims, data)
}

pub fn write(path: impl AsRef<Path>, t: &TensorBuffer<f32>) -> Result<()> {
    fs::write(path, encode(t))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<TensorBuffer<f32>> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = TensorBuffer::from_vec(&[1, 2], vec![1.0f32, -0.5]).unwrap();
        let b = encode(&t);
        assert_eq!(&b[..4], b"PTEN");
        assert_eq!(&b[4..8], &[1, 0, 0, 2]);
        assert_eq!(&b[8..16], &[1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&b[16..20], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 24);
    }

    #[test]
    fn rejects_damage() {
        let t = TensorBuffer::from_vec(&[3], vec![1.0f32, 2.0, 3.0]).unwrap();
        let b = encode(&t);
        assert!(decode(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[1] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = b;
        bad[6] = 1;
        assert!(decode(&bad).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(dims in proptest::collection::vec(1usize..5, 1..=4), seed in any::<u32>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n).map(|i| f32::from_bits((i as u32).wrapping_mul(2654435761) ^ seed) ).map(|v| if v.is_nan() { 0.0 } else { v }).collect();
            let t = TensorBuffer::from_vec(&dims, data).unwrap();
            prop_assert_eq!(decode(&encode(&t)).unwrap(), t);
        }
    }
}
