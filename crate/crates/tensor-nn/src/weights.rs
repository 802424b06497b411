//! Binary weights file.
//!
//! ```text
//! "PNET"            4 bytes magic
//! u16 version       = 1
//! u16 layer count
//! u32 meta length, then that many bytes of UTF-8 `key=value` lines
//! per layer:
//!   u8  kind tag    1 conv, 2 batch norm, 3 relu, 4 sigmoid, 5 max pool
//!   u32 shape       conv: in | out << 8 | groups << 16 | 3 << 24
//!                   batch norm: channels; max pool: factor; activations: 0
//!   f32 reals       conv: weights, bias
//!                   batch norm: gamma, beta, running mean, running var
//! u32 CRC-32 of every byte after the 8-byte fixed header
//! ```
//! All integers and reals are little-endian.

use std::collections::BTreeMap;

use crate::{Activation, BatchNormLayer, ConvLayer, Layer, MaxPool, NnError, Result, Sequential};

pub const MAGIC: [u8; 4] = *b"PNET";
pub const VERSION: u16 = 1;

const TAG_CONV: u8 = 1;
const TAG_BN: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_SIGMOID: u8 = 4;
const TAG_POOL: u8 = 5;

pub const KEY_BN_EPSILON: &str = "bn_epsilon";
pub const KEY_BN_MOMENTUM: &str = "bn_momentum";

/// Free-form `key=value` metadata stored next to the layers.
pub type Metadata = BTreeMap<String, String>;

fn put_reals(out: &mut Vec<u8>, vals: &[f32]) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes `net` and `meta`. Batch-norm epsilon and momentum are added to
/// the metadata; every batch-norm layer must share them.
pub fn save(net: &Sequential<f32>, meta: &Metadata) -> Result<Vec<u8>> {
    let mut meta = meta.clone();
    let mut bn_hyper: Option<(f32, f32)> = None;
    for layer in &net.layers {
        if let Layer::BatchNorm(b) = layer {
            match bn_hyper {
                None => bn_hyper = Some((b.epsilon, b.momentum)),
                Some(h) if h != (b.epsilon, b.momentum) => {
                    return Err(NnError::Config("batch-norm layers disagree on epsilon/momentum".into()))
                }
                _ => {}
            }
        }
    }
    if let Some((eps, mom)) = bn_hyper {
        meta.insert(KEY_BN_EPSILON.into(), format!("{eps:e}"));
        meta.insert(KEY_BN_MOMENTUM.into(), format!("{mom:e}"));
    }
    let mut meta_text = String::new();
    for (k, v) in &meta {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(NnError::Config(format!("metadata entry {k:?} is not line-safe")));
        }
        meta_text.push_str(k);
        meta_text.push('=');
        meta_text.push_str(v);
        meta_text.push('\n');
    }
    let layer_count = u16::try_from(net.layers.len())
        .map_err(|_| NnError::Config("too many layers".into()))?;

    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&layer_count.to_le_bytes());
    out.extend_from_slice(&(meta_text.len() as u32).to_le_bytes());
    out.extend_from_slice(meta_text.as_bytes());
    for layer in &net.layers {
        match layer {
            Layer::Conv(c) => {
                for v in [c.in_channels, c.out_channels, c.groups] {
                    if v > 255 {
                        return Err(NnError::Config(format!("conv extent {v} does not fit the shape header")));
                    }
                }
                out.push(TAG_CONV);
                out.extend_from_slice(&[c.in_channels as u8, c.out_channels as u8, c.groups as u8, 3]);
                put_reals(&mut out, c.weights.data());
                put_reals(&mut out, &c.bias);
            }
            Layer::BatchNorm(b) => {
                out.push(TAG_BN);
                out.extend_from_slice(&(b.channels() as u32).to_le_bytes());
                put_reals(&mut out, &b.gamma);
                put_reals(&mut out, &b.beta);
                put_reals(&mut out, &b.running_mean);
                put_reals(&mut out, &b.running_var);
            }
            Layer::Activation(a) => {
                out.push(match a {
                    Activation::Relu => TAG_RELU,
                    Activation::Sigmoid => TAG_SIGMOID,
                });
                out.extend_from_slice(&0u32.to_le_bytes());
            }
            Layer::MaxPool(p) => {
                out.push(TAG_POOL);
                out.extend_from_slice(&(p.factor as u32).to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out[8..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            NnError::Truncated(format!("{what} needs {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn reals(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let raw = self.take(n * 4, what)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn parse_meta(text: &str) -> Result<Metadata> {
    let mut meta = Metadata::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| NnError::Malformed(format!("metadata line {line:?} lacks '='")))?;
        meta.insert(k.to_string(), v.to_string());
    }
    Ok(meta)
}

pub fn load(bytes: &[u8]) -> Result<(Sequential<f32>, Metadata)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(NnError::BadMagic { expected: MAGIC, found: magic });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(NnError::Version(version));
    }
    let layer_count = r.u16("layer count")?;
    if bytes.len() < 12 {
        return Err(NnError::Truncated("file shorter than header and checksum".into()));
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let mut r = Reader { bytes: &bytes[..body_end], pos: r.pos };

    let meta_len = r.u32("metadata length")? as usize;
    let meta_text = std::str::from_utf8(r.take(meta_len, "metadata")?)
        .map_err(|e| NnError::Malformed(format!("metadata is not UTF-8: {e}")))?;
    let meta = parse_meta(meta_text)?;
    let parse_hyper = |key: &str, default: f64| -> Result<f32> {
        meta.get(key)
            .map(|v| v.parse::<f32>().map_err(|e| NnError::Malformed(format!("{key}: {e}"))))
            .unwrap_or(Ok(default as f32))
    };
    let eps = parse_hyper(KEY_BN_EPSILON, crate::batchnorm::DEFAULT_EPSILON)?;
    let momentum = parse_hyper(KEY_BN_MOMENTUM, crate::batchnorm::DEFAULT_MOMENTUM)?;

    let mut layers = Vec::with_capacity(layer_count as usize);
    for i in 0..layer_count {
        let tag = r.u8("layer tag")?;
        let shape = r.u32("layer shape")?;
        let layer = match tag {
            TAG_CONV => {
                let b = shape.to_le_bytes();
                let (cin, cout, groups) = (b[0] as usize, b[1] as usize, b[2] as usize);
                if b[3] != 3 || groups == 0 || cin % groups != 0 || cout % groups != 0 {
                    return Err(NnError::Malformed(format!("layer {i}: bad conv shape {b:?}")));
                }
                let weights = r.reals(cout * (cin / groups) * 9, "conv weights")?;
                let bias = r.reals(cout, "conv bias")?;
                Layer::Conv(ConvLayer::from_parts(cin, cout, groups, weights, bias)?)
            }
            TAG_BN => {
                let c = shape as usize;
                let mut bn = BatchNormLayer::with_hyper(c, eps, momentum);
                bn.gamma = r.reals(c, "gamma")?;
                bn.beta = r.reals(c, "beta")?;
                bn.running_mean = r.reals(c, "running mean")?;
                bn.running_var = r.reals(c, "running var")?;
                Layer::BatchNorm(bn)
            }
            TAG_RELU => Layer::Activation(Activation::Relu),
            TAG_SIGMOID => Layer::Activation(Activation::Sigmoid),
            TAG_POOL => Layer::MaxPool(MaxPool::new(shape as usize)?),
            other => return Err(NnError::Malformed(format!("layer {i}: unknown tag {other}"))),
        };
        layers.push(layer);
    }
    if r.pos != body_end {
        return Err(NnError::Malformed(format!("{} trailing bytes before checksum", body_end - r.pos)));
    }
    let computed = crc32fast::hash(&bytes[8..body_end]);
    if computed != stored {
        return Err(NnError::Checksum { stored, computed });
    }
    Ok((Sequential::new(layers), meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn net() -> Sequential<f32> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut bn = BatchNormLayer::new(4);
        bn.running_mean = vec![0.1, 0.2, 0.3, 0.4];
        bn.running_var = vec![1.5, 0.5, 2.0, 0.25];
        Sequential::new(vec![
            Layer::Conv(ConvLayer::init(2, 4, 2, &mut rng).unwrap()),
            Layer::BatchNorm(bn),
            Layer::Activation(Activation::Relu),
            Layer::MaxPool(MaxPool::new(2).unwrap()),
            Layer::Conv(ConvLayer::init(4, 1, 1, &mut rng).unwrap()),
            Layer::Activation(Activation::Sigmoid),
        ])
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut meta = Metadata::new();
        meta.insert("w".into(), "16".into());
        let bytes = save(&net(), &meta).unwrap();
        let (back, meta_back) = load(&bytes).unwrap();
        assert_eq!(back, net());
        assert_eq!(meta_back["w"], "16");
        assert_eq!(save(&back, &meta_back).unwrap(), bytes);
    }

    #[test]
    fn detects_corruption() {
        let bytes = save(&net(), &Metadata::new()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(load(&bad), Err(NnError::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(load(&bad), Err(NnError::Version(2))));
        assert!(matches!(load(&bytes[..bytes.len() - 40]), Err(NnError::Truncated(_)) | Err(NnError::Checksum { .. })));
        assert!(matches!(load(&bytes[..6]), Err(NnError::Truncated(_))));
        let mut bad = bytes.clone();
        let mid = bytes.len() / 2;
        bad[mid] ^= 0x40;
        assert!(load(&bad).is_err());
    }
}
