//! `ARTW` weight container: magic, version, six u32 dims, then every tensor
//! as row-major little-endian f32 in declaration order.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{ModelConfig, SegTransformer, LAYERS};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ARTW";
pub const VERSION: u32 = 1;

pub fn encode_weights(model: &SegTransformer) -> Vec<u8> {
    let c = model.config();
    let mut buf = Vec::with_capacity(32 + 4 * model.parameter_count());
    buf.extend_from_slice(MAGIC);
    let header = [
        VERSION,
        c.feature_heads as u32,
        c.feature_head_dim as u32,
        c.bands as u32,
        c.d_model as u32,
        c.attn_heads as u32,
        LAYERS as u32,
    ];
    for v in header {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for p in model.params() {
        for r in 0..p.nrows() {
            for col in 0..p.ncols() {
                buf.extend_from_slice(&(p[(r, col)] as f32).to_le_bytes());
            }
        }
    }
    buf
}

pub fn decode_weights(bytes: &[u8]) -> Result<SegTransformer> {
    let fail = |m: &str| Error::Format(format!("weights: {m}"));
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(fail("bad magic"));
    }
    let mut pos = 4;
    let mut u32_at = |what: &str| -> Result<u32> {
        let chunk = bytes.get(pos..pos + 4).ok_or_else(|| fail(&format!("truncated in {what}")))?;
        pos += 4;
        Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")))
    };
    let version = u32_at("version")?;
    if version != VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let dims: Vec<usize> = ["feature_heads", "feature_head_dim", "bands", "d_model", "attn_heads", "layers"]
        .iter()
        .map(|w| u32_at(w).map(|v| v as usize))
        .collect::<Result<_>>()?;
    if dims[5] != LAYERS {
        return Err(fail(&format!("{} layers, expected {LAYERS}", dims[5])));
    }
    let config = ModelConfig {
        feature_heads: dims[0],
        feature_head_dim: dims[1],
        bands: dims[2],
        d_model: dims[3],
        attn_heads: dims[4],
    };
    config.validate().map_err(|e| fail(&e.to_string()))?;
    let shapes = config.shapes();
    let expected: usize = shapes.iter().map(|(_, r, c)| r * c).sum::<usize>() * 4;
    let body = &bytes[pos..];
    if body.len() != expected {
        return Err(fail(&format!("tensor payload is {} bytes, dims need {expected}", body.len())));
    }
    let mut values = body.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))));
    let params = shapes
        .iter()
        .map(|(_, r, c)| DMatrix::from_row_iterator(*r, *c, values.by_ref().take(r * c)))
        .collect();
    SegTransformer::from_params(config, params).map_err(|e| fail(&e.to_string()))
}

pub fn save_weights(model: &SegTransformer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_weights(model)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<SegTransformer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}
