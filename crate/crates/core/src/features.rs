//! Per-frame patch feature grids and the `ARFS` binary container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "ARFS" | version: u32
//! repeated until EOF:
//!   frame_id: u64 | stride: u32 | grid_h: u32 | grid_w: u32 | heads: u32 | head_dim: u32
//!   grid: f32 × (grid_h · grid_w · heads · head_dim), row-major y, then x, then channel
//!   cls:  f32 × (heads · head_dim)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::sfm::SfmReconstruction;

pub const MAGIC: &[u8; 4] = b"ARFS";
pub const VERSION: u32 = 1;

const HEADER_BYTES: usize = 8 + 5 * 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub frame_id: u64,
    pub stride: u32,
    pub grid_h: u32,
    pub grid_w: u32,
    pub heads: u32,
    pub head_dim: u32,
    /// `grid_h * grid_w * channels` values, y-major then x then channel.
    pub grid: Vec<f32>,
    pub cls: Vec<f32>,
}

impl FeatureFrame {
    pub fn channels(&self) -> usize {
        (self.heads * self.head_dim) as usize
    }

    pub fn cell(&self, y: usize, x: usize) -> &[f32] {
        let c = self.channels();
        let start = (y * self.grid_w as usize + x) * c;
        &self.grid[start..start + c]
    }

    fn check_shape(&self) -> Result<()> {
        let what = || format!("feature frame {}", self.frame_id);
        if self.heads == 0 || self.head_dim == 0 || self.stride == 0 {
            return Err(Error::integrity(what(), "heads, head_dim and stride must be >= 1"));
        }
        if self.grid_h == 0 || self.grid_w == 0 {
            return Err(Error::integrity(what(), "empty grid"));
        }
        let expected = self.grid_h as usize * self.grid_w as usize * self.channels();
        if self.grid.len() != expected || self.cls.len() != self.channels() {
            return Err(Error::integrity(what(), "grid or cls length does not match dims"));
        }
        Ok(())
    }
}

/// Feature grids for a set of frames sharing `(stride, heads, head_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    frames: BTreeMap<u64, FeatureFrame>,
    stride: u32,
    heads: u32,
    head_dim: u32,
}

impl FeatureStore {
    pub fn new(frames: Vec<FeatureFrame>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyInput("feature store has no frames"))?;
        let (stride, heads, head_dim) = (first.stride, first.heads, first.head_dim);
        let mut map = BTreeMap::new();
        for f in frames {
            f.check_shape()?;
            if (f.stride, f.heads, f.head_dim) != (stride, heads, head_dim) {
                return Err(Error::integrity(
                    format!("feature frame {}", f.frame_id),
                    "stride/heads/head_dim differ across frames",
                ));
            }
            let id = f.frame_id;
            if map.insert(id, f).is_some() {
                return Err(Error::integrity(format!("feature frame {id}"), "duplicate frame"));
            }
        }
        Ok(FeatureStore {
            frames: map,
            stride,
            heads,
            head_dim,
        })
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn heads(&self) -> usize {
        self.heads as usize
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim as usize
    }

    pub fn channels(&self) -> usize {
        self.heads() * self.head_dim()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, frame_id: u64) -> Option<&FeatureFrame> {
        self.frames.get(&frame_id)
    }

    /// Frames in ascending id order.
    pub fn frames(&self) -> impl Iterator<Item = &FeatureFrame> {
        self.frames.values()
    }

    /// Checks grid coverage against the reconstruction's images: every
    /// tracked frame has an entry and `grid·stride <= image + stride`.
    pub fn validate_against(&self, recon: &SfmReconstruction) -> Result<()> {
        for p in recon.points() {
            for obs in &p.track {
                if !self.frames.contains_key(&obs.frame_id) {
                    return Err(Error::MissingFrame(obs.frame_id));
                }
            }
        }
        for f in self.frames.values() {
            let Some(frame) = recon.frame(f.frame_id) else {
                continue;
            };
            let cam = recon.camera_of(frame);
            let s = u64::from(f.stride);
            let fits_h = u64::from(f.grid_h) * s <= u64::from(cam.height) + s;
            let fits_w = u64::from(f.grid_w) * s <= u64::from(cam.width) + s;
            if !(fits_h && fits_w) {
                return Err(Error::integrity(
                    format!("feature frame {}", f.frame_id),
                    "patch grid larger than the image",
                ));
            }
        }
        Ok(())
    }

    /// Bilinear sample of the patch grid at a pixel.
    ///
    /// Patch `(i, j)` is centred at pixel `(j·s + s/2, i·s + s/2)`; coordinates
    /// outside the grid of centres clamp to the border. The result is the
    /// flattened `heads × head_dim` feature.
    pub fn sample(&self, frame_id: u64, pixel: &Vector2<f64>) -> Result<Vec<f32>> {
        let frame = self.frames.get(&frame_id).ok_or(Error::MissingFrame(frame_id))?;
        let s = f64::from(frame.stride);
        let (w, h) = (f64::from(frame.grid_w), f64::from(frame.grid_h));
        if !(pixel.x >= 0.0 && pixel.y >= 0.0 && pixel.x.is_finite() && pixel.y.is_finite()) {
            return Err(Error::OutOfBounds(pixel.x, pixel.y));
        }
        let gx = ((pixel.x - s / 2.0) / s).clamp(0.0, w - 1.0);
        let gy = ((pixel.y - s / 2.0) / s).clamp(0.0, h - 1.0);
        let x0 = gx.floor() as usize;
        let y0 = gy.floor() as usize;
        let x1 = (x0 + 1).min(frame.grid_w as usize - 1);
        let y1 = (y0 + 1).min(frame.grid_h as usize - 1);
        let tx = gx - x0 as f64;
        let ty = gy - y0 as f64;

        let (c00, c01) = (frame.cell(y0, x0), frame.cell(y0, x1));
        let (c10, c11) = (frame.cell(y1, x0), frame.cell(y1, x1));
        let out = (0..frame.channels())
            .map(|k| {
                let top = f64::from(c00[k]) * (1.0 - tx) + f64::from(c01[k]) * tx;
                let bottom = f64::from(c10[k]) * (1.0 - tx) + f64::from(c11[k]) * tx;
                (top * (1.0 - ty) + bottom * ty) as f32
            })
            .collect();
        Ok(out)
    }
}

/// Serializes a store into the `ARFS` byte layout.
pub fn encode_feature_store(store: &FeatureStore) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for f in store.frames() {
        buf.extend_from_slice(&f.frame_id.to_le_bytes());
        for v in [f.stride, f.grid_h, f.grid_w, f.heads, f.head_dim] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in f.grid.iter().chain(&f.cls) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated record at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| Error::Format("record size overflows".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_feature_store(bytes: &[u8]) -> Result<FeatureStore> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing ARFS magic".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported ARFS version {version}")));
    }
    let mut frames = Vec::new();
    while r.pos < bytes.len() {
        if bytes.len() - r.pos < HEADER_BYTES {
            return Err(Error::Format(format!("truncated record header at byte {}", r.pos)));
        }
        let frame_id = r.u64()?;
        let stride = r.u32()?;
        let grid_h = r.u32()?;
        let grid_w = r.u32()?;
        let heads = r.u32()?;
        let head_dim = r.u32()?;
        let channels = heads as usize * head_dim as usize;
        let cells = grid_h as usize * grid_w as usize;
        let grid = r.f32s(cells * channels)?;
        let cls = r.f32s(channels)?;
        frames.push(FeatureFrame {
            frame_id,
            stride,
            grid_h,
            grid_w,
            heads,
            head_dim,
            grid,
            cls,
        });
    }
    FeatureStore::new(frames)
}

pub fn load_feature_store(path: impl AsRef<Path>) -> Result<FeatureStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_store(&bytes)
}

pub fn save_feature_store(store: &FeatureStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_feature_store(store)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(id: u64, grid: Vec<f32>, hp: u32, wp: u32, heads: u32, dim: u32) -> FeatureFrame {
        FeatureFrame {
            frame_id: id,
            stride: 8,
            grid_h: hp,
            grid_w: wp,
            heads,
            head_dim: dim,
            grid,
            cls: vec![0.5; (heads * dim) as usize],
        }
    }

    #[test]
    fn decodes_known_bytes() {
        let mut bytes = b"ARFS".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&42u64.to_le_bytes());
        for v in [8u32, 2, 2, 1, 2] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let values: Vec<f32> = (0..8).map(|i| i as f32 * 0.25 - 1.0).collect();
        for v in values.iter().chain(&[3.0f32, -3.0]) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let store = decode_feature_store(&bytes).unwrap();
        let f = store.frame(42).unwrap();
        assert_eq!(f.grid, values);
        assert_eq!(f.cell(1, 0), &values[4..6]);
        assert_eq!(f.cls, vec![3.0, -3.0]);
        assert_eq!(encode_feature_store(&store), bytes);
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = b"XXXX".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        assert!(matches!(decode_feature_store(&bytes), Err(Error::Format(_))));
        let mut bytes = b"ARFS".to_vec();
        bytes.extend_from_slice(&7u32.to_le_bytes());
        assert!(matches!(decode_feature_store(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_record() {
        let store = FeatureStore::new(vec![frame(1, vec![1.0; 8], 2, 2, 1, 2)]).unwrap();
        let bytes = encode_feature_store(&store);
        for cut in [bytes.len() - 1, bytes.len() - 9, 12] {
            assert!(matches!(decode_feature_store(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
    }

    #[test]
    fn inconsistent_dims_rejected() {
        let a = frame(1, vec![0.0; 8], 2, 2, 1, 2);
        let b = frame(2, vec![0.0; 8], 2, 2, 2, 1);
        assert!(matches!(FeatureStore::new(vec![a, b]), Err(Error::Integrity { .. })));
    }

    #[test]
    fn sampling_at_patch_centres_and_midpoints() {
        // 2x3 grid, one channel: value = 10*y + x.
        let grid: Vec<f32> = (0..2).flat_map(|y| (0..3).map(move |x| (10 * y + x) as f32)).collect();
        let store = FeatureStore::new(vec![frame(1, grid, 2, 3, 1, 1)]).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                let px = Vector2::new(x as f64 * 8.0 + 4.0, y as f64 * 8.0 + 4.0);
                assert_eq!(store.sample(1, &px).unwrap(), vec![(10 * y + x) as f32]);
            }
        }
        // Midway between (0,1) and (0,2).
        assert_eq!(store.sample(1, &Vector2::new(16.0, 4.0)).unwrap(), vec![1.5]);
        // Border clamps.
        assert_eq!(store.sample(1, &Vector2::new(0.0, 0.0)).unwrap(), vec![0.0]);
        assert_eq!(store.sample(1, &Vector2::new(24.0, 16.0)).unwrap(), vec![12.0]);
        assert!(matches!(store.sample(9, &Vector2::new(1.0, 1.0)), Err(Error::MissingFrame(9))));
        assert!(matches!(store.sample(1, &Vector2::new(-1.0, 1.0)), Err(Error::OutOfBounds(..))));
    }
}
