//! Neural point cloud construction: multi-view feature averaging, [CLS]
//! fusion and voxel-grid downsampling.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::ply::{PlyTable, PlyType};
use crate::sfm::{self, SfmReconstruction};

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturedPoint {
    /// Source point id in the reconstruction.
    pub id: u64,
    pub position: Vector3<f64>,
    /// Flattened `heads × head_dim` feature, head-major.
    pub feature: Vec<f32>,
    pub view_count: u32,
}

/// SfM points carrying fused grouped features plus a global [CLS] vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturedPointCloud {
    pub points: Vec<FeaturedPoint>,
    pub cls: Vec<f32>,
    pub heads: usize,
    pub head_dim: usize,
}

impl FeaturedPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| p.position).collect()
    }

    /// Feature of head `k` of point `i`.
    pub fn head(&self, i: usize, k: usize) -> &[f32] {
        &self.points[i].feature[k * self.head_dim..(k + 1) * self.head_dim]
    }

    /// Subset of points, keeping the global fields.
    pub fn select(&self, indices: &[usize]) -> FeaturedPointCloud {
        FeaturedPointCloud {
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
            cls: self.cls.clone(),
            heads: self.heads,
            head_dim: self.head_dim,
        }
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        if self.heads == 0 || self.head_dim == 0 || self.cls.len() != c {
            return Err(Error::integrity("point cloud", "heads/head_dim/cls mismatch"));
        }
        for p in &self.points {
            if p.view_count == 0 {
                return Err(Error::integrity(format!("point {}", p.id), "view_count is zero"));
            }
            if p.feature.len() != c || !p.feature.iter().all(|v| v.is_finite()) {
                return Err(Error::integrity(format!("point {}", p.id), "bad feature"));
            }
        }
        Ok(())
    }

    /// Writes positions, id, view count and the feature channels as ASCII PLY.
    /// Heads, head dim and the [CLS] vector go into header comments.
    pub fn to_ply(&self) -> PlyTable {
        let mut props = vec![
            ("x".to_string(), PlyType::Double),
            ("y".to_string(), PlyType::Double),
            ("z".to_string(), PlyType::Double),
            ("id".to_string(), PlyType::UInt),
            ("view_count".to_string(), PlyType::UInt),
        ];
        props.extend((0..self.channels()).map(|k| (format!("f{k}"), PlyType::Float)));
        let mut table = PlyTable::new(props);
        table.comments.push(format!("heads {}", self.heads));
        table.comments.push(format!("head_dim {}", self.head_dim));
        let cls: Vec<String> = self.cls.iter().map(|v| v.to_string()).collect();
        table.comments.push(format!("cls {}", cls.join(" ")));
        for p in &self.points {
            let mut row = vec![p.position.x, p.position.y, p.position.z, p.id as f64, f64::from(p.view_count)];
            row.extend(p.feature.iter().map(|&v| f64::from(v)));
            table.rows.push(row);
        }
        table
    }

    pub fn from_ply(table: &PlyTable) -> Result<Self> {
        let num = |key: &str| -> Result<usize> {
            table
                .comment_value(key)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("PLY comment `{key}` missing")))
        };
        let heads = num("heads")?;
        let head_dim = num("head_dim")?;
        let cls = table
            .comment_value("cls")
            .ok_or_else(|| Error::Format("PLY comment `cls` missing".into()))?
            .split_whitespace()
            .map(|t| t.parse::<f32>().map_err(|_| Error::Format(format!("bad cls value `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        let col = |name: &str| table.column_index(name).ok_or_else(|| Error::Format(format!("PLY has no `{name}`")));
        let (xi, yi, zi) = (col("x")?, col("y")?, col("z")?);
        let (idi, vi) = (col("id")?, col("view_count")?);
        let fcols = (0..heads * head_dim).map(|k| col(&format!("f{k}"))).collect::<Result<Vec<_>>>()?;
        let points = table
            .rows
            .iter()
            .map(|r| FeaturedPoint {
                id: r[idi] as u64,
                position: Vector3::new(r[xi], r[yi], r[zi]),
                feature: fcols.iter().map(|&c| r[c] as f32).collect(),
                view_count: r[vi] as u32,
            })
            .collect();
        let cloud = FeaturedPointCloud {
            points,
            cls,
            heads,
            head_dim,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn save_ply(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_ply().write(path)
    }

    pub fn load_ply(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_ply(&PlyTable::read(path)?)
    }
}

/// Averages the features sampled at each point's projection into its track frames.
///
/// Observations that fall behind the camera or outside the image are skipped;
/// points left without any valid observation are dropped. The [CLS] vector is
/// filled by [`fuse_cls`].
pub fn fuse_point_features(sfm: &SfmReconstruction, store: &FeatureStore) -> Result<FeaturedPointCloud> {
    if sfm.points().is_empty() {
        return Err(Error::EmptyInput("reconstruction has no points"));
    }
    store.validate_against(sfm)?;
    let channels = store.channels();
    let mut points = Vec::with_capacity(sfm.points().len());
    let mut sum = vec![0.0f64; channels];
    for p in sfm.points() {
        sum.iter_mut().for_each(|v| *v = 0.0);
        let mut count = 0u32;
        for obs in &p.track {
            let frame = sfm.frame(obs.frame_id).ok_or(Error::MissingFrame(obs.frame_id))?;
            let camera = sfm.camera_of(frame);
            let pixel = match sfm::project(camera, frame, &p.position) {
                Ok(px) if camera.contains(&px) => px,
                Ok(_) | Err(Error::BehindCamera(_)) => continue,
                Err(e) => return Err(e),
            };
            let feature = store.sample(obs.frame_id, &pixel)?;
            for (s, f) in sum.iter_mut().zip(&feature) {
                *s += f64::from(*f);
            }
            count += 1;
        }
        if count == 0 {
            continue;
        }
        let n = f64::from(count);
        points.push(FeaturedPoint {
            id: p.point_id,
            position: p.position,
            feature: sum.iter().map(|s| (s / n) as f32).collect(),
            view_count: count,
        });
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("no point has a valid observation"));
    }
    Ok(FeaturedPointCloud {
        points,
        cls: fuse_cls(store)?,
        heads: store.heads(),
        head_dim: store.head_dim(),
    })
}

/// Arithmetic mean of the per-frame [CLS] vectors.
pub fn fuse_cls(store: &FeatureStore) -> Result<Vec<f32>> {
    if store.is_empty() {
        return Err(Error::EmptyInput("feature store has no frames"));
    }
    let mut sum = vec![0.0f64; store.channels()];
    for f in store.frames() {
        for (s, v) in sum.iter_mut().zip(&f.cls) {
            *s += f64::from(*v);
        }
    }
    let n = store.len() as f64;
    Ok(sum.into_iter().map(|s| (s / n) as f32).collect())
}

/// A downsampled cloud with the source indices merged into each output point.
#[derive(Debug, Clone)]
pub struct DownsampledCloud {
    pub cloud: FeaturedPointCloud,
    pub constituents: Vec<Vec<usize>>,
}

impl DownsampledCloud {
    /// Identity downsampling: every point is its own bucket.
    pub fn identity(cloud: FeaturedPointCloud) -> Self {
        let constituents = (0..cloud.len()).map(|i| vec![i]).collect();
        DownsampledCloud { cloud, constituents }
    }

    /// Copies per-output labels back onto the source points.
    pub fn upsample<T: Clone + Default>(&self, labels: &[T], source_len: usize) -> Vec<T> {
        let mut out = vec![T::default(); source_len];
        for (members, label) in self.constituents.iter().zip(labels) {
            for &i in members {
                out[i] = label.clone();
            }
        }
        out
    }
}

fn voxel_key(p: &Vector3<f64>, voxel: f64) -> (i64, i64, i64) {
    (
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    )
}

/// Number of occupied voxels without building the output.
pub fn occupied_voxels(cloud: &FeaturedPointCloud, voxel: f64) -> usize {
    let mut seen = std::collections::HashSet::new();
    for p in &cloud.points {
        seen.insert(voxel_key(&p.position, voxel));
    }
    seen.len()
}

/// Uniform voxel-grid downsampling.
///
/// Each occupied voxel becomes one point at the centroid of its members with
/// the view-count-weighted mean feature. Output order follows the first
/// member of each voxel.
pub fn voxel_downsample(cloud: &FeaturedPointCloud, voxel: f64) -> Result<DownsampledCloud> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(Error::invalid("voxel", format!("must be positive, got {voxel}")));
    }
    let mut slot: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut constituents: Vec<Vec<usize>> = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let next = constituents.len();
        let s = *slot.entry(voxel_key(&p.position, voxel)).or_insert(next);
        if s == next {
            constituents.push(Vec::new());
        }
        constituents[s].push(i);
    }

    let c = cloud.channels();
    let points = constituents
        .iter()
        .map(|members| {
            let mut pos = Vector3::zeros();
            let mut feat = vec![0.0f64; c];
            let mut views = 0u32;
            for &i in members {
                let p = &cloud.points[i];
                pos += p.position;
                let w = f64::from(p.view_count);
                for (acc, v) in feat.iter_mut().zip(&p.feature) {
                    *acc += w * f64::from(*v);
                }
                views += p.view_count;
            }
            let total = f64::from(views);
            FeaturedPoint {
                id: cloud.points[members[0]].id,
                position: pos / members.len() as f64,
                feature: feat.into_iter().map(|v| (v / total) as f32).collect(),
                view_count: views,
            }
        })
        .collect();
    Ok(DownsampledCloud {
        cloud: FeaturedPointCloud {
            points,
            cls: cloud.cls.clone(),
            heads: cloud.heads,
            head_dim: cloud.head_dim,
        },
        constituents,
    })
}

/// Smallest voxel edge (to bisection precision) whose grid yields at most
/// `target` points. `None` when the cloud is already small enough.
pub fn voxel_for_target(cloud: &FeaturedPointCloud, target: usize) -> Result<Option<f64>> {
    if target == 0 {
        return Err(Error::invalid("target_count", "must be at least 1"));
    }
    if cloud.len() <= target {
        return Ok(None);
    }
    let (mut lo_c, mut hi_c) = (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY));
    for p in &cloud.points {
        lo_c = lo_c.inf(&p.position);
        hi_c = hi_c.sup(&p.position);
    }
    // A voxel twice the diagonal puts everything in at most 8 cells.
    let mut hi = 2.0 * (hi_c - lo_c).norm().max(1e-12);
    while occupied_voxels(cloud, hi) > target {
        hi *= 2.0;
    }
    let mut lo = hi * 1e-9;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if occupied_voxels(cloud, mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-6 * hi {
            break;
        }
    }
    Ok(Some(hi))
}

/// Downsamples to at most `target` points, or returns the identity mapping.
pub fn downsample_to_target(cloud: &FeaturedPointCloud, target: usize) -> Result<DownsampledCloud> {
    match voxel_for_target(cloud, target)? {
        Some(voxel) => voxel_downsample(cloud, voxel),
        None => Ok(DownsampledCloud::identity(cloud.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureFrame;
    use crate::sfm::{Camera, Frame, Observation, Point3d};
    use nalgebra::Vector2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point(id: u64, pos: [f64; 3], feature: Vec<f32>, views: u32) -> FeaturedPoint {
        FeaturedPoint {
            id,
            position: Vector3::from(pos),
            feature,
            view_count: views,
        }
    }

    fn cloud(points: Vec<FeaturedPoint>) -> FeaturedPointCloud {
        FeaturedPointCloud {
            points,
            cls: vec![0.0; 2],
            heads: 1,
            head_dim: 2,
        }
    }

    /// Two frames looking down +z, a 4x4 grid of stride 8 with one channel
    /// pair per cell encoding the cell index.
    fn two_view_scene(points: Vec<Point3d>) -> (SfmReconstruction, FeatureStore) {
        let camera = Camera::pinhole(1, 32, 32, 16.0, 16.0, 16.0, 16.0);
        let frames = vec![
            Frame {
                frame_id: 1,
                camera_id: 1,
                qvec: [1.0, 0.0, 0.0, 0.0],
                translation: Vector3::zeros(),
                name: "a".into(),
            },
            Frame {
                frame_id: 2,
                camera_id: 1,
                qvec: [1.0, 0.0, 0.0, 0.0],
                translation: Vector3::new(-0.5, 0.0, 0.0),
                name: "b".into(),
            },
        ];
        let recon = SfmReconstruction::new(vec![camera], frames, points).unwrap();
        let grid = |offset: f32| (0..16).flat_map(|c| [c as f32 + offset, -(c as f32)]).collect::<Vec<_>>();
        let ff = |id, offset| FeatureFrame {
            frame_id: id,
            stride: 8,
            grid_h: 4,
            grid_w: 4,
            heads: 1,
            head_dim: 2,
            grid: grid(offset),
            cls: vec![offset, 1.0],
        };
        (recon, FeatureStore::new(vec![ff(1, 0.0), ff(2, 100.0)]).unwrap())
    }

    fn observed(id: u64, pos: [f64; 3]) -> Point3d {
        Point3d {
            point_id: id,
            position: Vector3::from(pos),
            color: [0; 3],
            error: 0.0,
            track: vec![
                Observation { frame_id: 1, pixel: Vector2::new(1.0, 1.0) },
                Observation { frame_id: 2, pixel: Vector2::new(1.0, 1.0) },
            ],
        }
    }

    #[test]
    fn fused_feature_is_mean_of_samples() {
        let (recon, store) = two_view_scene(vec![observed(3, [0.0, 0.0, 2.0])]);
        let fused = fuse_point_features(&recon, &store).unwrap();
        let p = &fused.points[0];
        let a = store.sample(1, &recon.project(1, &p.position).unwrap()).unwrap();
        let b = store.sample(2, &recon.project(2, &p.position).unwrap()).unwrap();
        assert_eq!(p.view_count, 2);
        for k in 0..2 {
            assert!((p.feature[k] - (a[k] + b[k]) / 2.0).abs() < 1e-6);
        }
        assert_eq!(fused.cls, vec![50.0, 1.0]);
    }

    #[test]
    fn invalid_observations_skipped() {
        // Visible in frame 1 only: frame 2 projects it to u = 16*(-0.6-0.5) + 16 < 0.
        let (recon, store) = two_view_scene(vec![observed(3, [-0.6, 0.0, 1.0])]);
        let fused = fuse_point_features(&recon, &store).unwrap();
        let p = &fused.points[0];
        assert_eq!(p.view_count, 1);
        let a = store.sample(1, &recon.project(1, &p.position).unwrap()).unwrap();
        assert_eq!(p.feature, a);
        // Behind both cameras: dropped, which empties the cloud.
        let (recon, store) = two_view_scene(vec![observed(3, [0.0, 0.0, -1.0])]);
        assert!(matches!(fuse_point_features(&recon, &store), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn cls_fusion() {
        let frame = |id, cls: Vec<f32>| FeatureFrame {
            frame_id: id,
            stride: 8,
            grid_h: 1,
            grid_w: 1,
            heads: 1,
            head_dim: 3,
            grid: vec![0.0; 3],
            cls,
        };
        let one = FeatureStore::new(vec![frame(1, vec![1.0, -2.0, 0.5])]).unwrap();
        assert_eq!(fuse_cls(&one).unwrap(), vec![1.0, -2.0, 0.5]);
        let two = FeatureStore::new(vec![frame(1, vec![1.0, -2.0, 0.5]), frame(2, vec![-1.0, 2.0, -0.5])]).unwrap();
        assert_eq!(fuse_cls(&two).unwrap(), vec![0.0; 3]);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frames: Vec<_> = (0..37)
            .map(|i| frame(i, (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let store = FeatureStore::new(frames.clone()).unwrap();
        let fused = fuse_cls(&store).unwrap();
        // Streaming (running-mean) oracle.
        let mut mean = [0.0f64; 3];
        for (n, f) in frames.iter().enumerate() {
            for (m, c) in mean.iter_mut().zip(&f.cls) {
                *m += (f64::from(*c) - *m) / (n + 1) as f64;
            }
        }
        for k in 0..3 {
            assert!((f64::from(fused[k]) - mean[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn coincident_points_merge() {
        let c = cloud(vec![
            point(1, [0.3, 0.3, 0.3], vec![1.0, 2.0], 2),
            point(2, [0.3, 0.3, 0.3], vec![1.0, 2.0], 3),
        ]);
        let ds = voxel_downsample(&c, 0.1).unwrap();
        assert_eq!(ds.cloud.len(), 1);
        let p = &ds.cloud.points[0];
        assert!((p.position - Vector3::new(0.3, 0.3, 0.3)).norm() < 1e-15);
        assert_eq!(p.feature, vec![1.0, 2.0]);
        assert_eq!(p.view_count, 5);
        assert_eq!(ds.constituents, vec![vec![0, 1]]);
    }

    #[test]
    fn view_weighted_feature() {
        let c = cloud(vec![
            point(1, [0.01, 0.0, 0.0], vec![0.0, 4.0], 1),
            point(2, [0.02, 0.0, 0.0], vec![4.0, 0.0], 3),
        ]);
        let ds = voxel_downsample(&c, 1.0).unwrap();
        assert_eq!(ds.cloud.points[0].feature, vec![3.0, 1.0]);
        assert!((ds.cloud.points[0].position.x - 0.015).abs() < 1e-15);
    }

    #[test]
    fn sparse_grid_is_unchanged() {
        let mut pts = Vec::new();
        for i in 0..4 {
            for j in 0..3 {
                let id = (i * 3 + j) as u64;
                pts.push(point(id, [i as f64 * 0.25 + 0.01, j as f64 * 0.25 + 0.01, 0.01], vec![id as f32, 0.0], 1));
            }
        }
        let c = cloud(pts);
        let ds = voxel_downsample(&c, 0.2).unwrap();
        assert_eq!(ds.cloud.points, c.points);
    }

    #[test]
    fn bucket_count_matches_hash_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..10_000)
            .map(|i| point(i, [rng.random(), rng.random(), rng.random()], vec![0.0, 0.0], 1))
            .collect();
        let c = cloud(pts);
        let ds = voxel_downsample(&c, 0.1).unwrap();
        let mut buckets = std::collections::BTreeSet::new();
        for p in &c.points {
            let k = |v: f64| (v / 0.1).floor() as i64;
            buckets.insert([k(p.position.x), k(p.position.y), k(p.position.z)]);
        }
        assert_eq!(ds.cloud.len(), buckets.len());
        let total: usize = ds.constituents.iter().map(Vec::len).sum();
        assert_eq!(total, c.len());
    }

    #[test]
    fn invalid_voxel() {
        let c = cloud(vec![point(1, [0.0; 3], vec![0.0, 0.0], 1)]);
        for v in [0.0, -1.0, f64::NAN] {
            assert!(matches!(voxel_downsample(&c, v), Err(Error::InvalidArgument { .. })));
        }
    }

    #[test]
    fn target_count_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<_> = (0..2_000)
            .map(|i| point(i, [rng.random(), rng.random::<f64>() * 2.0, rng.random()], vec![0.0, 0.0], 1))
            .collect();
        let c = cloud(pts);
        let ds = downsample_to_target(&c, 300).unwrap();
        assert!(ds.cloud.len() <= 300);
        assert!(ds.cloud.len() > 100, "voxel search overshot: {}", ds.cloud.len());
        assert!(voxel_for_target(&c, 5000).unwrap().is_none());
    }

    #[test]
    fn ply_round_trip() {
        let c = FeaturedPointCloud {
            points: vec![point(7, [0.1, -2.5, 3.0], vec![0.1, 0.7, -1e-3, 2.0], 4)],
            cls: vec![0.25, -0.5, 1.0, 1.0 / 3.0],
            heads: 2,
            head_dim: 2,
        };
        let back = FeaturedPointCloud::from_ply(&PlyTable::from_text(&c.to_ply().to_text()).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
