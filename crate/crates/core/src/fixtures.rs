//! Deterministic synthetic scenes with ground truth: an object resting on a
//! ground plane, surrounding clutter, a ring of pinhole cameras, tracks and
//! painted patch-feature grids.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{save_feature_store, FeatureFrame, FeatureStore};
use crate::geometry::{OrientedBox, PlaneModel};
use crate::sfm::{self, write_sfm, Camera, Frame, Observation, Point3d, SfmReconstruction};

pub const SPARSE_DIR: &str = "sparse";
pub const FEATURES_FILE: &str = "features.arfs";
pub const LABELS_FILE: &str = "gt_labels.json";
pub const BOX_FILE: &str = "gt_box.json";
pub const PLANE_FILE: &str = "gt_plane.json";
pub const SPEC_FILE: &str = "scene.json";

/// Depth slack, in scene units, within which a point still counts as the
/// front surface of its patch.
const VISIBILITY_TOLERANCE: f64 = 0.15;

const MIN_VIEWS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Box { half_extents: [f64; 3] },
    Sphere { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub heads: usize,
    pub head_dim: usize,
    /// Per-channel Gaussian noise added to each point's class feature.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRing {
    pub count: usize,
    pub radius: f64,
    /// Height above the ground plane.
    pub height: f64,
    pub width: u32,
    pub image_height: u32,
    pub focal: f64,
    pub stride: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub foreground_points: usize,
    pub ground_points: usize,
    pub clutter_points: usize,
    pub shape: Shape,
    /// Rotation of the object about the vertical; `None` draws it from the seed.
    pub yaw: Option<f64>,
    pub plane_height: f64,
    pub ground_radius: f64,
    /// Inner and outer radius of the clutter shell around the object.
    pub clutter_shell: [f64; 2],
    pub features: FeatureModel,
    pub cameras: CameraRing,
    /// Standard deviation of observed pixel positions, in pixels.
    pub pixel_noise: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            foreground_points: 400,
            ground_points: 400,
            clutter_points: 200,
            shape: Shape::Box { half_extents: [0.5, 0.3, 0.4] },
            yaw: None,
            plane_height: 0.0,
            ground_radius: 1.6,
            clutter_shell: [1.8, 2.6],
            features: FeatureModel { heads: 4, head_dim: 8, noise: 0.1 },
            cameras: CameraRing {
                count: 12,
                radius: 5.0,
                height: 2.0,
                width: 640,
                image_height: 480,
                focal: 400.0,
                stride: 8,
            },
            pixel_noise: 0.3,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.foreground_points == 0 {
            return Err(Error::invalid("foreground_points", "the foreground is empty"));
        }
        let positive = [
            ("ground_radius", self.ground_radius),
            ("camera radius", self.cameras.radius),
            ("focal", self.cameras.focal),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [("feature noise", self.features.noise), ("pixel_noise", self.pixel_noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        let extents_ok = match &self.shape {
            Shape::Box { half_extents } => half_extents.iter().all(|&h| h > 0.0 && h.is_finite()),
            Shape::Sphere { radius } => *radius > 0.0 && radius.is_finite(),
        };
        if !extents_ok {
            return Err(Error::invalid("shape", "extents must be positive"));
        }
        let [inner, outer] = self.clutter_shell;
        if !(inner >= 0.0 && outer > inner && outer.is_finite()) {
            return Err(Error::invalid("clutter_shell", "need 0 <= inner < outer"));
        }
        if self.cameras.count < 2 {
            return Err(Error::invalid("camera count", "need at least 2 cameras"));
        }
        let c = &self.cameras;
        if c.stride == 0 || c.width < c.stride || c.image_height < c.stride {
            return Err(Error::invalid("stride", "image must hold at least one patch"));
        }
        if self.features.heads == 0 || self.features.head_dim == 0 {
            return Err(Error::invalid("features", "heads and head_dim must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Foreground,
    Ground,
    Clutter,
}

/// Generated scene with its ground truth. `gt_labels` follows the order of
/// `sfm.points()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub sfm: SfmReconstruction,
    pub features: FeatureStore,
    pub gt_labels: Vec<bool>,
    pub gt_box: OrientedBox,
    pub gt_plane: PlaneModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLabels {
    pub ids: Vec<u64>,
    pub foreground: Vec<bool>,
}

impl SyntheticScene {
    pub fn label_file(&self) -> GroundTruthLabels {
        GroundTruthLabels {
            ids: self.sfm.points().iter().map(|p| p.point_id).collect(),
            foreground: self.gt_labels.clone(),
        }
    }

    /// Writes the reconstruction tables under `sparse/`, the feature store
    /// and the ground-truth files into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_sfm(&self.sfm, dir.join(SPARSE_DIR))?;
        save_feature_store(&self.features, dir.join(FEATURES_FILE))?;
        let json = |v: &dyn erased::Json| v.to_json();
        for (name, text) in [
            (LABELS_FILE, json(&self.label_file())),
            (BOX_FILE, self.gt_box.to_json()),
            (PLANE_FILE, self.gt_plane.to_json()),
            (SPEC_FILE, json(&self.spec)),
        ] {
            let path = dir.join(name);
            fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

mod erased {
    pub trait Json {
        fn to_json(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_json(&self) -> String {
            serde_json::to_string(self).expect("serializable")
        }
    }
}

pub fn load_ground_truth_labels(path: impl AsRef<Path>) -> Result<GroundTruthLabels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let labels: GroundTruthLabels = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    if labels.ids.len() != labels.foreground.len() {
        return Err(Error::parse(path, "ids and foreground differ in length"));
    }
    Ok(labels)
}

fn unit_heads(v: &mut [f64], dim: usize) {
    for head in v.chunks_exact_mut(dim) {
        let n = head.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            head.iter_mut().for_each(|x| *x /= n);
        }
    }
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit vector with cosine `cos` to unit `a`, otherwise random.
fn at_cosine(a: &[f64], cos: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if a.len() == 1 {
        return vec![a[0] * cos.signum()];
    }
    loop {
        let r = random_unit(a.len(), rng);
        let d: f64 = r.iter().zip(a).map(|(x, y)| x * y).sum();
        let perp: Vec<f64> = r.iter().zip(a).map(|(x, y)| x - d * y).collect();
        let n = perp.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            let s = (1.0 - cos * cos).sqrt();
            return perp.iter().zip(a).map(|(p, y)| cos * y + s * p / n).collect();
        }
    }
}

/// Per-head class means. Background classes oppose the foreground in every
/// head; ground and clutter share head 0.
fn class_means(model: &FeatureModel, rng: &mut ChaCha8Rng) -> [Vec<f64>; 3] {
    let (h, d) = (model.heads, model.head_dim);
    let mut fg = Vec::with_capacity(h * d);
    let mut ground = Vec::with_capacity(h * d);
    let mut clutter = Vec::with_capacity(h * d);
    for k in 0..h {
        let a = random_unit(d, rng);
        let g = at_cosine(&a, -0.8, rng);
        let c = if k == 0 { g.clone() } else { at_cosine(&a, -0.8, rng) };
        fg.extend(a);
        ground.extend(g);
        clutter.extend(c);
    }
    [fg, ground, clutter]
}

fn noisy_feature(mean: &[f64], sigma: f64, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v = mean.to_vec();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        v.iter_mut().for_each(|x| *x += normal.sample(rng));
        unit_heads(&mut v, dim);
    }
    v
}

fn sample_shape(spec: &SceneSpec, pose: &Rotation3<f64>, base: &Vector3<f64>, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    match &spec.shape {
        Shape::Box { half_extents: [a, b, c] } => {
            // Four sides and the top, by area.
            let areas = [b * c, b * c, a * c, a * c, a * b];
            let total: f64 = areas.iter().sum();
            let mut pick = rng.random_range(0.0..total);
            let mut face = 0;
            while face < 4 && pick >= areas[face] {
                pick -= areas[face];
                face += 1;
            }
            let (u, v) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let local = match face {
                0 => Vector3::new(*a, u * b, v * c),
                1 => Vector3::new(-a, u * b, v * c),
                2 => Vector3::new(u * a, *b, v * c),
                3 => Vector3::new(u * a, -b, v * c),
                _ => Vector3::new(u * a, v * b, *c),
            };
            base + pose * local
        }
        Shape::Sphere { radius } => {
            let dir = random_unit(3, rng);
            base + Vector3::new(dir[0], dir[1], dir[2]) * *radius
        }
    }
}

fn on_footprint(spec: &SceneSpec, pose: &Rotation3<f64>, base: &Vector3<f64>, p: &Vector3<f64>) -> bool {
    let local = pose.inverse() * (p - base);
    match &spec.shape {
        Shape::Box { half_extents: [a, b, _] } => local.x.abs() <= *a && local.y.abs() <= *b,
        Shape::Sphere { radius } => local.xy().norm() <= 0.5 * radius,
    }
}

fn look_at(center: &Vector3<f64>, target: &Vector3<f64>) -> UnitQuaternion<f64> {
    let forward = (target - center).normalize();
    let right = forward.cross(&Vector3::z()).normalize();
    let down = forward.cross(&right);
    let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r))
}

struct View {
    frame: Frame,
    camera: Camera,
}

/// Builds a scene from its spec; every random draw comes from `spec.seed`.
///
/// Points seen by fewer than two cameras are dropped. Visibility keeps, per
/// patch, the points within a small depth slack of the nearest one. Each
/// frame's grid is painted by averaging the visible points' noisy features
/// into their nearest patch and box-blurring once, empty patches counting
/// as zero.
pub fn generate_synthetic_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let yaw = spec.yaw.unwrap_or_else(|| rng.random_range(0.0..TAU));
    let pose = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
    let h = spec.plane_height;
    let half = match &spec.shape {
        Shape::Box { half_extents } => Vector3::from(*half_extents),
        Shape::Sphere { radius } => Vector3::repeat(*radius),
    };
    let base = Vector3::new(0.0, 0.0, h + half.z);
    let model = &spec.features;
    let means = class_means(model, &mut rng);

    let mut samples: Vec<(Vector3<f64>, Class)> = Vec::new();
    for _ in 0..spec.foreground_points {
        samples.push((sample_shape(spec, &pose, &base, &mut rng), Class::Foreground));
    }
    let mut placed = 0;
    while placed < spec.ground_points {
        let r = spec.ground_radius * rng.random::<f64>().sqrt();
        let t = rng.random_range(0.0..TAU);
        let p = Vector3::new(r * t.cos(), r * t.sin(), h);
        if !on_footprint(spec, &pose, &base, &p) {
            samples.push((p, Class::Ground));
            placed += 1;
        }
    }
    let [inner, outer] = spec.clutter_shell;
    for _ in 0..spec.clutter_points {
        let dir = random_unit(3, &mut rng);
        let r = (inner.powi(3) + rng.random::<f64>() * (outer.powi(3) - inner.powi(3))).cbrt();
        let p = Vector3::new(dir[0], dir[1], dir[2].abs()) * r + Vector3::new(0.0, 0.0, h);
        samples.push((p, Class::Clutter));
    }
    let features: Vec<Vec<f64>> = samples
        .iter()
        .map(|(_, class)| noisy_feature(&means[*class as usize], model.noise, model.head_dim, &mut rng))
        .collect();

    let ring = &spec.cameras;
    let camera = Camera::pinhole(
        1,
        ring.width,
        ring.image_height,
        ring.focal,
        ring.focal,
        f64::from(ring.width) / 2.0,
        f64::from(ring.image_height) / 2.0,
    );
    let views: Vec<View> = (0..ring.count)
        .map(|k| {
            let t = TAU * k as f64 / ring.count as f64;
            let center = Vector3::new(ring.radius * t.cos(), ring.radius * t.sin(), h + ring.height);
            let q = look_at(&center, &base);
            let translation = -(q * center);
            View {
                frame: Frame {
                    frame_id: k as u64 + 1,
                    camera_id: 1,
                    qvec: [q.w, q.i, q.j, q.k],
                    translation,
                    name: format!("frame_{:03}.png", k + 1),
                },
                camera: camera.clone(),
            }
        })
        .collect();

    let s = f64::from(ring.stride);
    let gw = (ring.width / ring.stride) as usize;
    let gh = (ring.image_height / ring.stride) as usize;
    let nearest_patch = |px: &Vector2<f64>| {
        let gx = ((px.x - s / 2.0) / s).round().clamp(0.0, (gw - 1) as f64) as usize;
        let gy = ((px.y - s / 2.0) / s).round().clamp(0.0, (gh - 1) as f64) as usize;
        gy * gw + gx
    };

    // Per view, the pixel of every visible point.
    let mut seen: Vec<Vec<Option<Vector2<f64>>>> = Vec::with_capacity(views.len());
    for view in &views {
        let mut hits: Vec<Option<(Vector2<f64>, f64, usize)>> = samples
            .iter()
            .map(|(p, _)| {
                let pc = view.frame.to_camera(p);
                let px = sfm::project_camera_point(&view.camera, &pc).ok()?;
                view.camera.contains(&px).then(|| (px, pc.z, nearest_patch(&px)))
            })
            .collect();
        let mut front = vec![f64::INFINITY; gw * gh];
        for (_, z, cell) in hits.iter().flatten() {
            front[*cell] = front[*cell].min(*z);
        }
        for hit in hits.iter_mut() {
            if hit.is_some_and(|(_, z, cell)| z > front[cell] + VISIBILITY_TOLERANCE) {
                *hit = None;
            }
        }
        seen.push(hits.into_iter().map(|h| h.map(|(px, _, _)| px)).collect());
    }

    let channels = model.heads * model.head_dim;
    let normal_cls = Normal::new(0.0, model.noise.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut frames = Vec::with_capacity(views.len());
    for (view, hits) in views.iter().zip(&seen) {
        let mut sum = vec![0.0f64; gw * gh * channels];
        let mut count = vec![0usize; gw * gh];
        for (i, px) in hits.iter().enumerate() {
            if let Some(px) = px {
                let cell = nearest_patch(px);
                count[cell] += 1;
                for (acc, v) in sum[cell * channels..(cell + 1) * channels].iter_mut().zip(&features[i]) {
                    *acc += v;
                }
            }
        }
        for (cell, &n) in count.iter().enumerate() {
            if n > 0 {
                sum[cell * channels..(cell + 1) * channels].iter_mut().for_each(|v| *v /= n as f64);
            }
        }
        let mut grid = vec![0.0f32; gw * gh * channels];
        for y in 0..gh {
            for x in 0..gw {
                let mut acc = vec![0.0f64; channels];
                let mut cells = 0usize;
                for ny in y.saturating_sub(1)..(y + 2).min(gh) {
                    for nx in x.saturating_sub(1)..(x + 2).min(gw) {
                        cells += 1;
                        let c = ny * gw + nx;
                        for (a, v) in acc.iter_mut().zip(&sum[c * channels..(c + 1) * channels]) {
                            *a += v;
                        }
                    }
                }
                let out = &mut grid[(y * gw + x) * channels..(y * gw + x + 1) * channels];
                for (o, a) in out.iter_mut().zip(&acc) {
                    *o = (a / cells as f64) as f32;
                }
            }
        }
        let cls: Vec<f32> = means[0]
            .iter()
            .map(|m| if model.noise > 0.0 { (m + normal_cls.sample(&mut rng)) as f32 } else { *m as f32 })
            .collect();
        frames.push(FeatureFrame {
            frame_id: view.frame.frame_id,
            stride: ring.stride,
            grid_h: gh as u32,
            grid_w: gw as u32,
            heads: model.heads as u32,
            head_dim: model.head_dim as u32,
            grid,
            cls,
        });
    }

    let pixel_noise = Normal::new(0.0, spec.pixel_noise.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut points = Vec::new();
    let mut gt_labels = Vec::new();
    for (i, (p, class)) in samples.iter().enumerate() {
        let mut track = Vec::new();
        for (view, hits) in views.iter().zip(&seen) {
            let Some(px) = hits[i] else { continue };
            let observed = if spec.pixel_noise > 0.0 {
                px + Vector2::new(pixel_noise.sample(&mut rng), pixel_noise.sample(&mut rng))
            } else {
                px
            };
            if view.camera.contains(&observed) {
                track.push(Observation { frame_id: view.frame.frame_id, pixel: observed });
            }
        }
        if track.len() < MIN_VIEWS {
            continue;
        }
        let color = match class {
            Class::Foreground => [200, 40, 40],
            Class::Ground => [120, 120, 120],
            Class::Clutter => [40, 160, 60],
        };
        points.push(Point3d {
            point_id: points.len() as u64 + 1,
            position: *p,
            color,
            error: spec.pixel_noise,
            track,
        });
        gt_labels.push(*class == Class::Foreground);
    }
    if !gt_labels.iter().any(|&l| l) {
        return Err(Error::invalid("foreground_points", "no foreground point is visible in two views"));
    }

    let sfm = SfmReconstruction::new(vec![camera], views.into_iter().map(|v| v.frame).collect(), points)?;
    let features = FeatureStore::new(frames)?;
    let gt_box = OrientedBox {
        center: base,
        rotation: *pose.matrix(),
        half_extents: half,
    };
    let gt_plane = PlaneModel { normal: Vector3::z(), offset: -h, inliers: vec![] };
    Ok(SyntheticScene {
        spec: spec.clone(),
        sfm,
        features,
        gt_labels,
        gt_box,
        gt_plane,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::load_feature_store;
    use crate::fusion::fuse_point_features;
    use crate::geometry::{plane_aligned_obb, BOX_MARGIN};
    use crate::sfm::parse_sfm;

    #[test]
    fn deterministic_per_seed() {
        let spec = SceneSpec { seed: 5, ..SceneSpec::default() };
        let a = generate_synthetic_scene(&spec).unwrap();
        let b = generate_synthetic_scene(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_scene(&SceneSpec { seed: 6, ..spec }).unwrap();
        assert_ne!(a.sfm, c.sfm);
    }

    #[test]
    fn every_point_has_two_views_and_labels_align() {
        let scene = generate_synthetic_scene(&SceneSpec::default()).unwrap();
        assert_eq!(scene.gt_labels.len(), scene.sfm.points().len());
        assert!(scene.sfm.points().iter().all(|p| p.track.len() >= 2));
        let fg = scene.gt_labels.iter().filter(|&&l| l).count();
        assert!(fg > 200 && fg <= 400, "{fg}");
        assert!(scene.sfm.points().len() > 700);
        scene.features.validate_against(&scene.sfm).unwrap();
    }

    #[test]
    fn noise_free_single_class_fuses_to_class_mean() {
        let spec = SceneSpec {
            ground_points: 0,
            clutter_points: 0,
            pixel_noise: 0.0,
            features: FeatureModel { noise: 0.0, ..SceneSpec::default().features },
            ..SceneSpec::default()
        };
        let scene = generate_synthetic_scene(&spec).unwrap();
        let cloud = fuse_point_features(&scene.sfm, &scene.features).unwrap();
        let mean: Vec<f64> = scene.features.frames().next().unwrap().cls.iter().map(|&v| f64::from(v)).collect();
        for p in &cloud.points {
            let mut f: Vec<f64> = p.feature.iter().map(|&v| f64::from(v)).collect();
            unit_heads(&mut f, 8);
            for (a, b) in f.iter().zip(&mean) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn ground_truth_box_matches_shape() {
        let spec = SceneSpec { foreground_points: 3000, ..SceneSpec::default() };
        let scene = generate_synthetic_scene(&spec).unwrap();
        assert!((scene.gt_box.volume() - 8.0 * 0.5 * 0.3 * 0.4).abs() < 1e-12);
        scene.gt_box.validate().unwrap();
        let fg: Vec<_> = scene
            .sfm
            .points()
            .iter()
            .zip(&scene.gt_labels)
            .filter(|(_, &l)| l)
            .map(|(p, _)| p.position)
            .collect();
        let est = plane_aligned_obb(&fg, &scene.gt_plane).unwrap();
        let ratio = est.volume() / scene.gt_box.volume();
        // Margin growth plus a small in-plane axis error from sampling.
        assert!(ratio > 1.0 && ratio < (1.0 + BOX_MARGIN).powi(3) + 0.03, "{ratio}");
    }

    #[test]
    fn empty_foreground_rejected() {
        let spec = SceneSpec { foreground_points: 0, ..SceneSpec::default() };
        assert!(matches!(generate_synthetic_scene(&spec), Err(Error::InvalidArgument { .. })));
    }

    #[test]
    fn written_scene_reads_back() {
        let scene = generate_synthetic_scene(&SceneSpec { seed: 2, ..SceneSpec::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        scene.write(dir.path()).unwrap();
        assert_eq!(parse_sfm(dir.path().join(SPARSE_DIR)).unwrap(), scene.sfm);
        assert_eq!(load_feature_store(dir.path().join(FEATURES_FILE)).unwrap(), scene.features);
        let labels = load_ground_truth_labels(dir.path().join(LABELS_FILE)).unwrap();
        assert_eq!(labels.foreground, scene.gt_labels);
        let text = fs::read_to_string(dir.path().join(BOX_FILE)).unwrap();
        assert_eq!(OrientedBox::from_json(&text).unwrap(), scene.gt_box);
    }
}
