use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use log::info;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use salient3d::features::load_feature_store;
use salient3d::fixtures::{generate_synthetic_scene, SceneSpec, Shape, BOX_FILE, FEATURES_FILE, SPARSE_DIR};
use salient3d::fusion::{fuse_point_features, FeaturedPointCloud};
use salient3d::geometry::{assign_pseudo_labels, detection_ap, IouMode, OrientedBox};
use salient3d::labels::LabelFile;
use salient3d::pipeline::{self, estimate_box, labels_as_segmentation};
use salient3d::regularizers::{
    anneal_weight, knn_stats, loss_bin, loss_eikonal, loss_fg, loss_ground, total_loss, SdfSampleSet,
};
use salient3d::seg_transformer::{
    load_weights, predict_labels, prepare_input, save_weights, train as train_model, SegTransformer, TrainingExample,
};
use salient3d::sfm::{parse_sfm, CAMERAS_FILE, IMAGES_FILE, POINTS_FILE};
use salient3d::{Error, Result};

use crate::config::PipelineConfig;

pub const CLOUD_FILE: &str = "cloud.ply";
pub const SEGMENTATION_FILE: &str = "segmentation.ply";
pub const BOX_OUT_FILE: &str = "box.json";
pub const PLANE_OUT_FILE: &str = "plane.json";
pub const PSEUDO_LABELS_FILE: &str = "pseudo_labels.ply";
pub const WEIGHTS_FILE: &str = "weights.artw";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const SAMPLES_FILE: &str = "sdf_samples.json";

/// Scan id given to a box read from a single file.
const SINGLE_SCAN: &str = "scan";

macro_rules! set_flags {
    ($cfg:expr, $($key:literal => $val:expr),* $(,)?) => {{
        $( if let Some(v) = &$val { $cfg.set($key, &v.to_string())?; } )*
    }};
}

fn prepare(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    info!("seed {} deterministic {}", cfg.seed, cfg.deterministic);
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Missing reconstruction tables are I/O failures at the command line.
fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)))
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_cloud(path: &Path) -> Result<FeaturedPointCloud> {
    info!("reading {}", path.display());
    FeaturedPointCloud::load_ply(path)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapeArg {
    Box,
    Sphere,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    foreground_points: Option<usize>,
    #[arg(long)]
    ground_points: Option<usize>,
    #[arg(long)]
    clutter_points: Option<usize>,
    #[arg(long, value_enum)]
    shape: Option<ShapeArg>,
    /// Yaw of the object about the vertical, radians [default: drawn from the seed].
    #[arg(long, allow_hyphen_values = true)]
    yaw: Option<f64>,
    /// Per-channel Gaussian noise on point features.
    #[arg(long)]
    feature_noise: Option<f64>,
    /// Gaussian noise on observed pixels.
    #[arg(long)]
    pixel_noise: Option<f64>,
    #[arg(long)]
    cameras: Option<usize>,
}

pub fn synth(cfg: &mut PipelineConfig, a: SynthArgs) -> Result<Value> {
    prepare(cfg)?;
    let mut spec = SceneSpec { seed: cfg.seed, ..SceneSpec::default() };
    if let Some(v) = a.foreground_points {
        spec.foreground_points = v;
    }
    if let Some(v) = a.ground_points {
        spec.ground_points = v;
    }
    if let Some(v) = a.clutter_points {
        spec.clutter_points = v;
    }
    match a.shape {
        Some(ShapeArg::Box) | None => {}
        Some(ShapeArg::Sphere) => spec.shape = Shape::Sphere { radius: 0.4 },
    }
    if a.yaw.is_some() {
        spec.yaw = a.yaw;
    }
    if let Some(v) = a.feature_noise {
        spec.features.noise = v;
    }
    if let Some(v) = a.pixel_noise {
        spec.pixel_noise = v;
    }
    if let Some(v) = a.cameras {
        spec.cameras.count = v;
    }
    let scene = generate_synthetic_scene(&spec)?;
    scene.write(&cfg.output_dir)?;
    let foreground = scene.gt_labels.iter().filter(|&&l| l).count();
    Ok(json!({
        "points": scene.sfm.points().len(),
        "foreground": foreground,
        "frames": scene.sfm.frames().len(),
        "output_dir": path_str(&cfg.output_dir),
    }))
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Directory with cameras.txt, images.txt and points3D.txt [default: <output-dir>/sparse].
    #[arg(long)]
    sfm_dir: Option<PathBuf>,
    /// ARFS feature file [default: <output-dir>/features.arfs].
    #[arg(long)]
    features: Option<PathBuf>,
    /// Fused cloud PLY [default: <output-dir>/cloud.ply].
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn fuse(cfg: &mut PipelineConfig, a: FuseArgs) -> Result<Value> {
    if let Some(p) = a.sfm_dir {
        cfg.sfm_dir = Some(p);
    }
    if let Some(p) = a.features {
        cfg.features = Some(p);
    }
    prepare(cfg)?;
    let sfm_dir = cfg.sfm_dir.clone().unwrap_or_else(|| cfg.out(SPARSE_DIR));
    let features = cfg.features.clone().unwrap_or_else(|| cfg.out(FEATURES_FILE));
    let out = a.out.unwrap_or_else(|| cfg.out(CLOUD_FILE));
    for table in [CAMERAS_FILE, IMAGES_FILE, POINTS_FILE] {
        require(&sfm_dir.join(table))?;
    }
    let sfm = parse_sfm(&sfm_dir)?;
    let store = load_feature_store(&features)?;
    let cloud = fuse_point_features(&sfm, &store)?;
    ensure_parent(&out)?;
    cloud.save_ply(&out)?;
    Ok(json!({
        "points": cloud.len(),
        "dropped": sfm.points().len() - cloud.len(),
        "heads": cloud.heads,
        "head_dim": cloud.head_dim,
        "cloud": path_str(&out),
    }))
}

#[derive(Debug, Args)]
pub struct NcutFlags {
    /// Fixed voxel edge; overrides --target-count.
    #[arg(long)]
    voxel: Option<f64>,
    /// Largest point count handed to the graph.
    #[arg(long)]
    target_count: Option<usize>,
    /// Spatial kernel scale [default: 0.2 x bounding-sphere radius].
    #[arg(long)]
    sigma_s: Option<f64>,
    #[arg(long)]
    feature_exponent: Option<f64>,
}

impl NcutFlags {
    fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        set_flags!(cfg,
            "voxel" => self.voxel,
            "target_count" => self.target_count,
            "sigma_s" => self.sigma_s,
            "feature_exponent" => self.feature_exponent,
        );
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct SegmentNcutArgs {
    /// Fused cloud [default: <output-dir>/cloud.ply].
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Label PLY [default: <output-dir>/segmentation.ply].
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    ncut: NcutFlags,
}

pub fn segment_ncut(cfg: &mut PipelineConfig, a: SegmentNcutArgs) -> Result<Value> {
    a.ncut.apply(cfg)?;
    prepare(cfg)?;
    let cloud = load_cloud(&a.cloud.unwrap_or_else(|| cfg.out(CLOUD_FILE)))?;
    let out = a.out.unwrap_or_else(|| cfg.out(SEGMENTATION_FILE));
    let t = Instant::now();
    let seg = pipeline::segment_ncut(&cloud, &cfg.ncut_options())?;
    info!("ncut on {} vertices in {:?}", seg.downsampled.cloud.len(), t.elapsed());
    LabelFile::from_foreground(&cloud, &seg.labels)?.save_ply(&cloud, ensure_then(&out)?)?;
    let summary = seg.segmentation.summary();
    Ok(json!({
        "ncut_value": summary.ncut_value,
        "lambda2": summary.lambda2,
        "sizes": summary.sizes,
        "vertices": seg.downsampled.cloud.len(),
        "foreground": seg.labels.iter().filter(|&&l| l).count(),
        "points": cloud.len(),
        "segmentation": path_str(&out),
    }))
}

fn ensure_then(path: &Path) -> Result<&Path> {
    ensure_parent(path)?;
    Ok(path)
}

#[derive(Debug, Args)]
pub struct SegmentTransformerArgs {
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// ARTW weight file.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn segment_transformer(cfg: &mut PipelineConfig, a: SegmentTransformerArgs) -> Result<Value> {
    if let Some(p) = a.weights {
        cfg.weights = Some(p);
    }
    prepare(cfg)?;
    let weights = cfg
        .weights
        .clone()
        .ok_or_else(|| Error::invalid("weights", "required; pass --weights or set `weights` in the config file"))?;
    let model = load_weights(&weights)?;
    let cloud = load_cloud(&a.cloud.unwrap_or_else(|| cfg.out(CLOUD_FILE)))?;
    let out = a.out.unwrap_or_else(|| cfg.out(SEGMENTATION_FILE));
    let labels = predict_labels(&model, &cloud)?;
    LabelFile::from_foreground(&cloud, &labels)?.save_ply(&cloud, ensure_then(&out)?)?;
    let fg = labels.iter().filter(|&&l| l).count();
    Ok(json!({
        "sizes": [fg, labels.len() - fg],
        "points": cloud.len(),
        "segmentation": path_str(&out),
    }))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Scene directory holding cloud.ply and pseudo_labels.ply; repeatable [default: <output-dir>].
    #[arg(long = "scene", value_name = "DIR")]
    scenes: Vec<PathBuf>,
    /// ARTW output [default: <output-dir>/weights.artw].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Line-delimited JSON training log [default: <output-dir>/train_log.jsonl].
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    attn_heads: Option<usize>,
    /// Positional-encoding frequency bands.
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Disable the per-head random rotation of input features.
    #[arg(long)]
    no_augment: bool,
}

pub fn train(cfg: &mut PipelineConfig, a: TrainArgs) -> Result<Value> {
    set_flags!(cfg,
        "d_model" => a.d_model,
        "attn_heads" => a.attn_heads,
        "bands" => a.bands,
        "lr" => a.lr,
        "steps" => a.steps,
    );
    if a.no_augment {
        cfg.augment = false;
    }
    prepare(cfg)?;
    let scenes = if a.scenes.is_empty() { vec![cfg.output_dir.clone()] } else { a.scenes };
    let mut clouds = Vec::with_capacity(scenes.len());
    for dir in &scenes {
        let cloud = load_cloud(&dir.join(CLOUD_FILE))?;
        let labels = LabelFile::load_ply(dir.join(PSEUDO_LABELS_FILE))?;
        let targets = labels.targets(&cloud)?;
        clouds.push((cloud, targets));
    }
    let (heads, head_dim) = (clouds[0].0.heads, clouds[0].0.head_dim);
    let config = cfg.model_config(heads, head_dim);
    let examples = clouds
        .into_iter()
        .map(|(cloud, targets)| {
            Ok(TrainingExample { input: prepare_input(&config, &cloud)?, targets })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = SegTransformer::new(config, cfg.seed)?;
    let out = a.out.unwrap_or_else(|| cfg.out(WEIGHTS_FILE));
    let log_path = a.log.unwrap_or_else(|| cfg.out(TRAIN_LOG_FILE));
    ensure_parent(&log_path)?;
    let file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let mut write_err = None;
    let t = Instant::now();
    let losses = train_model(&mut model, &examples, &cfg.train_options(), |step, loss| {
        if write_err.is_none() {
            if let Err(e) = writeln!(log, "{}", json!({ "step": step, "loss": loss })) {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::io(&log_path, e));
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    info!("trained {} steps in {:?}", losses.len(), t.elapsed());
    ensure_parent(&out)?;
    save_weights(&model, &out)?;
    Ok(json!({
        "scenes": examples.len(),
        "steps": losses.len(),
        "parameters": model.parameter_count(),
        "initial_loss": losses.first(),
        "final_loss": losses.last(),
        "weights": path_str(&out),
        "log": path_str(&log_path),
    }))
}

#[derive(Debug, Args)]
pub struct BoxArgs {
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Label PLY [default: <output-dir>/segmentation.ply].
    #[arg(long)]
    segmentation: Option<PathBuf>,
    /// Box JSON [default: <output-dir>/box.json].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plane JSON [default: <output-dir>/plane.json].
    #[arg(long)]
    plane_out: Option<PathBuf>,
    #[arg(long)]
    ransac_iters: Option<usize>,
    /// RANSAC inlier distance.
    #[arg(long)]
    ransac_tol: Option<f64>,
    /// Relative growth of the box extents.
    #[arg(long)]
    box_margin: Option<f64>,
    /// Keep isolated foreground points when fitting the box.
    #[arg(long)]
    no_outlier_filter: bool,
}

pub fn fit_box(cfg: &mut PipelineConfig, a: BoxArgs) -> Result<Value> {
    set_flags!(cfg,
        "ransac_iters" => a.ransac_iters,
        "ransac_tol" => a.ransac_tol,
        "box_margin" => a.box_margin,
    );
    if a.no_outlier_filter {
        cfg.outlier_filter = false;
    }
    prepare(cfg)?;
    let cloud = load_cloud(&a.cloud.unwrap_or_else(|| cfg.out(CLOUD_FILE)))?;
    let seg_path = a.segmentation.unwrap_or_else(|| cfg.out(SEGMENTATION_FILE));
    let labels = LabelFile::load_ply(&seg_path)?.foreground(&cloud)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (plane, bbox) = estimate_box(&cloud, &labels_as_segmentation(labels), &cfg.box_options(), &mut rng)?;
    let out = a.out.unwrap_or_else(|| cfg.out(BOX_OUT_FILE));
    let plane_out = a.plane_out.unwrap_or_else(|| cfg.out(PLANE_OUT_FILE));
    write_text(&out, &(bbox.to_json() + "\n"))?;
    write_text(&plane_out, &(plane.to_json() + "\n"))?;
    Ok(json!({
        "center": bbox.center.as_slice(),
        "half_extents": bbox.half_extents.as_slice(),
        "volume": bbox.volume(),
        "plane_normal": plane.normal.as_slice(),
        "plane_offset": plane.offset,
        "plane_inliers": plane.inliers.len(),
        "box": path_str(&out),
        "plane": path_str(&plane_out),
    }))
}

#[derive(Debug, Args)]
pub struct PseudoLabelArgs {
    #[arg(long)]
    cloud: Option<PathBuf>,
    #[arg(long)]
    segmentation: Option<PathBuf>,
    /// Box JSON [default: <output-dir>/box.json].
    #[arg(long = "box")]
    bbox: Option<PathBuf>,
    /// Label PLY with 1 positive, 0 negative, -1 ignore [default: <output-dir>/pseudo_labels.ply].
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn pseudo_labels(cfg: &mut PipelineConfig, a: PseudoLabelArgs) -> Result<Value> {
    prepare(cfg)?;
    let cloud = load_cloud(&a.cloud.unwrap_or_else(|| cfg.out(CLOUD_FILE)))?;
    let seg_path = a.segmentation.unwrap_or_else(|| cfg.out(SEGMENTATION_FILE));
    let labels = LabelFile::load_ply(&seg_path)?.foreground(&cloud)?;
    let box_path = a.bbox.unwrap_or_else(|| cfg.out(BOX_OUT_FILE));
    let bbox = OrientedBox::from_json(&read_text(&box_path)?)?;
    let pseudo = assign_pseudo_labels(&cloud, &labels_as_segmentation(labels), &bbox)?;
    let out = a.out.unwrap_or_else(|| cfg.out(PSEUDO_LABELS_FILE));
    LabelFile::from_pseudo(&cloud, &pseudo)?.save_ply(&cloud, ensure_then(&out)?)?;
    let [positive, negative, ignore] = pseudo.counts();
    Ok(json!({
        "positive": positive,
        "negative": negative,
        "ignore": ignore,
        "pseudo_labels": path_str(&out),
    }))
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted box JSON, or a directory of `<scan>.json` boxes [default: <output-dir>/box.json].
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Ground-truth box JSON or directory [default: <output-dir>/gt_box.json].
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Compare axis-aligned hulls of the boxes instead of the oriented boxes.
    #[arg(long)]
    axis_aligned: bool,
}

fn load_boxes(path: &Path) -> Result<BTreeMap<String, OrientedBox>> {
    let mut out = BTreeMap::new();
    if path.is_dir() {
        let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
        for entry in entries {
            let p = entry.map_err(|e| Error::io(path, e))?.path();
            if p.extension().is_some_and(|e| e == "json") {
                let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                out.insert(id, OrientedBox::from_json(&read_text(&p)?)?);
            }
        }
        if out.is_empty() {
            return Err(Error::invalid("boxes", format!("{} holds no .json boxes", path.display())));
        }
    } else {
        out.insert(SINGLE_SCAN.to_string(), OrientedBox::from_json(&read_text(path)?)?);
    }
    Ok(out)
}

pub fn eval_detection(cfg: &mut PipelineConfig, a: EvalArgs) -> Result<Value> {
    prepare(cfg)?;
    let pred = load_boxes(&a.pred.unwrap_or_else(|| cfg.out(BOX_OUT_FILE)))?;
    let gt = load_boxes(&a.gt.unwrap_or_else(|| cfg.out(BOX_FILE)))?;
    let mode = if a.axis_aligned { IouMode::AxisAligned } else { IouMode::Oriented };
    Ok(json!({
        "ap@0.5": detection_ap(&pred, &gt, 0.5, mode)?,
        "ap@0.7": detection_ap(&pred, &gt, 0.7, mode)?,
    }))
}

/// Input of `losses-eval`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossInput {
    /// Foreground point cloud the KNN bounds are measured against.
    pub reference: Vec<nalgebra::Vector3<f64>>,
    /// Samples on the ground plane (P_g).
    pub ground: SdfSampleSet,
    /// Samples on the foreground cloud (P_fg).
    pub foreground: SdfSampleSet,
    /// Per-ray accumulated weights.
    pub opacities: Vec<f64>,
    pub l_color: f64,
}

#[derive(Debug, Args)]
pub struct LossesArgs {
    /// JSON with `reference`, `ground`, `foreground`, `opacities` and `l_color` [default: <output-dir>/sdf_samples.json].
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Training step for the annealed weights of L_g and L_fg.
    #[arg(long)]
    step: Option<u64>,
    #[arg(long)]
    knn_k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    anneal_steps: Option<i64>,
}

pub fn losses_eval(cfg: &mut PipelineConfig, a: LossesArgs) -> Result<Value> {
    set_flags!(cfg,
        "knn_k" => a.knn_k,
        "lambda" => a.lambda,
        "epsilon" => a.epsilon,
        "alpha" => a.alpha,
        "beta" => a.beta,
        "gamma" => a.gamma,
        "zeta" => a.zeta,
        "anneal_steps" => a.anneal_steps,
    );
    prepare(cfg)?;
    let path = a.samples.unwrap_or_else(|| cfg.out(SAMPLES_FILE));
    let input: LossInput = serde_json::from_str(&read_text(&path)?).map_err(|e| Error::parse(&path, e.to_string()))?;
    if !input.l_color.is_finite() {
        return Err(Error::invalid("l_color", "must be finite"));
    }
    let hinge = |samples: &SdfSampleSet, ground: bool| -> Result<f64> {
        if samples.points.is_empty() {
            return Ok(0.0);
        }
        let stats = knn_stats(&samples.points, &input.reference, cfg.knn_k, cfg.lambda)?;
        if ground {
            loss_ground(samples, &stats)
        } else {
            loss_fg(samples, &stats)
        }
    };
    let l_g = hinge(&input.ground, true)?;
    let l_fg = hinge(&input.foreground, false)?;
    let gradients: Vec<_> = [&input.ground, &input.foreground]
        .iter()
        .filter_map(|s| s.gradients.as_ref())
        .flatten()
        .copied()
        .collect();
    let l_eik = if gradients.is_empty() { 0.0 } else { loss_eikonal(&gradients)? };
    let l_bin = if input.opacities.is_empty() { 0.0 } else { loss_bin(&input.opacities, cfg.epsilon)? };
    let mut w = cfg.loss_weights;
    if let (Some(step), Some(anneal)) = (a.step, cfg.anneal_steps) {
        w.beta = anneal_weight(w.beta, step, anneal)?;
        w.gamma = anneal_weight(w.gamma, step, anneal)?;
    }
    let total = total_loss(input.l_color, l_eik, l_g, l_fg, l_bin, &w)?;
    Ok(json!({
        "l_color": input.l_color,
        "l_eik": l_eik,
        "l_g": l_g,
        "l_fg": l_fg,
        "l_bin": l_bin,
        "total": total,
        "weights": { "alpha": w.alpha, "beta": w.beta, "gamma": w.gamma, "zeta": w.zeta },
        "eikonal_samples": gradients.len(),
    }))
}
