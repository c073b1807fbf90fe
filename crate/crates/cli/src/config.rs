//! Pipeline configuration: defaults, then a flat `key = value` file, then flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use salient3d::geometry::{PlaneParams, BOX_MARGIN};
use salient3d::ncut::AffinityParams;
use salient3d::pipeline::{BoxOptions, NcutOptions, OutlierParams, DEFAULT_TARGET_COUNT};
use salient3d::regularizers::{LossWeights, DEFAULT_EPSILON, DEFAULT_K, DEFAULT_LAMBDA};
use salient3d::seg_transformer::{ModelConfig, TrainOptions, DEFAULT_BANDS};
use salient3d::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sfm_dir: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub weights: Option<PathBuf>,

    pub voxel: Option<f64>,
    pub target_count: usize,
    pub sigma_s: Option<f64>,
    pub feature_exponent: f64,

    pub ransac_iters: usize,
    pub ransac_tol: f64,
    pub box_margin: f64,
    pub outlier_filter: bool,
    pub outlier_k: usize,
    pub outlier_ratio: f64,

    pub d_model: usize,
    pub attn_heads: usize,
    pub bands: usize,
    pub lr: f64,
    pub steps: usize,
    pub augment: bool,

    pub knn_k: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub loss_weights: LossWeights,
    pub anneal_steps: Option<i64>,

    pub deterministic: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let train = TrainOptions::default();
        PipelineConfig {
            sfm_dir: None,
            features: None,
            output_dir: PathBuf::from("."),
            weights: None,
            voxel: None,
            target_count: DEFAULT_TARGET_COUNT,
            sigma_s: None,
            feature_exponent: AffinityParams::default().feature_exponent,
            ransac_iters: PlaneParams::default().iters,
            ransac_tol: PlaneParams::default().tol,
            box_margin: BOX_MARGIN,
            outlier_filter: true,
            outlier_k: OutlierParams::default().k,
            outlier_ratio: OutlierParams::default().max_ratio,
            d_model: model.d_model,
            attn_heads: model.attn_heads,
            bands: DEFAULT_BANDS,
            lr: train.lr,
            steps: train.steps,
            augment: true,
            knn_k: DEFAULT_K,
            lambda: DEFAULT_LAMBDA,
            epsilon: DEFAULT_EPSILON,
            loss_weights: LossWeights::default(),
            anneal_steps: None,
            deterministic: false,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::invalid(key, format!("expected a boolean, got `{value}`"))),
    }
}

/// `none` clears an optional value.
fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl PipelineConfig {
    /// Sets one field from its textual form. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "sfm_dir" => self.sfm_dir = Some(value.into()),
            "features" => self.features = Some(value.into()),
            "output_dir" => self.output_dir = value.into(),
            "weights" => self.weights = Some(value.into()),
            "voxel" => self.voxel = parse_opt(key, value)?,
            "target_count" => self.target_count = parse(key, value)?,
            "sigma_s" => self.sigma_s = parse_opt(key, value)?,
            "feature_exponent" => self.feature_exponent = parse(key, value)?,
            "ransac_iters" => self.ransac_iters = parse(key, value)?,
            "ransac_tol" => self.ransac_tol = parse(key, value)?,
            "box_margin" => self.box_margin = parse(key, value)?,
            "outlier_filter" => self.outlier_filter = parse_bool(key, value)?,
            "outlier_k" => self.outlier_k = parse(key, value)?,
            "outlier_ratio" => self.outlier_ratio = parse(key, value)?,
            "d_model" => self.d_model = parse(key, value)?,
            "attn_heads" => self.attn_heads = parse(key, value)?,
            "bands" => self.bands = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "augment" => self.augment = parse_bool(key, value)?,
            "knn_k" => self.knn_k = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "alpha" => self.loss_weights.alpha = parse(key, value)?,
            "beta" => self.loss_weights.beta = parse(key, value)?,
            "gamma" => self.loss_weights.gamma = parse(key, value)?,
            "zeta" => self.loss_weights.zeta = parse(key, value)?,
            "anneal_steps" => self.anneal_steps = parse_opt(key, value)?,
            "deterministic" => self.deterministic = parse_bool(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(Error::invalid(key, "unknown configuration key")),
        }
        Ok(())
    }

    /// Applies `key = value` lines. `#` starts a comment; blank lines are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(key, format!("must be positive, got {v}")))
            }
        };
        if let Some(v) = self.voxel {
            positive("voxel", v)?;
        }
        if let Some(v) = self.sigma_s {
            positive("sigma_s", v)?;
        }
        if self.target_count == 0 {
            return Err(Error::invalid("target_count", "must be at least 1"));
        }
        positive("feature_exponent", self.feature_exponent)?;
        if self.ransac_iters == 0 {
            return Err(Error::invalid("ransac_iters", "must be at least 1"));
        }
        positive("ransac_tol", self.ransac_tol)?;
        if !(self.box_margin.is_finite() && self.box_margin >= 0.0) {
            return Err(Error::invalid("box_margin", "must be finite and >= 0"));
        }
        if self.outlier_k == 0 {
            return Err(Error::invalid("outlier_k", "must be at least 1"));
        }
        if !(self.outlier_ratio.is_finite() && self.outlier_ratio >= 1.0) {
            return Err(Error::invalid("outlier_ratio", "must be finite and at least 1"));
        }
        positive("lr", self.lr)?;
        if self.knn_k == 0 {
            return Err(Error::invalid("knn_k", "must be at least 1"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid("lambda", "must be finite and >= 0"));
        }
        positive("epsilon", self.epsilon)?;
        self.loss_weights.validate()?;
        if let Some(a) = self.anneal_steps {
            if a <= 0 {
                return Err(Error::invalid("anneal_steps", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn ncut_options(&self) -> NcutOptions {
        NcutOptions {
            voxel: self.voxel,
            target_count: self.target_count,
            affinity: AffinityParams { sigma_s: self.sigma_s, feature_exponent: self.feature_exponent },
        }
    }

    pub fn box_options(&self) -> BoxOptions {
        BoxOptions {
            plane: PlaneParams { iters: self.ransac_iters, tol: self.ransac_tol },
            margin: self.box_margin,
            outliers: self
                .outlier_filter
                .then_some(OutlierParams { k: self.outlier_k, max_ratio: self.outlier_ratio }),
        }
    }

    pub fn model_config(&self, feature_heads: usize, feature_head_dim: usize) -> ModelConfig {
        ModelConfig {
            feature_heads,
            feature_head_dim,
            bands: self.bands,
            d_model: self.d_model,
            attn_heads: self.attn_heads,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions { lr: self.lr, steps: self.steps, augment: self.augment, seed: self.seed }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_defaults() {
        let mut c = PipelineConfig::default();
        c.apply_text("# comment\nlr = 0.01\n\nvoxel = 0.05  # trailing\nseed=9\n", Path::new("c")).unwrap();
        assert_eq!(c.lr, 0.01);
        assert_eq!(c.voxel, Some(0.05));
        assert_eq!(c.seed, 9);
        assert_eq!(c.steps, PipelineConfig::default().steps);
    }

    #[test]
    fn errors_name_the_field() {
        let mut c = PipelineConfig::default();
        let e = c.apply_text("bogus = 1", Path::new("c")).unwrap_err();
        assert!(e.to_string().contains("bogus"));
        let e = c.apply_text("steps = many", Path::new("c")).unwrap_err();
        assert!(e.to_string().contains("steps"));
        assert!(c.apply_text("no equals sign", Path::new("c")).is_err());
        c.set("lr", "-1").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("lr"));
    }

    #[test]
    fn none_clears_optionals() {
        let mut c = PipelineConfig::default();
        c.set("voxel", "0.1").unwrap();
        c.set("voxel", "none").unwrap();
        assert_eq!(c.voxel, None);
    }
}
