//! Point-cloud segmentation Transformer: Fourier positional encoding, two
//! pre-norm encoder layers with linear attention, and a [CLS]-prototype
//! correlation head, trained with ignore-aware binary cross-entropy.
//!
//! Arithmetic is f64 throughout; parameters are kept f32-representable so
//! the weight file reproduces a model exactly.

mod attention;
mod weights;

pub use attention::{linear_attention, positional_encode, ATTENTION_EPS};
pub use weights::{decode_weights, encode_weights, load_weights, save_weights, MAGIC as WEIGHTS_MAGIC};

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FeaturedPointCloud;

pub const LAYERS: usize = 2;
pub const DEFAULT_BANDS: usize = 6;
pub const DECISION_THRESHOLD: f64 = 0.5;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Head count of the point features.
    pub feature_heads: usize,
    pub feature_head_dim: usize,
    pub bands: usize,
    pub d_model: usize,
    /// Attention heads inside the encoder.
    pub attn_heads: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_heads: 4,
            feature_head_dim: 8,
            bands: DEFAULT_BANDS,
            d_model: 64,
            attn_heads: 4,
        }
    }
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        self.feature_heads * self.feature_head_dim + 6 * self.bands
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_heads == 0 || self.feature_head_dim == 0 {
            return Err(Error::invalid("feature dims", "heads and head_dim must be >= 1"));
        }
        if self.d_model == 0 || self.attn_heads == 0 || !self.d_model.is_multiple_of(self.attn_heads) {
            return Err(Error::invalid(
                "d_model",
                format!("{} is not divisible into {} attention heads", self.d_model, self.attn_heads),
            ));
        }
        Ok(())
    }

    /// Parameter tensor shapes in declaration order.
    pub fn shapes(&self) -> Vec<(String, usize, usize)> {
        let (d, h) = (self.d_model, 2 * self.d_model);
        let mut out = vec![("w_in".to_string(), d, self.input_dim()), ("b_in".to_string(), d, 1)];
        for l in 0..LAYERS {
            let layer = [
                ("ln1_gain", d, 1),
                ("ln1_bias", d, 1),
                ("w_q", d, d),
                ("b_q", d, 1),
                ("w_k", d, d),
                ("b_k", d, 1),
                ("w_v", d, d),
                ("b_v", d, 1),
                ("w_o", d, d),
                ("b_o", d, 1),
                ("ln2_gain", d, 1),
                ("ln2_bias", d, 1),
                ("w_1", h, d),
                ("b_1", h, 1),
                ("w_2", d, h),
                ("b_2", d, 1),
            ];
            out.extend(layer.iter().map(|(n, r, c)| (format!("layer{l}.{n}"), *r, *c)));
        }
        out.push(("w_proto".to_string(), d, d));
        out.push(("b_proto".to_string(), d, 1));
        out
    }
}

const W_IN: usize = 0;
const B_IN: usize = 1;
const LAYER_BASE: usize = 2;
const PER_LAYER: usize = 16;
const W_PROTO: usize = LAYER_BASE + LAYERS * PER_LAYER;
const B_PROTO: usize = W_PROTO + 1;

mod slot {
    pub const LN1_G: usize = 0;
    pub const LN1_B: usize = 1;
    pub const WQ: usize = 2;
    pub const BQ: usize = 3;
    pub const WK: usize = 4;
    pub const BK: usize = 5;
    pub const WV: usize = 6;
    pub const BV: usize = 7;
    pub const WO: usize = 8;
    pub const BO: usize = 9;
    pub const LN2_G: usize = 10;
    pub const LN2_B: usize = 11;
    pub const W1: usize = 12;
    pub const B1: usize = 13;
    pub const W2: usize = 14;
    pub const B2: usize = 15;
}

fn round_f32(m: &mut DMatrix<f64>) {
    m.iter_mut().for_each(|v| *v = f64::from(*v as f32));
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegTransformer {
    config: ModelConfig,
    params: Vec<DMatrix<f64>>,
}

/// Per-tensor gradients, aligned with [`SegTransformer::params`].
pub type Gradients = Vec<DMatrix<f64>>;

impl SegTransformer {
    /// Glorot-uniform weights, zero biases, unit layer-norm gains.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = config
            .shapes()
            .into_iter()
            .map(|(name, r, c)| {
                if name.ends_with("gain") {
                    DMatrix::from_element(r, c, 1.0)
                } else if c == 1 {
                    DMatrix::zeros(r, c)
                } else {
                    let bound = (6.0 / (r + c) as f64).sqrt();
                    let mut m = DMatrix::from_fn(r, c, |_, _| rng.random_range(-bound..bound));
                    round_f32(&mut m);
                    m
                }
            })
            .collect();
        Ok(SegTransformer { config, params })
    }

    /// Builds a model from tensors in declaration order.
    pub fn from_params(config: ModelConfig, params: Vec<DMatrix<f64>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.shapes();
        if params.len() != shapes.len()
            || params.iter().zip(&shapes).any(|(p, (_, r, c))| p.shape() != (*r, *c))
        {
            return Err(Error::invalid("params", "tensor shapes do not match the config"));
        }
        if !params.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid("params", "non-finite weight"));
        }
        Ok(SegTransformer { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[DMatrix<f64>] {
        &self.params
    }

    /// Mutable access for perturbation tests; callers keep shapes intact.
    pub fn params_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    fn layer(&self, l: usize, s: usize) -> &DMatrix<f64> {
        &self.params[LAYER_BASE + l * PER_LAYER + s]
    }
}

fn column<S: nalgebra::Storage<f64, nalgebra::Dyn, nalgebra::U1>>(v: nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::U1, S>) -> DMatrix<f64> {
    DMatrix::from_iterator(v.len(), 1, v.iter().copied())
}

fn affine(x: &DMatrix<f64>, w: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = x * w.transpose();
    let bt = b.transpose();
    for mut row in y.row_iter_mut() {
        row += &bt;
    }
    y
}

/// Returns `(dx, dw, db)`.
fn affine_backward(x: &DMatrix<f64>, w: &DMatrix<f64>, dy: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    (dy * w, dy.transpose() * x, column(dy.row_sum().transpose()))
}

struct NormCache {
    xhat: DMatrix<f64>,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &DMatrix<f64>, gain: &DMatrix<f64>, bias: &DMatrix<f64>) -> (DMatrix<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.nrows());
    for mut row in xhat.row_iter_mut() {
        let mean = row.sum() / d;
        row.add_scalar_mut(-mean);
        let var = row.norm_squared() / d;
        let s = 1.0 / (var + LN_EPS).sqrt();
        row *= s;
        inv_std.push(s);
    }
    let mut y = xhat.clone();
    for mut row in y.row_iter_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = *v * gain[c] + bias[c];
        }
    }
    (y, NormCache { xhat, inv_std })
}

/// Returns `(dx, d_gain, d_bias)`.
fn layer_norm_backward(dy: &DMatrix<f64>, gain: &DMatrix<f64>, cache: &NormCache) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let d_gain = column(dy.component_mul(&cache.xhat).row_sum().transpose());
    let d_bias = column(dy.row_sum().transpose());
    let d = dy.ncols() as f64;
    let mut dx = dy.clone();
    for (i, mut row) in dx.row_iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v *= gain[c];
        }
        let xhat = cache.xhat.row(i);
        let mean = row.sum() / d;
        let mean_x = row.dot(&xhat) / d;
        for (c, v) in row.iter_mut().enumerate() {
            *v = cache.inv_std[i] * (*v - mean - xhat[c] * mean_x);
        }
    }
    (dx, d_gain, d_bias)
}

const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_prime(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

struct LayerCache {
    z: DMatrix<f64>,
    ln1: NormCache,
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    k: DMatrix<f64>,
    v: DMatrix<f64>,
    heads: Vec<attention::HeadCache>,
    att: DMatrix<f64>,
    ln2: NormCache,
    b: DMatrix<f64>,
    pre: DMatrix<f64>,
    act: DMatrix<f64>,
}

fn layer_forward(model: &SegTransformer, l: usize, z: DMatrix<f64>) -> Result<(DMatrix<f64>, LayerCache)> {
    use slot::*;
    let p = |s| model.layer(l, s);
    let (a, ln1) = layer_norm(&z, p(LN1_G), p(LN1_B));
    let q = affine(&a, p(WQ), p(BQ));
    let k = affine(&a, p(WK), p(BK));
    let v = affine(&a, p(WV), p(BV));
    let (att, heads) = attention::forward_cached(&q, &k, &v, model.config.attn_heads)?;
    let z1 = &z + affine(&att, p(WO), p(BO));
    let (b, ln2) = layer_norm(&z1, p(LN2_G), p(LN2_B));
    let pre = affine(&b, p(W1), p(B1));
    let act = pre.map(gelu);
    let z2 = &z1 + affine(&act, p(W2), p(B2));
    Ok((z2, LayerCache { z, ln1, a, q, k, v, heads, att, ln2, b, pre, act }))
}

/// Backpropagates `dz2` through one layer, writing parameter gradients.
fn layer_backward(model: &SegTransformer, l: usize, cache: &LayerCache, dz2: DMatrix<f64>, grads: &mut Gradients) -> DMatrix<f64> {
    use slot::*;
    let base = LAYER_BASE + l * PER_LAYER;
    let p = |s| model.layer(l, s);
    let mut dz1 = dz2.clone();
    let (d_act, dw2, db2) = affine_backward(&cache.act, p(W2), &dz2);
    grads[base + W2] += dw2;
    grads[base + B2] += db2;
    let d_pre = d_act.zip_map(&cache.pre, |g, x| g * gelu_prime(x));
    let (d_b, dw1, db1) = affine_backward(&cache.b, p(W1), &d_pre);
    grads[base + W1] += dw1;
    grads[base + B1] += db1;
    let (dx, dg, dbeta) = layer_norm_backward(&d_b, p(LN2_G), &cache.ln2);
    grads[base + LN2_G] += dg;
    grads[base + LN2_B] += dbeta;
    dz1 += dx;

    let mut dz = dz1.clone();
    let (d_att, dwo, dbo) = affine_backward(&cache.att, p(WO), &dz1);
    grads[base + WO] += dwo;
    grads[base + BO] += dbo;
    let (dq, dk, dv) = attention::backward(&cache.q, &cache.k, &cache.v, &cache.heads, &d_att);
    let mut da = DMatrix::zeros(cache.a.nrows(), cache.a.ncols());
    for (d, w, b) in [(&dq, WQ, BQ), (&dk, WK, BK), (&dv, WV, BV)] {
        let (dx, dw, db) = affine_backward(&cache.a, p(w), d);
        grads[base + w] += dw;
        grads[base + b] += db;
        da += dx;
    }
    let (dx, dg, dbeta) = layer_norm_backward(&da, p(LN1_G), &cache.ln1);
    grads[base + LN1_G] += dg;
    grads[base + LN1_B] += dbeta;
    dz += dx;
    debug_assert_eq!(dz.shape(), cache.z.shape());
    dz
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure(format!("non-finite {what}")))
    }
}

/// Runs both encoder layers on a `(n+1) × d_model` token matrix whose row 0
/// is the [CLS] token.
pub fn encoder_forward(model: &SegTransformer, tokens: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    encode(model, tokens).map(|(z, _)| z)
}

fn encode(model: &SegTransformer, tokens: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<LayerCache>)> {
    if tokens.ncols() != model.config.d_model || tokens.nrows() < 2 {
        return Err(Error::invalid(
            "tokens",
            format!("need >= 2 rows of width {}, got {:?}", model.config.d_model, tokens.shape()),
        ));
    }
    let mut z = tokens.clone();
    let mut caches = Vec::with_capacity(LAYERS);
    for l in 0..LAYERS {
        let (next, cache) = layer_forward(model, l, z)?;
        check_finite(&next, "encoder activation")?;
        caches.push(cache);
        z = next;
    }
    Ok((z, caches))
}

fn zero_grads(model: &SegTransformer) -> Gradients {
    model.params.iter().map(|p| DMatrix::zeros(p.nrows(), p.ncols())).collect()
}

/// Gradients of `Σ d_out ⊙ encoder(tokens)` with respect to the tokens and
/// the encoder parameters.
pub fn encoder_backward(model: &SegTransformer, tokens: &DMatrix<f64>, d_out: &DMatrix<f64>) -> Result<(DMatrix<f64>, Gradients)> {
    let (z, caches) = encode(model, tokens)?;
    if d_out.shape() != z.shape() {
        return Err(Error::invalid("d_out", "shape differs from the encoder output"));
    }
    let mut grads = zero_grads(model);
    let mut dz = d_out.clone();
    for l in (0..LAYERS).rev() {
        dz = layer_backward(model, l, &caches[l], dz, &mut grads);
    }
    Ok((dz, grads))
}

fn unit_heads(values: impl Iterator<Item = f64>, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    for head in v.chunks_exact_mut(dim) {
        let n = head.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            head.iter_mut().for_each(|x| *x /= n);
        }
    }
    v
}

/// Positions mapped into `[-1, 1]³` by the cloud's bounding box, with one
/// scale for all axes.
pub fn normalize_positions(positions: &[Vector3<f64>]) -> Vec<[f64; 3]> {
    let (mut lo, mut hi) = (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY));
    for p in positions {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let center = (lo + hi) * 0.5;
    let half = ((hi - lo) * 0.5).max();
    let scale = if half > 0.0 { 1.0 / half } else { 1.0 };
    positions
        .iter()
        .map(|p| {
            let q = (p - center) * scale;
            [q.x.clamp(-1.0, 1.0), q.y.clamp(-1.0, 1.0), q.z.clamp(-1.0, 1.0)]
        })
        .collect()
}

/// Model input rows: `[unit-per-head feature ‖ positional encoding]` per
/// point, preceded by the [CLS] row with a zero positional slot.
pub fn prepare_input(config: &ModelConfig, cloud: &FeaturedPointCloud) -> Result<DMatrix<f64>> {
    if cloud.heads != config.feature_heads || cloud.head_dim != config.feature_head_dim {
        return Err(Error::invalid(
            "cloud",
            format!(
                "features are {}x{}, model expects {}x{}",
                cloud.heads, cloud.head_dim, config.feature_heads, config.feature_head_dim
            ),
        ));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    let c = cloud.channels();
    let pe = positional_encode(&normalize_positions(&cloud.positions()), config.bands)?;
    let mut x = DMatrix::zeros(cloud.len() + 1, config.input_dim());
    let cls = unit_heads(cloud.cls.iter().map(|&v| f64::from(v)), cloud.head_dim);
    x.view_mut((0, 0), (1, c)).copy_from_slice(&cls);
    for (i, p) in cloud.points.iter().enumerate() {
        let f = unit_heads(p.feature.iter().map(|&v| f64::from(v)), cloud.head_dim);
        for (k, v) in f.into_iter().enumerate() {
            x[(i + 1, k)] = v;
        }
        for k in 0..pe.ncols() {
            x[(i + 1, c + k)] = pe[(i, k)];
        }
    }
    Ok(x)
}

struct ForwardCache {
    z: DMatrix<f64>,
    proto: DMatrix<f64>,
    layers: Vec<LayerCache>,
}

fn forward(model: &SegTransformer, x: &DMatrix<f64>) -> Result<(Vec<f64>, ForwardCache)> {
    if x.ncols() != model.config.input_dim() {
        return Err(Error::invalid(
            "input",
            format!("width {} differs from model input {}", x.ncols(), model.config.input_dim()),
        ));
    }
    let tokens = affine(x, &model.params[W_IN], &model.params[B_IN]);
    let (z, layers) = encode(model, &tokens)?;
    let cls = column(z.row(0).transpose());
    let proto = &model.params[W_PROTO] * cls + &model.params[B_PROTO];
    let scale = 1.0 / (model.config.d_model as f64).sqrt();
    let logits: Vec<f64> = (1..z.nrows()).map(|i| z.row(i).dot(&proto.transpose()) * scale).collect();
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite logit".into()));
    }
    Ok((logits, ForwardCache { z, proto, layers }))
}

fn backward(model: &SegTransformer, x: &DMatrix<f64>, cache: &ForwardCache, d_logits: &[f64]) -> Gradients {
    let mut grads = zero_grads(model);
    let scale = 1.0 / (model.config.d_model as f64).sqrt();
    let d = model.config.d_model;
    let mut dz = DMatrix::zeros(cache.z.nrows(), d);
    let mut d_proto = DMatrix::zeros(d, 1);
    for (i, &g) in d_logits.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        d_proto += cache.z.row(i + 1).transpose() * (g * scale);
        let mut row = dz.row_mut(i + 1);
        row += cache.proto.transpose() * (g * scale);
    }
    let cls = cache.z.row(0).transpose();
    grads[W_PROTO] += &d_proto * cls.transpose();
    grads[B_PROTO] += &d_proto;
    let d_cls = model.params[W_PROTO].transpose() * &d_proto;
    let mut row0 = dz.row_mut(0);
    row0 += d_cls.transpose();
    for l in (0..LAYERS).rev() {
        dz = layer_backward(model, l, &cache.layers[l], dz, &mut grads);
    }
    let (_, dw, db) = affine_backward(x, &model.params[W_IN], &dz);
    grads[W_IN] += dw;
    grads[B_IN] += db;
    grads
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Point logits for a prepared input.
pub fn logits(model: &SegTransformer, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    forward(model, x).map(|(l, _)| l)
}

/// Foreground probability per point.
pub fn predict(model: &SegTransformer, cloud: &FeaturedPointCloud) -> Result<Vec<f64>> {
    let x = prepare_input(&model.config, cloud)?;
    Ok(logits(model, &x)?.into_iter().map(logistic).collect())
}

/// Foreground decision per point at probability above one half.
pub fn predict_labels(model: &SegTransformer, cloud: &FeaturedPointCloud) -> Result<Vec<bool>> {
    Ok(predict(model, cloud)?.into_iter().map(|p| p > DECISION_THRESHOLD).collect())
}

fn check_targets(targets: &[Option<bool>], n: usize) -> Result<usize> {
    if targets.len() != n {
        return Err(Error::invalid("labels", format!("expected {n} labels, got {}", targets.len())));
    }
    let used = targets.iter().filter(|t| t.is_some()).count();
    if used == 0 {
        return Err(Error::invalid("labels", "every label is ignore"));
    }
    Ok(used)
}

fn bce(logit: f64, y: bool) -> f64 {
    let y = if y { 1.0 } else { 0.0 };
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy over labeled points.
pub fn loss(model: &SegTransformer, x: &DMatrix<f64>, targets: &[Option<bool>]) -> Result<f64> {
    let used = check_targets(targets, x.nrows().saturating_sub(1))?;
    let l = logits(model, x)?;
    Ok(l.iter().zip(targets).filter_map(|(&z, t)| t.map(|y| bce(z, y))).sum::<f64>() / used as f64)
}

/// Loss and its gradient with respect to every parameter.
pub fn loss_and_gradient(model: &SegTransformer, x: &DMatrix<f64>, targets: &[Option<bool>]) -> Result<(f64, Gradients)> {
    let used = check_targets(targets, x.nrows().saturating_sub(1))?;
    let (l, cache) = forward(model, x)?;
    let m = used as f64;
    let mut total = 0.0;
    let d_logits: Vec<f64> = l
        .iter()
        .zip(targets)
        .map(|(&z, t)| match t {
            Some(y) => {
                total += bce(z, *y);
                (logistic(z) - if *y { 1.0 } else { 0.0 }) / m
            }
            None => 0.0,
        })
        .collect();
    let grads = backward(model, x, &cache, &d_logits);
    Ok((total / m, grads))
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(model: &SegTransformer, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid("lr", format!("must be positive, got {lr}")));
        }
        Ok(Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zero_grads(model),
            v: zero_grads(model),
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update and rounds the parameters to f32.
    pub fn apply(&mut self, model: &mut SegTransformer, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in model.params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                p[k] -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
            round_f32(p);
        }
    }
}

/// One optimizer step on a prepared input; returns the loss before the update.
pub fn train_step(model: &mut SegTransformer, opt: &mut Adam, x: &DMatrix<f64>, targets: &[Option<bool>]) -> Result<f64> {
    let (l, grads) = loss_and_gradient(model, x, targets)?;
    if !l.is_finite() || !grads.iter().all(|g| g.iter().all(|v| v.is_finite())) {
        return Err(Error::NumericalFailure("non-finite loss or gradient".into()));
    }
    opt.apply(model, &grads);
    Ok(l)
}

/// A prepared training example.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub input: DMatrix<f64>,
    pub targets: Vec<Option<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub lr: f64,
    pub steps: usize,
    /// Rotate each feature head by a fresh random orthogonal matrix every
    /// step, shared by all tokens of the example. Per-head cosines to the
    /// [CLS] feature are unchanged.
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { lr: 1e-3, steps: 200, augment: false, seed: 0 }
    }
}

/// Haar-random orthogonal matrix.
fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col *= -1.0;
        }
    }
    q
}

/// Applies an independent random orthogonal map to every feature head.
pub fn rotate_feature_heads(config: &ModelConfig, x: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let d = config.feature_head_dim;
    let mut out = x.clone();
    for h in 0..config.feature_heads {
        let q = random_orthogonal(d, rng);
        let block = x.columns(h * d, d) * q.transpose();
        out.columns_mut(h * d, d).copy_from(&block);
    }
    out
}

/// Runs `steps` updates, visiting the examples round-robin. `on_step`
/// receives the step index and its loss.
pub fn train(
    model: &mut SegTransformer,
    examples: &[TrainingExample],
    options: &TrainOptions,
    mut on_step: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("training examples"));
    }
    let mut opt = Adam::new(model, options.lr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let config = model.config;
    let mut losses = Vec::with_capacity(options.steps);
    for step in 0..options.steps {
        let ex = &examples[step % examples.len()];
        let l = if options.augment {
            let x = rotate_feature_heads(&config, &ex.input, &mut rng);
            train_step(model, &mut opt, &x, &ex.targets)?
        } else {
            train_step(model, &mut opt, &ex.input, &ex.targets)?
        };
        on_step(step, l);
        losses.push(l);
    }
    Ok(losses)
}
