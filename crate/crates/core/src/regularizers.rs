//! Geometry regularizers for fitting a salient-object SDF: KNN distance
//! statistics, ground and foreground hinge bounds, the beta opacity prior,
//! the eikonal term and their weighted sum.
//!
//! All functions are evaluators over caller-supplied SDF samples.

use std::num::NonZeroUsize;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 8;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Per-query distance statistics over the K nearest reference points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnStats {
    pub k: usize,
    pub lambda: f64,
    pub mu: Vec<f64>,
    /// Population standard deviation.
    pub sigma: Vec<f64>,
    /// `mu + lambda * sigma`; the lower bound θ on ground points or the
    /// uncertainty τ on foreground points.
    pub bound: Vec<f64>,
}

impl KnnStats {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub zeta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 0.1, beta: 0.1, gamma: 0.1, zeta: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("zeta", self.zeta)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(name, format!("weight must be finite and >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// SDF values at sample points, with optional spatial gradients.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SdfSampleSet {
    pub points: Vec<Vector3<f64>>,
    pub sdf: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradients: Option<Vec<Vector3<f64>>>,
}

impl SdfSampleSet {
    pub fn validate(&self) -> Result<()> {
        if self.sdf.len() != self.points.len() {
            return Err(Error::invalid("sdf", "length differs from points"));
        }
        if let Some(g) = &self.gradients {
            if g.len() != self.points.len() {
                return Err(Error::invalid("gradients", "length differs from points"));
            }
            if !g.iter().all(|v| v.iter().all(|c| c.is_finite())) {
                return Err(Error::invalid("gradients", "non-finite value"));
            }
        }
        if !self.sdf.iter().all(|v| v.is_finite()) || !self.points.iter().all(|p| p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("samples", "non-finite value"));
        }
        Ok(())
    }
}

fn stats_from(k: usize, lambda: f64, distances: impl Iterator<Item = Vec<f64>>) -> KnnStats {
    let (mut mu, mut sigma, mut bound) = (vec![], vec![], vec![]);
    for d in distances {
        let m = d.iter().sum::<f64>() / k as f64;
        let s = (d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / k as f64).sqrt();
        mu.push(m);
        sigma.push(s);
        bound.push(m + lambda * s);
    }
    KnnStats { k, lambda, mu, sigma, bound }
}

fn knn_distances(query: &[Vector3<f64>], reference: &[Vector3<f64>], k: usize, skip_self: bool) -> Result<Vec<Vec<f64>>> {
    let needed = k + usize::from(skip_self);
    if k == 0 || reference.len() < needed {
        return Err(Error::invalid(
            "k",
            format!("need 1 <= k and {needed} reference points, got k={k} with {}", reference.len()),
        ));
    }
    let coords: Vec<[f64; 3]> = reference.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(&coords);
    let count = NonZeroUsize::new(needed).expect("k >= 1");
    Ok(query
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let found = tree.nearest_n::<SquaredEuclidean>(&[q.x, q.y, q.z], count);
            let mut d: Vec<f64> = found
                .iter()
                .filter(|n| !skip_self || n.item as usize != i)
                .map(|n| n.distance.sqrt())
                .collect();
            d.sort_by(f64::total_cmp);
            d.truncate(k);
            d
        })
        .collect())
}

/// Statistics of the `k` nearest reference points to each query. A query
/// that coincides with a reference point counts it at distance zero.
pub fn knn_stats(query: &[Vector3<f64>], reference: &[Vector3<f64>], k: usize, lambda: f64) -> Result<KnnStats> {
    let d = knn_distances(query, reference, k, false)?;
    Ok(stats_from(k, lambda, d.into_iter()))
}

/// Statistics of each point's `k` nearest other points in the same set.
pub fn knn_stats_self(points: &[Vector3<f64>], k: usize, lambda: f64) -> Result<KnnStats> {
    let d = knn_distances(points, points, k, true)?;
    Ok(stats_from(k, lambda, d.into_iter()))
}

fn check_aligned(samples: &SdfSampleSet, stats: &KnnStats) -> Result<()> {
    samples.validate()?;
    if samples.sdf.len() != stats.len() {
        return Err(Error::invalid("stats", "not aligned with the samples"));
    }
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// Mean of `max(θ − |f|, 0)` over ground samples.
pub fn loss_ground(samples: &SdfSampleSet, stats: &KnnStats) -> Result<f64> {
    check_aligned(samples, stats)?;
    let n = samples.sdf.len();
    Ok(mean(samples.sdf.iter().zip(&stats.bound).map(|(f, t)| (t - f.abs()).max(0.0)), n))
}

/// Derivative of [`loss_ground`] with respect to each `f`.
pub fn loss_ground_grad(samples: &SdfSampleSet, stats: &KnnStats) -> Result<Vec<f64>> {
    check_aligned(samples, stats)?;
    let n = samples.sdf.len() as f64;
    Ok(samples
        .sdf
        .iter()
        .zip(&stats.bound)
        .map(|(&f, &t)| if t - f.abs() > 0.0 { -f.signum() / n } else { 0.0 })
        .collect())
}

/// Mean of `max(|f| − τ, 0)` over foreground samples.
pub fn loss_fg(samples: &SdfSampleSet, stats: &KnnStats) -> Result<f64> {
    check_aligned(samples, stats)?;
    let n = samples.sdf.len();
    Ok(mean(samples.sdf.iter().zip(&stats.bound).map(|(f, t)| (f.abs() - t).max(0.0)), n))
}

/// Derivative of [`loss_fg`] with respect to each `f`.
pub fn loss_fg_grad(samples: &SdfSampleSet, stats: &KnnStats) -> Result<Vec<f64>> {
    check_aligned(samples, stats)?;
    let n = samples.sdf.len() as f64;
    Ok(samples
        .sdf
        .iter()
        .zip(&stats.bound)
        .map(|(&f, &t)| if f.abs() - t > 0.0 { f.signum() / n } else { 0.0 })
        .collect())
}

/// Beta-prior barrier on accumulated ray opacities, shifted so `O ∈ {0, 1}`
/// costs exactly zero.
pub fn loss_bin(opacities: &[f64], epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    if let Some(o) = opacities.iter().find(|o| !(0.0..=1.0).contains(*o)) {
        return Err(Error::invalid("opacities", format!("{o} outside [0, 1]")));
    }
    let floor = epsilon.ln() + (1.0 + epsilon).ln();
    let n = opacities.len();
    Ok(mean(
        opacities.iter().map(|o| ((o + epsilon).ln() + (1.0 - o + epsilon).ln() - floor).max(0.0)),
        n,
    ))
}

/// Mean of `(‖∇f‖ − 1)²`.
pub fn loss_eikonal(gradients: &[Vector3<f64>]) -> Result<f64> {
    if !gradients.iter().all(|g| g.iter().all(|c| c.is_finite())) {
        return Err(Error::invalid("gradients", "non-finite value"));
    }
    Ok(mean(gradients.iter().map(|g| (g.norm() - 1.0).powi(2)), gradients.len()))
}

/// `l_color + α l_eik + β l_g + γ l_fg + ζ l_bin`.
pub fn total_loss(l_color: f64, l_eik: f64, l_g: f64, l_fg: f64, l_bin: f64, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    let terms = [l_color, l_eik, l_g, l_fg, l_bin];
    if !terms.iter().all(|t| t.is_finite()) {
        return Err(Error::invalid("loss terms", "non-finite value"));
    }
    Ok(l_color + w.alpha * l_eik + w.beta * l_g + w.gamma * l_fg + w.zeta * l_bin)
}

/// Linear decay from `w0` at step 0 to zero at `anneal_steps`.
pub fn anneal_weight(w0: f64, step: u64, anneal_steps: i64) -> Result<f64> {
    if anneal_steps <= 0 {
        return Err(Error::invalid("anneal_steps", format!("must be positive, got {anneal_steps}")));
    }
    Ok(w0 * (1.0 - step as f64 / anneal_steps as f64).max(0.0))
}
