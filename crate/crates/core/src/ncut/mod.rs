//! Spectral bipartition of a neural point cloud.
//!
//! Edge weights combine the grouped cosine similarity of point features with
//! a Gaussian spatial kernel. The graph is split by the Normalized Cut
//! relaxation and the side closer to the global [CLS] feature is kept as
//! foreground.

mod affinity;
pub mod eigen;
mod partition;
mod similarity;

pub use affinity::{bounding_sphere_radius, build_affinity, AffinityGraph, AffinityParams, MAX_VERTICES};
pub use partition::{ncut_value, spectral_bipartition, Segmentation, SegmentationSummary};
pub use similarity::grouped_cosine_similarity;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::fusion::FeaturedPointCloud;

const SIDE_TIE_TOLERANCE: f64 = 1e-9;

fn aabb_volume<'a>(points: impl Iterator<Item = &'a Vector3<f64>>) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let e = hi - lo;
    e.x * e.y * e.z
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Orients a bipartition so that `true` marks the salient side.
///
/// The class whose mean (flattened) feature is more cosine-similar to the
/// cloud's [CLS] vector wins; near-ties go to the class with the smaller
/// axis-aligned bounding volume.
pub fn select_foreground(cloud: &FeaturedPointCloud, seg: &Segmentation) -> Result<Segmentation> {
    if seg.labels.len() != cloud.len() {
        return Err(Error::invalid("segmentation", "label count differs from cloud size"));
    }
    let (n_true, n_false) = seg.sizes();
    if n_true == 0 || n_false == 0 {
        return Err(Error::InvalidPartition);
    }
    let c = cloud.channels();
    let mut mean = [vec![0.0f64; c], vec![0.0f64; c]];
    for (p, &l) in cloud.points.iter().zip(&seg.labels) {
        let m = &mut mean[usize::from(l)];
        for (acc, v) in m.iter_mut().zip(&p.feature) {
            *acc += f64::from(*v);
        }
    }
    let cls: Vec<f64> = cloud.cls.iter().map(|&v| f64::from(v)).collect();
    // Mean scaling does not change cosine.
    let sim_false = cosine(&mean[0], &cls);
    let sim_true = cosine(&mean[1], &cls);

    let keep = if (sim_true - sim_false).abs() < SIDE_TIE_TOLERANCE {
        let side_volume = |side: bool| {
            aabb_volume(
                cloud
                    .points
                    .iter()
                    .zip(&seg.labels)
                    .filter(move |(_, &l)| l == side)
                    .map(|(p, _)| &p.position),
            )
        };
        side_volume(true) <= side_volume(false)
    } else {
        sim_true > sim_false
    };
    let mut out = seg.clone();
    if !keep {
        out.labels.iter_mut().for_each(|l| *l = !*l);
        out.fiedler.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(out)
}
