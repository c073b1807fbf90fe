//! End-to-end helpers chaining fusion, segmentation and box estimation.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{downsample_to_target, voxel_downsample, DownsampledCloud, FeaturedPointCloud};
use crate::geometry::{fit_ground_plane, plane_aligned_obb_with_margin, OrientedBox, PlaneModel, PlaneParams, BOX_MARGIN};
use crate::ncut::{build_affinity, select_foreground, spectral_bipartition, AffinityParams, Segmentation, MAX_VERTICES};
use crate::regularizers::knn_stats_self;

pub const DEFAULT_TARGET_COUNT: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NcutOptions {
    /// Fixed voxel edge; overrides `target_count` when set.
    pub voxel: Option<f64>,
    pub target_count: usize,
    pub affinity: AffinityParams,
}

impl Default for NcutOptions {
    fn default() -> Self {
        NcutOptions {
            voxel: None,
            target_count: DEFAULT_TARGET_COUNT,
            affinity: AffinityParams::default(),
        }
    }
}

/// Segmentation of the downsampled cloud plus labels on the full cloud.
#[derive(Debug, Clone)]
pub struct CoarseSegmentation {
    pub downsampled: DownsampledCloud,
    pub segmentation: Segmentation,
    /// Foreground flag per point of the input cloud.
    pub labels: Vec<bool>,
}

/// Downsamples, builds the affinity graph, bipartitions and orients the
/// split toward the [CLS] feature.
pub fn segment_ncut(cloud: &FeaturedPointCloud, options: &NcutOptions) -> Result<CoarseSegmentation> {
    cloud.validate()?;
    let downsampled = match options.voxel {
        Some(v) if v > 0.0 && v.is_finite() => voxel_downsample(cloud, v)?,
        Some(v) => return Err(Error::invalid("voxel", format!("must be positive, got {v}"))),
        None => {
            if options.target_count > MAX_VERTICES {
                return Err(Error::invalid("target_count", format!("at most {MAX_VERTICES}")));
            }
            downsample_to_target(cloud, options.target_count)?
        }
    };
    let graph = build_affinity(&downsampled.cloud, &options.affinity)?;
    let segmentation = select_foreground(&downsampled.cloud, &spectral_bipartition(&graph)?)?;
    let labels = downsampled.upsample(&segmentation.labels, cloud.len());
    Ok(CoarseSegmentation { downsampled, segmentation, labels })
}

/// Intersection over union of the `true` sets.
pub fn label_iou(pred: &[bool], truth: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid("labels", "prediction and truth differ in length"));
    }
    let inter = pred.iter().zip(truth).filter(|(a, b)| **a && **b).count();
    let union = pred.iter().zip(truth).filter(|(a, b)| **a || **b).count();
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Neighbour-distance outlier filter on the foreground before box fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierParams {
    pub k: usize,
    /// Points whose mean neighbour distance exceeds `max_ratio` × the median are dropped.
    pub max_ratio: f64,
}

impl Default for OutlierParams {
    fn default() -> Self {
        OutlierParams { k: 8, max_ratio: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxOptions {
    pub plane: PlaneParams,
    /// Relative growth of the box extents.
    pub margin: f64,
    pub outliers: Option<OutlierParams>,
}

impl Default for BoxOptions {
    fn default() -> Self {
        BoxOptions { plane: PlaneParams::default(), margin: BOX_MARGIN, outliers: Some(OutlierParams::default()) }
    }
}

/// Indices of the points kept by the outlier filter, ascending.
/// Sets with at most `k` points are returned whole.
pub fn filter_outliers(points: &[Vector3<f64>], params: &OutlierParams) -> Result<Vec<usize>> {
    if params.k == 0 {
        return Err(Error::invalid("outlier_k", "must be at least 1"));
    }
    if !(params.max_ratio.is_finite() && params.max_ratio >= 1.0) {
        return Err(Error::invalid("outlier_ratio", "must be finite and at least 1"));
    }
    if points.len() <= params.k {
        return Ok((0..points.len()).collect());
    }
    let mu = knn_stats_self(points, params.k, 0.0)?.mu;
    let mut sorted = mu.clone();
    sorted.sort_by(f64::total_cmp);
    let limit = params.max_ratio * sorted[sorted.len() / 2];
    Ok((0..mu.len()).filter(|&i| mu[i] <= limit).collect())
}

/// Ground plane under the foreground and the plane-aligned box around it.
/// The plane sees the raw segmentation; the box sees the filtered foreground.
pub fn estimate_box<R: Rng + ?Sized>(
    cloud: &FeaturedPointCloud,
    seg: &Segmentation,
    options: &BoxOptions,
    rng: &mut R,
) -> Result<(PlaneModel, OrientedBox)> {
    let plane = fit_ground_plane(cloud, seg, &options.plane, rng)?;
    let mut fg: Vec<_> = cloud
        .points
        .iter()
        .zip(&seg.labels)
        .filter(|(_, &l)| l)
        .map(|(p, _)| p.position)
        .collect();
    if let Some(params) = &options.outliers {
        let keep = filter_outliers(&fg, params)?;
        if keep.len() < fg.len() {
            log::debug!("outlier filter dropped {} of {} foreground points", fg.len() - keep.len(), fg.len());
            fg = keep.into_iter().map(|i| fg[i]).collect();
        }
    }
    let bbox = plane_aligned_obb_with_margin(&fg, &plane, options.margin)?;
    Ok((plane, bbox))
}

/// Wraps full-resolution labels as a segmentation for box and label steps.
pub fn labels_as_segmentation(labels: Vec<bool>) -> Segmentation {
    let n = labels.len();
    Segmentation { labels, ncut_value: f64::NAN, fiedler: vec![0.0; n], lambda2: f64::NAN }
}
