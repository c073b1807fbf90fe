//! Ground plane, plane-aligned oriented boxes, pseudo-labels and box metrics.

mod iou;
mod obb;
mod plane;

pub use iou::{box_iou, box_iou_with, detection_ap, IouMode};
pub use obb::{plane_aligned_obb, plane_aligned_obb_with_margin, OrientedBox, BOX_MARGIN};
pub use plane::{fit_ground_plane, PlaneModel, PlaneParams, MIN_BACKGROUND_POINTS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FeaturedPointCloud;
use crate::ncut::Segmentation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PseudoLabel {
    Positive,
    Negative,
    Ignore,
}

impl PseudoLabel {
    /// Training target, `None` for ignored points.
    pub fn target(self) -> Option<bool> {
        match self {
            PseudoLabel::Positive => Some(true),
            PseudoLabel::Negative => Some(false),
            PseudoLabel::Ignore => None,
        }
    }
}

/// Per-point training labels derived from a segmentation and its box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabels {
    pub labels: Vec<PseudoLabel>,
}

impl PseudoLabels {
    /// `[positive, negative, ignore]` counts.
    pub fn counts(&self) -> [usize; 3] {
        let mut out = [0; 3];
        for l in &self.labels {
            out[match l {
                PseudoLabel::Positive => 0,
                PseudoLabel::Negative => 1,
                PseudoLabel::Ignore => 2,
            }] += 1;
        }
        out
    }

    pub fn targets(&self) -> Vec<Option<bool>> {
        self.labels.iter().map(|l| l.target()).collect()
    }
}

/// Foreground points are positive; background points are negative outside
/// the box and ignored inside it.
pub fn assign_pseudo_labels(cloud: &FeaturedPointCloud, seg: &Segmentation, bbox: &OrientedBox) -> Result<PseudoLabels> {
    if seg.labels.len() != cloud.len() {
        return Err(Error::invalid("segmentation", "label count differs from cloud size"));
    }
    bbox.validate()?;
    let labels = cloud
        .points
        .iter()
        .zip(&seg.labels)
        .map(|(p, &fg)| match (fg, bbox.contains(&p.position)) {
            (true, _) => PseudoLabel::Positive,
            (false, true) => PseudoLabel::Ignore,
            (false, false) => PseudoLabel::Negative,
        })
        .collect();
    Ok(PseudoLabels { labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FeaturedPoint;
    use nalgebra::{Matrix3, Vector3};

    #[test]
    fn tri_state_rule() {
        let pts = [[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [0.2, 0.0, 0.0], [7.0, 7.0, 7.0]];
        let cloud = FeaturedPointCloud {
            points: pts
                .iter()
                .enumerate()
                .map(|(i, p)| FeaturedPoint {
                    id: i as u64,
                    position: Vector3::from(*p),
                    feature: vec![1.0],
                    view_count: 1,
                })
                .collect(),
            cls: vec![1.0],
            heads: 1,
            head_dim: 1,
        };
        let seg = Segmentation {
            labels: vec![true, false, false, true],
            ncut_value: 0.0,
            fiedler: vec![0.0; 4],
            lambda2: 0.0,
        };
        let bbox = OrientedBox {
            center: Vector3::zeros(),
            rotation: Matrix3::identity(),
            half_extents: Vector3::repeat(0.5),
        };
        let out = assign_pseudo_labels(&cloud, &seg, &bbox).unwrap();
        use PseudoLabel::*;
        assert_eq!(out.labels, vec![Positive, Negative, Ignore, Positive]);
        assert_eq!(out.counts(), [2, 1, 1]);
        assert_eq!(out.targets(), vec![Some(true), Some(false), None, Some(true)]);
    }
}
