//! Per-point label files: ASCII PLY with `x y z id label` columns.
//!
//! Segmentations store 1 (foreground) and 0 (background). Pseudo labels
//! store 1 (positive), 0 (negative) and -1 (ignore).

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::FeaturedPointCloud;
use crate::geometry::{PseudoLabel, PseudoLabels};
use crate::ply::{PlyTable, PlyType};

pub const IGNORE_CODE: i32 = -1;

/// Labels keyed by point id, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelFile {
    pub ids: Vec<u64>,
    pub codes: Vec<i32>,
}

impl LabelFile {
    pub fn from_cloud(cloud: &FeaturedPointCloud, codes: Vec<i32>) -> Result<Self> {
        if codes.len() != cloud.len() {
            return Err(Error::invalid("labels", "label count differs from cloud size"));
        }
        Ok(LabelFile { ids: cloud.points.iter().map(|p| p.id).collect(), codes })
    }

    pub fn from_foreground(cloud: &FeaturedPointCloud, labels: &[bool]) -> Result<Self> {
        Self::from_cloud(cloud, labels.iter().map(|&l| i32::from(l)).collect())
    }

    pub fn from_pseudo(cloud: &FeaturedPointCloud, labels: &PseudoLabels) -> Result<Self> {
        let codes = labels
            .labels
            .iter()
            .map(|l| match l {
                PseudoLabel::Positive => 1,
                PseudoLabel::Negative => 0,
                PseudoLabel::Ignore => IGNORE_CODE,
            })
            .collect();
        Self::from_cloud(cloud, codes)
    }

    /// Codes reordered to follow `cloud`; every cloud point must be present.
    pub fn align(&self, cloud: &FeaturedPointCloud) -> Result<Vec<i32>> {
        let by_id: HashMap<u64, i32> = self.ids.iter().copied().zip(self.codes.iter().copied()).collect();
        if by_id.len() != self.ids.len() {
            return Err(Error::invalid("labels", "duplicate point id"));
        }
        cloud
            .points
            .iter()
            .map(|p| {
                by_id
                    .get(&p.id)
                    .copied()
                    .ok_or_else(|| Error::invalid("labels", format!("no label for point {}", p.id)))
            })
            .collect()
    }

    /// Foreground flags aligned to `cloud`; only codes 0 and 1 are accepted.
    pub fn foreground(&self, cloud: &FeaturedPointCloud) -> Result<Vec<bool>> {
        self.align(cloud)?
            .into_iter()
            .map(|c| match c {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::invalid("labels", format!("segmentation code {c} is not 0 or 1"))),
            })
            .collect()
    }

    /// Training targets aligned to `cloud`; -1 maps to `None`.
    pub fn targets(&self, cloud: &FeaturedPointCloud) -> Result<Vec<Option<bool>>> {
        self.align(cloud)?
            .into_iter()
            .map(|c| match c {
                0 => Ok(Some(false)),
                1 => Ok(Some(true)),
                IGNORE_CODE => Ok(None),
                _ => Err(Error::invalid("labels", format!("pseudo-label code {c} is not -1, 0 or 1"))),
            })
            .collect()
    }

    pub fn to_ply(&self, cloud: &FeaturedPointCloud) -> Result<PlyTable> {
        let codes = self.align(cloud)?;
        let mut table = PlyTable::new(vec![
            ("x".to_string(), PlyType::Double),
            ("y".to_string(), PlyType::Double),
            ("z".to_string(), PlyType::Double),
            ("id".to_string(), PlyType::UInt),
            ("label".to_string(), PlyType::Int),
        ]);
        for (p, c) in cloud.points.iter().zip(codes) {
            table.rows.push(vec![p.position.x, p.position.y, p.position.z, p.id as f64, f64::from(c)]);
        }
        Ok(table)
    }

    pub fn from_ply(table: &PlyTable) -> Result<Self> {
        let ids = table.column("id")?.into_iter().map(|v| v as u64).collect();
        let codes = table.column("label")?.into_iter().map(|v| v as i32).collect();
        Ok(LabelFile { ids, codes })
    }

    /// Writes positions from `cloud` alongside the labels.
    pub fn save_ply(&self, cloud: &FeaturedPointCloud, path: impl AsRef<Path>) -> Result<()> {
        self.to_ply(cloud)?.write(path)
    }

    pub fn load_ply(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_ply(&PlyTable::read(path)?)
    }
}
