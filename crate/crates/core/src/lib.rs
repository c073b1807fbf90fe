//! Salient object discovery on featured Structure-from-Motion point clouds.

pub mod error;
pub mod features;
pub mod fixtures;
pub mod fusion;
pub mod geometry;
pub mod labels;
pub mod ncut;
pub mod pipeline;
pub mod ply;
pub mod regularizers;
pub mod seg_transformer;
pub mod sfm;

pub use error::{Error, Result};
