//! Dataset preparation: frame extraction, preprocessing, splitting and
//! training-set augmentation. Every random choice is drawn from a seeded
//! generator, so a fixed seed reproduces the whole pipeline bit for bit.

mod augment;
mod config;
mod frames;
mod preprocess;
mod raster;
pub mod rng;
mod split;

use std::path::PathBuf;

use thiserror::Error;

use crate::formats::FormatError;
use crate::geometry::GeometryError;

pub use augment::{
    augment_dataset, augment_train, plan_augmentation, AugmentPlan, AugmentSummary, AugmentedCopy, AUGMENT_SUFFIX,
};
pub use config::PipelineConfig;
pub use frames::{
    extract_frames, frame_indices, frame_name, ExtractSummary, FfmpegSource, FrameSource, ImageSequenceSource,
};
pub use preprocess::{adjust_brightness, adjust_contrast, box_blur, preprocess};
pub use raster::RasterImage;
pub use split::{apply_split, split, split_counts, SplitAssignment};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Image { path: PathBuf, reason: String },
    #[error("raster: {0}")]
    Raster(String),
    #[error("frame source: {0}")]
    Source(String),
    #[error("contract: {0}")]
    Contract(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> PipelineError {
    let path = path.into();
    move |source| PipelineError::Io { path, source }
}
