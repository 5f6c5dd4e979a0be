//! Annotation serialization: COCO JSON, Pascal VOC XML, YOLO text, flat CSV,
//! and the dataset manifest.
//!
//! Writers are deterministic (same input, same bytes). Parsers reject
//! malformed input instead of repairing it.

mod coco;
mod convert;
mod csv_rows;
mod manifest;
pub mod rle;
mod voc;
mod yolo;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{AnnotatedImage, GeometryError};

pub use coco::{parse_coco_json, parse_coco_predictions, write_coco_json, write_coco_predictions};
pub use convert::{convert, detect_format, read_dataset, write_dataset, ConvertSummary, Format};
pub use csv_rows::{parse_csv, parse_csv_predictions, write_csv, write_csv_predictions, CSV_HEADER};
pub use manifest::{
    check_image_id, check_relative_path, AnnotationSource, DatasetManifest, ManifestRecord, Normalization, Split,
    MANIFEST_FILE,
};
pub use voc::{parse_voc_xml, write_voc_xml};
pub use yolo::{parse_yolo_txt, read_yolo_layout, write_yolo_layout, write_yolo_txt};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("xml: {0}")]
    Xml(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("unknown class `{name}`; known classes: {}", known.join(", "))]
    UnknownClass { name: String, known: Vec<String> },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("annotation {annotation} references missing image {image_id}")]
    DanglingImage { annotation: u64, image_id: String },
    #[error("image `{image}`: box {index} lies outside the {width}x{height} image; clip it first")]
    BoxOutsideImage {
        image: String,
        index: usize,
        width: u32,
        height: u32,
    },
    #[error("unknown format `{0}`; expected one of coco-json, voc-xml, yolo-txt, csv")]
    UnknownFormat(String),
    #[error("mask: {0}")]
    Mask(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub(crate) fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| FormatError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A manifest together with the labels of every image it lists, in record order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<AnnotatedImage>,
}

impl Dataset {
    pub fn new(manifest: DatasetManifest, images: Vec<AnnotatedImage>) -> Result<Self, FormatError> {
        let d = Self { manifest, images };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        self.manifest.validate()?;
        if self.images.len() != self.manifest.records.len() {
            return Err(FormatError::Manifest(format!(
                "{} label sets for {} manifest records",
                self.images.len(),
                self.manifest.records.len()
            )));
        }
        for (r, img) in self.manifest.records.iter().zip(&self.images) {
            if r.image_id != img.id || r.width != img.width || r.height != img.height {
                return Err(FormatError::Manifest(format!(
                    "labels for `{}` ({}x{}) do not line up with record `{}` ({}x{})",
                    img.id, img.width, img.height, r.image_id, r.width, r.height
                )));
            }
            img.check(&self.manifest.classes)?;
        }
        Ok(())
    }

    pub fn box_count(&self) -> usize {
        self.images.iter().map(|i| i.ground_truths.len()).sum()
    }

    pub fn mask_count(&self) -> usize {
        self.images.iter().filter_map(|i| i.masks.as_ref()).map(Vec::len).sum()
    }
}
