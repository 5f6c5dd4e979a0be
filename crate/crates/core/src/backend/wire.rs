//! Messages exchanged with teacher and segmenter backends.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::geometry::{BBox, MaskAnnotation, MaskEncoding};

/// How the image travels: a path the backend can open, or inline bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImagePayload {
    ImagePath(String),
    ImageB64(String),
}

impl ImagePayload {
    pub fn path(p: &Path) -> Self {
        ImagePayload::ImagePath(p.to_string_lossy().into_owned())
    }

    pub fn inline(bytes: &[u8]) -> Self {
        ImagePayload::ImageB64(STANDARD.encode(bytes))
    }

    pub fn read_inline(p: &Path) -> Result<Self, BackendError> {
        let bytes = std::fs::read(p).map_err(|e| BackendError::Permanent(format!("{}: {e}", p.display())))?;
        Ok(Self::inline(&bytes))
    }

    pub fn decode_inline(&self) -> Option<Vec<u8>> {
        match self {
            ImagePayload::ImageB64(b) => STANDARD.decode(b).ok(),
            ImagePayload::ImagePath(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    #[serde(flatten)]
    pub image: ImagePayload,
    pub prompts: Vec<String>,
    pub box_threshold: f64,
    pub text_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    /// `[x_min, y_min, x_max, y_max]` in absolute pixels.
    pub bbox: [f64; 4],
    pub prompt_index: usize,
    pub confidence: f64,
}

impl WireDetection {
    pub fn bbox(&self) -> BBox {
        BBox::raw(self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub detections: Vec<WireDetection>,
    pub model: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    #[serde(flatten)]
    pub image: ImagePayload,
    pub boxes: Vec<[f64; 4]>,
}

/// `{"rle": [...]}` (row-major runs) or `{"polygon": [[x, y], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireMask {
    Rle(Vec<u32>),
    Polygon(Vec<[f64; 2]>),
}

impl WireMask {
    pub fn into_annotation(self, class_id: usize, width: u32, height: u32) -> MaskAnnotation {
        let encoding = match self {
            WireMask::Rle(c) => MaskEncoding::Rle(c),
            WireMask::Polygon(p) => MaskEncoding::Polygon(p),
        };
        MaskAnnotation {
            class_id,
            width,
            height,
            encoding,
        }
    }

    pub fn from_annotation(m: &MaskAnnotation) -> Self {
        match &m.encoding {
            MaskEncoding::Rle(c) => WireMask::Rle(c.clone()),
            MaskEncoding::Polygon(p) => WireMask::Polygon(p.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub masks: Vec<WireMask>,
    pub model: String,
    pub latency_ms: f64,
}
