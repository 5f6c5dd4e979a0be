use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use super::{
    BackendError, DetectRequest, DetectResponse, ImagePayload, SegmentRequest, SegmentResponse, Segmenter, Teacher,
    WireDetection, WireMask,
};
use crate::formats::{detect_format, read_dataset, read_yolo_layout, rle, Dataset, MANIFEST_FILE};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq)]
pub enum RecordedRequest {
    Detect(DetectRequest),
    Segment(SegmentRequest),
}

/// Answers detect and segment requests from fixture labels.
///
/// Images are identified by the file stem of `image_path`. A prompt selects
/// the fixture class with exactly that name; boxes of unprompted classes are
/// left out. Every request is recorded.
pub struct MockOracle {
    fixtures: Dataset,
    index: HashMap<String, usize>,
    confidence: f64,
    requests: Mutex<Vec<RecordedRequest>>,
}

pub const MOCK_MODEL: &str = "mock-oracle";

impl MockOracle {
    pub fn new(fixtures: Dataset) -> Self {
        let index = fixtures
            .images
            .iter()
            .enumerate()
            .map(|(i, img)| (img.id.clone(), i))
            .collect();
        Self {
            fixtures,
            index,
            confidence: 1.0,
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Loads fixtures from a YOLO layout (its directory or its
    /// `manifest.json`), or from any file format `convert` understands.
    pub fn from_path(path: &Path) -> Result<Self, BackendError> {
        let load = || -> Result<Dataset, crate::formats::FormatError> {
            if path.is_dir() {
                return read_yolo_layout(path);
            }
            if path.file_name().is_some_and(|n| n == MANIFEST_FILE) {
                return read_yolo_layout(path.parent().unwrap_or(Path::new(".")));
            }
            read_dataset(path, detect_format(path)?)
        };
        let fixtures = load().map_err(|e| BackendError::Config(format!("mock-oracle fixtures: {e}")))?;
        Ok(Self::new(fixtures))
    }

    /// Confidence attached to every returned box (default 1.0).
    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn fixtures(&self) -> &Dataset {
        &self.fixtures
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().map(|r| r.clone()).unwrap_or_default()
    }

    fn record(&self, r: RecordedRequest) {
        if let Ok(mut log) = self.requests.lock() {
            log.push(r);
        }
    }

    fn lookup(&self, image: &ImagePayload) -> Result<usize, BackendError> {
        let ImagePayload::ImagePath(p) = image else {
            return Err(BackendError::Permanent(
                "the mock oracle identifies images by image_path".into(),
            ));
        };
        let stem = Path::new(p)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.index.get(&stem).copied().ok_or(BackendError::OracleMiss(stem))
    }
}

/// Pixels whose centers fall inside `b`, as row-major runs.
fn box_mask(b: &BBox, width: u32, height: u32) -> Vec<u32> {
    let (x0, x1) = (b.x_min.round() as u32, (b.x_max.round() as u32).min(width));
    let (y0, y1) = (b.y_min.round() as u32, (b.y_max.round() as u32).min(height));
    let mut bits = vec![false; width as usize * height as usize];
    for y in y0..y1 {
        for x in x0..x1 {
            bits[(y * width + x) as usize] = true;
        }
    }
    rle::encode(&bits)
}

impl Teacher for MockOracle {
    fn detect(&self, req: &DetectRequest) -> Result<DetectResponse, BackendError> {
        self.record(RecordedRequest::Detect(req.clone()));
        let img = &self.fixtures.images[self.lookup(&req.image)?];
        let classes = &self.fixtures.manifest.classes;
        let detections = img
            .ground_truths
            .iter()
            .filter_map(|gt| {
                let name = classes.name(gt.class_id)?;
                let prompt_index = req.prompts.iter().position(|p| p.trim() == name)?;
                let b = gt.bbox;
                Some(WireDetection {
                    bbox: [b.x_min, b.y_min, b.x_max, b.y_max],
                    prompt_index,
                    confidence: self.confidence,
                })
            })
            .collect();
        Ok(DetectResponse {
            detections,
            model: MOCK_MODEL.into(),
            latency_ms: 0.0,
        })
    }
}

impl Segmenter for MockOracle {
    /// Returns the fixture mask of an identical fixture box when there is
    /// one, otherwise the box's own rectangle.
    fn segment(&self, req: &SegmentRequest) -> Result<SegmentResponse, BackendError> {
        self.record(RecordedRequest::Segment(req.clone()));
        let img = &self.fixtures.images[self.lookup(&req.image)?];
        let masks = req
            .boxes
            .iter()
            .map(|b| {
                let wanted = BBox::raw(b[0], b[1], b[2], b[3]);
                let fixture = img
                    .ground_truths
                    .iter()
                    .position(|g| g.bbox == wanted)
                    .and_then(|i| img.masks.as_ref().map(|m| &m[i]));
                match fixture {
                    Some(m) => WireMask::from_annotation(m),
                    None => WireMask::Rle(box_mask(&wanted, img.width, img.height)),
                }
            })
            .collect();
        Ok(SegmentResponse {
            masks,
            model: MOCK_MODEL.into(),
            latency_ms: 0.0,
        })
    }
}
