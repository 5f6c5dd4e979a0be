//! Boxes, classes and label containers shared by every stage of the pipeline.
//!
//! All geometry is absolute pixels, `xyxy`, with the origin at the top-left
//! corner of the image (x grows rightward, y downward). Normalized
//! coordinates only appear at format boundaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid box ({x_min}, {y_min}, {x_max}, {y_max}): {reason}")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        reason: &'static str,
    },
    #[error("box lies entirely outside the {width}x{height} image")]
    EmptyBox { width: f64, height: f64 },
    #[error("image dimensions must be positive, got {width}x{height}")]
    InvalidImageSize { width: f64, height: f64 },
    #[error("IoU threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("class set must not be empty")]
    EmptyClassSet,
    #[error("duplicate class name `{0}`")]
    DuplicateClass(String),
    #[error("class id {id} out of range for {len} classes")]
    ClassOutOfRange { id: usize, len: usize },
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("image `{image}`: {reason}")]
    InvalidAnnotation { image: String, reason: String },
    #[error("invalid mask: {0}")]
    InvalidMask(String),
}

/// Axis-aligned box in absolute pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    /// Builds a box and checks the ordering, finiteness and non-negativity invariants.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let b = Self::raw(x_min, y_min, x_max, y_max);
        b.check()?;
        Ok(b)
    }

    /// Builds a box without any checks. Used for raw backend output that is
    /// clipped before it is stored.
    pub const fn raw(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(x, y, x + w, y + h)
    }

    fn invalid(&self, reason: &'static str) -> GeometryError {
        GeometryError::InvalidBox {
            x_min: self.x_min,
            y_min: self.y_min,
            x_max: self.x_max,
            y_max: self.y_max,
            reason,
        }
    }

    pub fn check(&self) -> Result<(), GeometryError> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(self.invalid("non-finite coordinate"));
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err(self.invalid("negative coordinate"));
        }
        if self.x_min > self.x_max || self.y_min > self.y_max {
            return Err(self.invalid("min corner exceeds max corner"));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.check().is_ok()
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// True when the box lies inside `[0,width]x[0,height]`.
    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= width && self.y_max <= height
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox::raw(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }
}

/// Intersection over union. Zero when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Clamps a box to `[0,width]x[0,height]`.
///
/// Fails when the box does not overlap the image at all. A box with positive
/// area that only touches the image border also counts as outside.
pub fn clip_to_image(b: &BBox, width: f64, height: f64) -> Result<BBox, GeometryError> {
    if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
        return Err(GeometryError::InvalidImageSize { width, height });
    }
    let coords = [b.x_min, b.y_min, b.x_max, b.y_max];
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(b.invalid("non-finite coordinate"));
    }
    if b.x_min > b.x_max || b.y_min > b.y_max {
        return Err(b.invalid("min corner exceeds max corner"));
    }
    if b.x_min > width || b.y_min > height || b.x_max < 0.0 || b.y_max < 0.0 {
        return Err(GeometryError::EmptyBox { width, height });
    }
    let clipped = BBox::raw(
        b.x_min.clamp(0.0, width),
        b.y_min.clamp(0.0, height),
        b.x_max.clamp(0.0, width),
        b.y_max.clamp(0.0, height),
    );
    if b.area() > 0.0 && clipped.area() == 0.0 {
        return Err(GeometryError::EmptyBox { width, height });
    }
    Ok(clipped)
}

/// Ordered, duplicate-free class names. The position of a name is its class id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassSet(Vec<String>);

impl ClassSet {
    pub fn new<I, S>(names: I) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(GeometryError::EmptyClassSet);
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(GeometryError::DuplicateClass(name.clone()));
            }
        }
        Ok(Self(names))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.0.get(id).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }

    pub fn check_id(&self, id: usize) -> Result<(), GeometryError> {
        if id < self.0.len() {
            Ok(())
        } else {
            Err(GeometryError::ClassOutOfRange { id, len: self.0.len() })
        }
    }
}

impl TryFrom<Vec<String>> for ClassSet {
    type Error = GeometryError;

    fn try_from(value: Vec<String>) -> Result<Self, Self::Error> {
        ClassSet::new(value)
    }
}

impl From<ClassSet> for Vec<String> {
    fn from(value: ClassSet) -> Self {
        value.0
    }
}

/// A scored prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: usize,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BBox, class_id: usize, confidence: f64) -> Self {
        Self {
            bbox,
            class_id,
            confidence,
        }
    }

    pub fn check(&self, classes: &ClassSet) -> Result<(), GeometryError> {
        self.bbox.check()?;
        classes.check_id(self.class_id)?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(GeometryError::InvalidConfidence(self.confidence));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub bbox: BBox,
    pub class_id: usize,
}

impl GroundTruthBox {
    pub fn new(bbox: BBox, class_id: usize) -> Self {
        Self { bbox, class_id }
    }
}

/// Mask pixel encoding.
///
/// Run lengths are over row-major pixels and alternate background/foreground,
/// starting with a (possibly empty) background run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskEncoding {
    Rle(Vec<u32>),
    Polygon(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskAnnotation {
    pub class_id: usize,
    pub width: u32,
    pub height: u32,
    pub encoding: MaskEncoding,
}

impl MaskAnnotation {
    pub fn check(&self) -> Result<(), GeometryError> {
        match &self.encoding {
            MaskEncoding::Rle(counts) => {
                if counts.iter().skip(1).any(|&c| c == 0) {
                    return Err(GeometryError::InvalidMask("only the first run may be empty".into()));
                }
                let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
                let expected = u64::from(self.width) * u64::from(self.height);
                if total != expected {
                    return Err(GeometryError::InvalidMask(format!(
                        "run lengths sum to {total}, expected {expected}"
                    )));
                }
            }
            MaskEncoding::Polygon(points) => {
                if points.len() < 3 {
                    return Err(GeometryError::InvalidMask(format!(
                        "polygon needs at least 3 vertices, got {}",
                        points.len()
                    )));
                }
                let (w, h) = (f64::from(self.width), f64::from(self.height));
                if let Some(p) = points
                    .iter()
                    .find(|p| !(0.0..=w).contains(&p[0]) || !(0.0..=h).contains(&p[1]))
                {
                    return Err(GeometryError::InvalidMask(format!(
                        "vertex ({}, {}) outside {}x{}",
                        p[0], p[1], self.width, self.height
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An image with its label set. When masks are present they run parallel to
/// `ground_truths`: mask `i` belongs to box `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub ground_truths: Vec<GroundTruthBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<Vec<MaskAnnotation>>,
}

impl AnnotatedImage {
    pub fn new(id: impl Into<String>, width: u32, height: u32) -> Self {
        Self {
            id: id.into(),
            width,
            height,
            ground_truths: Vec::new(),
            masks: None,
        }
    }

    pub fn with_boxes(mut self, boxes: Vec<GroundTruthBox>) -> Self {
        self.ground_truths = boxes;
        self
    }

    fn bad(&self, reason: String) -> GeometryError {
        GeometryError::InvalidAnnotation {
            image: self.id.clone(),
            reason,
        }
    }

    pub fn check(&self, classes: &ClassSet) -> Result<(), GeometryError> {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        for (i, gt) in self.ground_truths.iter().enumerate() {
            gt.bbox.check()?;
            classes.check_id(gt.class_id)?;
            if !gt.bbox.within(w, h) {
                return Err(self.bad(format!("box {i} lies outside the image")));
            }
        }
        if let Some(masks) = &self.masks {
            if masks.len() != self.ground_truths.len() {
                return Err(self.bad(format!("{} masks for {} boxes", masks.len(), self.ground_truths.len())));
            }
            for m in masks {
                m.check()?;
                classes.check_id(m.class_id)?;
            }
        }
        Ok(())
    }
}

/// Predictions for a single image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePredictions {
    pub image_id: String,
    pub detections: Vec<Detection>,
}

impl ImagePredictions {
    pub fn new(image_id: impl Into<String>, detections: Vec<Detection>) -> Self {
        Self {
            image_id: image_id.into(),
            detections,
        }
    }

    /// Ground truths echoed back as confidence-1.0 detections.
    pub fn from_ground_truth(img: &AnnotatedImage) -> Self {
        Self::new(
            img.id.clone(),
            img.ground_truths
                .iter()
                .map(|g| Detection::new(g.bbox, g.class_id, 1.0))
                .collect(),
        )
    }
}
