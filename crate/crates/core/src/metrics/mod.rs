//! Detection metrics: precision, recall, F1, precision/recall curves,
//! all-point average precision, sweep mAP and confusion matrices.

mod confusion;
mod evaluate;
mod report;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{AnnotatedImage, GeometryError, ImagePredictions};
use crate::matching::{match_detections, DetectionVerdict};

pub use confusion::{confusion_matrix, ConfusionMatrix, LabeledTable, NormalizationMode};
pub use evaluate::{
    evaluate, evaluate_with, mean_over_sweep, ClassCurves, ClassEval, ConfidenceCurve, EvalConfig, EvalReport,
};
pub use report::{curves_csv, render_table};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("predictions reference unknown image `{0}`")]
    UnknownImage(String),
    #[error("image `{0}` appears more than once")]
    DuplicateImage(String),
    #[error("recall decreases at point {index}: {previous} -> {current}")]
    DecreasingRecall { index: usize, previous: f64, current: f64 },
    #[error("curve point {index} has precision/recall outside [0, 1]")]
    PointOutOfRange { index: usize },
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error("table parse error at line {line}: {reason}")]
    TableParse { line: usize, reason: String },
}

/// `tp / (tp + fp)`; 1.0 when nothing was predicted.
pub fn precision(tp: usize, fp: usize) -> f64 {
    if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

/// `tp / (tp + fn)`; 1.0 when there was nothing to find.
pub fn recall(tp: usize, fn_: usize) -> f64 {
    if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision and recall after keeping every detection scored at or above `confidence`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
}

impl PrPoint {
    pub fn new(confidence: f64, precision: f64, recall: f64) -> Self {
        Self {
            confidence,
            precision,
            recall,
        }
    }
}

/// One pooled detection after per-image matching.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scored {
    pub confidence: f64,
    pub true_positive: bool,
}

/// Maps image ids to their position in the ground-truth list.
pub(crate) struct ImageIndex<'a> {
    pub images: &'a [AnnotatedImage],
    /// For each ground-truth image, the detections predicted for it.
    pub predictions: Vec<&'a [crate::geometry::Detection]>,
}

impl<'a> ImageIndex<'a> {
    pub fn build(gts: &'a [AnnotatedImage], preds: &'a [ImagePredictions]) -> Result<Self, MetricsError> {
        let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(gts.len());
        for (i, img) in gts.iter().enumerate() {
            if by_id.insert(img.id.as_str(), i).is_some() {
                return Err(MetricsError::DuplicateImage(img.id.clone()));
            }
        }
        let mut predictions: Vec<Option<&[crate::geometry::Detection]>> = vec![None; gts.len()];
        for p in preds {
            let i = *by_id
                .get(p.image_id.as_str())
                .ok_or_else(|| MetricsError::UnknownImage(p.image_id.clone()))?;
            if predictions[i].is_some() {
                return Err(MetricsError::DuplicateImage(p.image_id.clone()));
            }
            predictions[i] = Some(&p.detections);
        }
        Ok(Self {
            images: gts,
            predictions: predictions.into_iter().map(|p| p.unwrap_or(&[])).collect(),
        })
    }

    pub fn gt_count(&self, class_id: usize) -> usize {
        self.images
            .iter()
            .flat_map(|img| &img.ground_truths)
            .filter(|g| g.class_id == class_id)
            .count()
    }

    /// Class-restricted matching per image, pooled and ordered by descending
    /// confidence (ties: image order, then detection order).
    pub fn pooled(&self, class_id: usize, iou_thr: f64) -> Result<Vec<Scored>, MetricsError> {
        let mut pooled: Vec<(f64, bool, usize, usize)> = Vec::new();
        for (ii, (img, dets)) in self.images.iter().zip(&self.predictions).enumerate() {
            let m = match_detections(dets, &img.ground_truths, iou_thr, class_id)?;
            for (di, v) in m.detections.iter().enumerate() {
                match v {
                    DetectionVerdict::TruePositive { .. } => pooled.push((dets[di].confidence, true, ii, di)),
                    DetectionVerdict::FalsePositive => pooled.push((dets[di].confidence, false, ii, di)),
                    DetectionVerdict::Ignored => {}
                }
            }
        }
        pooled.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)));
        Ok(pooled
            .into_iter()
            .map(|(confidence, true_positive, _, _)| Scored {
                confidence,
                true_positive,
            })
            .collect())
    }
}

pub(crate) fn curve_from_pooled(pooled: &[Scored], total_gt: usize) -> Vec<PrPoint> {
    let mut tp = 0usize;
    let mut fp = 0usize;
    pooled
        .iter()
        .map(|s| {
            if s.true_positive {
                tp += 1;
            } else {
                fp += 1;
            }
            PrPoint::new(s.confidence, precision(tp, fp), recall(tp, total_gt - tp))
        })
        .collect()
}

/// Precision/recall after each prefix of the dataset-wide confidence ranking.
pub fn pr_curve(
    gts: &[AnnotatedImage],
    preds: &[ImagePredictions],
    class_id: usize,
    iou_thr: f64,
) -> Result<Vec<PrPoint>, MetricsError> {
    let index = ImageIndex::build(gts, preds)?;
    let pooled = index.pooled(class_id, iou_thr)?;
    Ok(curve_from_pooled(&pooled, index.gt_count(class_id)))
}

/// All-point sum `Σ (R_n − R_{n−1})·P_n` with `R_0 = 0`, no interpolation.
pub fn ap_from_curve(points: &[PrPoint]) -> Result<f64, MetricsError> {
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (index, p) in points.iter().enumerate() {
        if !(0.0..=1.0).contains(&p.precision) || !(0.0..=1.0).contains(&p.recall) {
            return Err(MetricsError::PointOutOfRange { index });
        }
        if p.recall < prev_recall {
            return Err(MetricsError::DecreasingRecall {
                index,
                previous: prev_recall,
                current: p.recall,
            });
        }
        ap += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    Ok(ap)
}

/// Turns a precision/recall curve into an AP value. `evaluate` uses
/// [`AllPointAp`]; other rules plug in through [`evaluate_with`].
pub trait ApRule: Sync {
    fn average_precision(&self, curve: &[PrPoint], iou_threshold: f64) -> Result<f64, MetricsError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AllPointAp;

impl ApRule for AllPointAp {
    fn average_precision(&self, curve: &[PrPoint], _iou_threshold: f64) -> Result<f64, MetricsError> {
        ap_from_curve(curve)
    }
}
