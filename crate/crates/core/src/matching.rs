//! Greedy one-to-one assignment of detections to ground truths.
//!
//! Detections are visited by descending confidence (ties by ascending input
//! index); each claims the still-unmatched ground truth with the highest IoU at
//! or above the threshold (ties by ascending ground-truth index).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, Detection, GeometryError, GroundTruthBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum DetectionVerdict {
    TruePositive {
        ground_truth: usize,
    },
    FalsePositive,
    /// Detection of another class; not part of this match.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum GroundTruthVerdict {
    Matched { detection: usize },
    FalseNegative,
    Ignored,
}

/// Verdicts indexed like the input slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub detections: Vec<DetectionVerdict>,
    pub ground_truths: Vec<GroundTruthVerdict>,
    pub iou_threshold: f64,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.detections
            .iter()
            .filter(|v| matches!(v, DetectionVerdict::TruePositive { .. }))
            .count()
    }

    pub fn false_positives(&self) -> usize {
        self.detections
            .iter()
            .filter(|v| matches!(v, DetectionVerdict::FalsePositive))
            .count()
    }

    pub fn false_negatives(&self) -> usize {
        self.ground_truths
            .iter()
            .filter(|v| matches!(v, GroundTruthVerdict::FalseNegative))
            .count()
    }
}

pub fn check_threshold(iou_thr: f64) -> Result<(), GeometryError> {
    if iou_thr > 0.0 && iou_thr <= 1.0 {
        Ok(())
    } else {
        Err(GeometryError::InvalidThreshold(iou_thr))
    }
}

/// Indices of `dets` in greedy visiting order.
pub(crate) fn confidence_order(dets: &[Detection], keep: impl Fn(&Detection) -> bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).filter(|&i| keep(&dets[i])).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence).then(a.cmp(&b)));
    order
}

fn greedy(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_thr: f64,
    class_id: Option<usize>,
) -> Result<MatchResult, GeometryError> {
    check_threshold(iou_thr)?;
    let relevant_det = |d: &Detection| class_id.is_none_or(|c| d.class_id == c);
    let relevant_gt = |g: &GroundTruthBox| class_id.is_none_or(|c| g.class_id == c);

    let mut det_v: Vec<DetectionVerdict> = dets
        .iter()
        .map(|d| {
            if relevant_det(d) {
                DetectionVerdict::FalsePositive
            } else {
                DetectionVerdict::Ignored
            }
        })
        .collect();
    let mut gt_v: Vec<GroundTruthVerdict> = gts
        .iter()
        .map(|g| {
            if relevant_gt(g) {
                GroundTruthVerdict::FalseNegative
            } else {
                GroundTruthVerdict::Ignored
            }
        })
        .collect();

    for di in confidence_order(dets, relevant_det) {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_v[gi] != GroundTruthVerdict::FalseNegative {
                continue;
            }
            let overlap = iou(&dets[di].bbox, &gt.bbox);
            if overlap < iou_thr {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, o)) => overlap.partial_cmp(&o) == Some(Ordering::Greater),
            };
            if better {
                best = Some((gi, overlap));
            }
        }
        if let Some((gi, _)) = best {
            det_v[di] = DetectionVerdict::TruePositive { ground_truth: gi };
            gt_v[gi] = GroundTruthVerdict::Matched { detection: di };
        }
    }

    Ok(MatchResult {
        detections: det_v,
        ground_truths: gt_v,
        iou_threshold: iou_thr,
    })
}

/// Class-restricted greedy matching; boxes of other classes are `Ignored`.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_thr: f64,
    class_id: usize,
) -> Result<MatchResult, GeometryError> {
    greedy(dets, gts, iou_thr, Some(class_id))
}

/// Greedy matching that ignores class labels. Feeds the confusion matrix.
pub fn match_class_agnostic(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_thr: f64,
) -> Result<MatchResult, GeometryError> {
    greedy(dets, gts, iou_thr, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn det(x: f64, conf: f64) -> Detection {
        Detection::new(BBox::new(x, 0.0, x + 10.0, 10.0).unwrap(), 0, conf)
    }

    fn gt(x: f64) -> GroundTruthBox {
        GroundTruthBox::new(BBox::new(x, 0.0, x + 10.0, 10.0).unwrap(), 0)
    }

    #[test]
    fn perfect_match() {
        let r = match_detections(&[det(0.0, 0.9)], &[gt(0.0)], 0.5, 0).unwrap();
        assert_eq!(
            (r.true_positives(), r.false_positives(), r.false_negatives()),
            (1, 0, 0)
        );
    }

    #[test]
    fn higher_confidence_claims_first() {
        // listed low-confidence first so that input order alone would pick it
        let r = match_detections(&[det(0.0, 0.8), det(0.0, 0.9)], &[gt(0.0)], 0.5, 0).unwrap();
        assert_eq!(r.detections[1], DetectionVerdict::TruePositive { ground_truth: 0 });
        assert_eq!(r.detections[0], DetectionVerdict::FalsePositive);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let r = match_detections(&[det(0.0, 0.9), det(0.0, 0.9)], &[gt(0.0)], 0.5, 0).unwrap();
        assert_eq!(r.detections[0], DetectionVerdict::TruePositive { ground_truth: 0 });
    }

    #[test]
    fn no_detections() {
        let r = match_detections(&[], &[gt(0.0), gt(20.0), gt(40.0)], 0.5, 0).unwrap();
        assert_eq!(r.false_negatives(), 3);
        assert_eq!(r.true_positives(), 0);
    }

    #[test]
    fn threshold_validation() {
        assert!(match_detections(&[], &[], 0.0, 0).is_err());
        assert!(match_detections(&[], &[], 1.5, 0).is_err());
        assert!(match_detections(&[], &[], f64::NAN, 0).is_err());
        assert!(match_detections(&[], &[], 1.0, 0).is_ok());
    }

    #[test]
    fn other_classes_are_ignored() {
        let mut d = det(0.0, 0.9);
        d.class_id = 1;
        let r = match_detections(&[d], &[gt(0.0)], 0.5, 0).unwrap();
        assert_eq!(r.detections[0], DetectionVerdict::Ignored);
        assert_eq!(r.false_negatives(), 1);
        let r = match_class_agnostic(&[d], &[gt(0.0)], 0.5).unwrap();
        assert_eq!(r.true_positives(), 1);
    }

    #[test]
    fn picks_highest_iou_ground_truth() {
        let r = match_detections(&[det(4.0, 0.9)], &[gt(0.0), gt(5.0)], 0.3, 0).unwrap();
        assert_eq!(r.detections[0], DetectionVerdict::TruePositive { ground_truth: 1 });
    }
}
