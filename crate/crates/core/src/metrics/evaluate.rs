use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{curve_from_pooled, f1, precision, recall, AllPointAp, ApRule, ImageIndex, MetricsError, PrPoint};
use crate::geometry::{AnnotatedImage, ClassSet, ImagePredictions};

/// IoU sweep and curve sampling for [`evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub confidence_steps: usize,
    pub classes: ClassSet,
}

impl EvalConfig {
    /// The 0.50:0.05:0.95 sweep with 101 curve samples.
    pub fn new(classes: ClassSet) -> Self {
        Self {
            iou_thresholds: Self::default_sweep(),
            confidence_steps: 101,
            classes,
        }
    }

    pub fn default_sweep() -> Vec<f64> {
        (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
    }

    pub fn with_thresholds(mut self, thresholds: Vec<f64>) -> Self {
        self.iou_thresholds = thresholds;
        self
    }

    pub fn with_confidence_steps(mut self, steps: usize) -> Self {
        self.confidence_steps = steps;
        self
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.classes.is_empty() {
            return Err(MetricsError::Config("empty class set".into()));
        }
        if self.iou_thresholds.is_empty() {
            return Err(MetricsError::Config("at least one IoU threshold required".into()));
        }
        for t in &self.iou_thresholds {
            crate::matching::check_threshold(*t)?;
        }
        if self.iou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricsError::Config(
                "IoU thresholds must be strictly increasing".into(),
            ));
        }
        if self.confidence_steps < 2 {
            return Err(MetricsError::Config(format!(
                "confidence_steps must be >= 2, got {}",
                self.confidence_steps
            )));
        }
        Ok(())
    }

    /// Evenly spaced cutoffs covering `[0, 1]`.
    pub fn cutoffs(&self) -> Vec<f64> {
        let n = self.confidence_steps - 1;
        (0..=n).map(|j| j as f64 / n as f64).collect()
    }

    fn index_of(&self, thr: f64) -> Option<usize> {
        self.iou_thresholds.iter().position(|t| (t - thr).abs() < 1e-12)
    }
}

/// Precision, recall and F1 sampled at the report's confidence cutoffs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceCurve {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCurves {
    pub class_id: usize,
    pub name: String,
    pub confidence: ConfidenceCurve,
    pub precision_recall: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    /// IoU threshold the curves were computed at (first of the sweep).
    pub iou_threshold: f64,
    pub cutoffs: Vec<f64>,
    pub classes: Vec<ClassCurves>,
    /// Mean over evaluable classes.
    pub all: ConfidenceCurve,
}

/// Per-class results. AP fields are `None` when the class has neither ground
/// truths nor detections; recall is `None` without ground truths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEval {
    pub class_id: usize,
    pub name: String,
    pub ground_truths: usize,
    pub detections: usize,
    pub ap_by_threshold: Vec<Option<f64>>,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_thresholds: Vec<f64>,
    pub per_class: Vec<ClassEval>,
    /// Mean-class AP at each threshold of the sweep.
    pub mean_ap_by_threshold: Vec<f64>,
    /// Mean-class AP at IoU 0.50, when 0.50 is part of the sweep.
    pub ap50: Option<f64>,
    /// Sum of per-threshold mean-class APs divided by the sweep length.
    pub map: f64,
    /// Mean over classes of each class's sweep-averaged AP.
    pub ap: f64,
    /// Mean-class recall at the first threshold using every detection.
    pub recall: f64,
    pub curves: Curves,
}

/// Mean of the defined entries; 1.0 when none is defined.
fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

/// `(AP_t1 + ... + AP_tk) / k`.
pub fn mean_over_sweep(per_threshold: &[f64]) -> f64 {
    if per_threshold.is_empty() {
        return 0.0;
    }
    per_threshold.iter().sum::<f64>() / per_threshold.len() as f64
}

pub fn evaluate(
    gts: &[AnnotatedImage],
    preds: &[ImagePredictions],
    cfg: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    evaluate_with(gts, preds, cfg, &AllPointAp)
}

struct ClassWork {
    eval: ClassEval,
    curves: ClassCurves,
}

pub fn evaluate_with(
    gts: &[AnnotatedImage],
    preds: &[ImagePredictions],
    cfg: &EvalConfig,
    rule: &dyn ApRule,
) -> Result<EvalReport, MetricsError> {
    cfg.validate()?;
    for img in gts {
        for g in &img.ground_truths {
            g.bbox.check()?;
            cfg.classes.check_id(g.class_id)?;
        }
    }
    for p in preds {
        for d in &p.detections {
            d.check(&cfg.classes)?;
        }
    }
    let index = ImageIndex::build(gts, preds)?;
    let cutoffs = cfg.cutoffs();
    let ap50_index = cfg.index_of(0.5);

    let work: Vec<ClassWork> = (0..cfg.classes.len())
        .into_par_iter()
        .map(|class_id| class_work(&index, cfg, rule, class_id, &cutoffs, ap50_index))
        .collect::<Result<_, _>>()?;

    let k = cfg.iou_thresholds.len();
    let mean_ap_by_threshold: Vec<f64> = (0..k)
        .map(|t| mean_defined(work.iter().map(|w| w.eval.ap_by_threshold[t])))
        .collect();
    let map = mean_over_sweep(&mean_ap_by_threshold);
    let ap = mean_defined(work.iter().map(|w| w.eval.ap));
    let recall = mean_defined(work.iter().map(|w| w.eval.recall));
    let ap50 = ap50_index.map(|i| mean_ap_by_threshold[i]);

    let evaluable: Vec<&ClassWork> = work.iter().filter(|w| w.eval.ap.is_some()).collect();
    let mean_at = |pick: fn(&ConfidenceCurve) -> &Vec<f64>, j: usize| {
        mean_defined(evaluable.iter().map(|w| Some(pick(&w.curves.confidence)[j])))
    };
    let all = ConfidenceCurve {
        precision: (0..cutoffs.len()).map(|j| mean_at(|c| &c.precision, j)).collect(),
        recall: (0..cutoffs.len()).map(|j| mean_at(|c| &c.recall, j)).collect(),
        f1: (0..cutoffs.len()).map(|j| mean_at(|c| &c.f1, j)).collect(),
    };

    let (per_class, class_curves): (Vec<_>, Vec<_>) = work.into_iter().map(|w| (w.eval, w.curves)).unzip();

    Ok(EvalReport {
        iou_thresholds: cfg.iou_thresholds.clone(),
        per_class,
        mean_ap_by_threshold,
        ap50,
        map,
        ap,
        recall,
        curves: Curves {
            iou_threshold: cfg.iou_thresholds[0],
            cutoffs,
            classes: class_curves,
            all,
        },
    })
}

fn class_work(
    index: &ImageIndex<'_>,
    cfg: &EvalConfig,
    rule: &dyn ApRule,
    class_id: usize,
    cutoffs: &[f64],
    ap50_index: Option<usize>,
) -> Result<ClassWork, MetricsError> {
    let name = cfg.classes.name(class_id).unwrap_or_default().to_string();
    let gt_count = index.gt_count(class_id);
    let det_count = index
        .predictions
        .iter()
        .flat_map(|d| d.iter())
        .filter(|d| d.class_id == class_id)
        .count();
    let evaluable = gt_count > 0 || det_count > 0;

    let mut ap_by_threshold = Vec::with_capacity(cfg.iou_thresholds.len());
    let mut first_pooled = Vec::new();
    let mut first_curve = Vec::new();
    for (t, &thr) in cfg.iou_thresholds.iter().enumerate() {
        let pooled = index.pooled(class_id, thr)?;
        let curve = curve_from_pooled(&pooled, gt_count);
        ap_by_threshold.push(if evaluable {
            Some(rule.average_precision(&curve, thr)?)
        } else {
            None
        });
        if t == 0 {
            first_pooled = pooled;
            first_curve = curve;
        }
    }

    let mut confidence = ConfidenceCurve::default();
    for &c in cutoffs {
        let (tp, fp) = first_pooled
            .iter()
            .filter(|s| s.confidence >= c)
            .fold(
                (0, 0),
                |(tp, fp), s| {
                    if s.true_positive {
                        (tp + 1, fp)
                    } else {
                        (tp, fp + 1)
                    }
                },
            );
        let p = precision(tp, fp);
        let r = recall(tp, gt_count - tp);
        confidence.precision.push(p);
        confidence.recall.push(r);
        confidence.f1.push(f1(p, r));
    }

    let total_tp = first_pooled.iter().filter(|s| s.true_positive).count();
    let ap = if evaluable {
        Some(mean_over_sweep(
            &ap_by_threshold.iter().flatten().copied().collect::<Vec<_>>(),
        ))
    } else {
        None
    };
    Ok(ClassWork {
        eval: ClassEval {
            class_id,
            name: name.clone(),
            ground_truths: gt_count,
            detections: det_count,
            ap50: ap50_index.and_then(|i| ap_by_threshold[i]),
            ap_by_threshold,
            ap,
            recall: (gt_count > 0).then(|| recall(total_tp, gt_count - total_tp)),
        },
        curves: ClassCurves {
            class_id,
            name,
            confidence,
            precision_recall: first_curve,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, Detection, GroundTruthBox};

    fn classes() -> ClassSet {
        ClassSet::new(["camel", "rope"]).unwrap()
    }

    fn gt_images() -> Vec<AnnotatedImage> {
        vec![
            AnnotatedImage::new("a", 100, 100).with_boxes(vec![
                GroundTruthBox::new(BBox::new(0.0, 0.0, 20.0, 20.0).unwrap(), 0),
                GroundTruthBox::new(BBox::new(50.0, 50.0, 60.0, 90.0).unwrap(), 1),
            ]),
            AnnotatedImage::new("b", 100, 100)
                .with_boxes(vec![GroundTruthBox::new(BBox::new(10.0, 10.0, 40.0, 40.0).unwrap(), 0)]),
        ]
    }

    #[test]
    fn default_sweep_is_ten_thresholds() {
        let s = EvalConfig::default_sweep();
        assert_eq!(s.len(), 10);
        assert_eq!(s[0], 0.5);
        assert_eq!(s[9], 0.95);
        assert!(EvalConfig::new(classes()).validate().is_ok());
    }

    #[test]
    fn config_validation() {
        let cfg = EvalConfig::new(classes());
        assert!(cfg.clone().with_thresholds(vec![]).validate().is_err());
        assert!(cfg.clone().with_thresholds(vec![0.6, 0.5]).validate().is_err());
        assert!(cfg.clone().with_thresholds(vec![0.0]).validate().is_err());
        assert!(cfg.clone().with_confidence_steps(1).validate().is_err());
        assert_eq!(cfg.with_confidence_steps(3).cutoffs(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn perfect_detector_scores_one() {
        let gts = gt_images();
        let preds: Vec<_> = gts.iter().map(ImagePredictions::from_ground_truth).collect();
        let r = evaluate(&gts, &preds, &EvalConfig::new(classes())).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.ap, 1.0);
        assert_eq!(r.ap50, Some(1.0));
        assert_eq!(r.recall, 1.0);
        assert!(r.mean_ap_by_threshold.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn no_predictions_scores_zero() {
        let r = evaluate(&gt_images(), &[], &EvalConfig::new(classes())).unwrap();
        assert_eq!(r.map, 0.0);
        assert_eq!(r.ap, 0.0);
        assert_eq!(r.recall, 0.0);
    }

    #[test]
    fn class_without_labels_or_predictions_is_excluded() {
        let cs = ClassSet::new(["camel", "rope", "pole"]).unwrap();
        let gts = gt_images();
        let preds: Vec<_> = gts.iter().map(ImagePredictions::from_ground_truth).collect();
        let r = evaluate(&gts, &preds, &EvalConfig::new(cs)).unwrap();
        assert_eq!(r.per_class[2].ap, None);
        assert_eq!(r.map, 1.0);
    }

    #[test]
    fn prediction_class_out_of_range() {
        let preds = vec![ImagePredictions::new(
            "a",
            vec![Detection::new(BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), 7, 0.5)],
        )];
        assert!(evaluate(&gt_images(), &preds, &EvalConfig::new(classes())).is_err());
    }

    #[test]
    fn curves_are_sampled_per_config() {
        let gts = gt_images();
        let preds: Vec<_> = gts.iter().map(ImagePredictions::from_ground_truth).collect();
        let r = evaluate(&gts, &preds, &EvalConfig::new(classes()).with_confidence_steps(11)).unwrap();
        assert_eq!(r.curves.cutoffs.len(), 11);
        assert_eq!(r.curves.classes.len(), 2);
        assert!(r.curves.all.f1.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ap50_absent_when_not_swept() {
        let gts = gt_images();
        let cfg = EvalConfig::new(classes()).with_thresholds(vec![0.75]);
        let r = evaluate(&gts, &[], &cfg).unwrap();
        assert_eq!(r.ap50, None);
    }
}
