//! Auto-annotation: a teacher proposes boxes for every image, then an
//! optional segmenter turns each image's boxes into masks.
//!
//! Backend calls run concurrently, but results are assembled in input order.
//! An image whose backend call fails is recorded as a failure and left out;
//! the run carries on with the remaining images.

use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::backend::{
    with_retries, BackendError, BackendSpec, DetectRequest, DetectResponse, ImagePayload, SegmentRequest, Segmenter,
    Teacher,
};
use crate::formats::{
    write_coco_json, write_text, write_yolo_layout, AnnotationSource, Dataset, DatasetManifest, FormatError,
};
use crate::geometry::{clip_to_image, AnnotatedImage, ClassSet, GroundTruthBox};

pub const DEFAULT_BOX_THRESHOLD: f64 = 0.35;
pub const DEFAULT_TEXT_THRESHOLD: f64 = 0.25;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("annotate config: {0}")]
    Config(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotateOptions {
    /// Prompt `i` labels class `i`.
    pub prompts: Vec<String>,
    pub box_threshold: f64,
    pub text_threshold: f64,
    pub max_concurrent: usize,
    pub retries: u32,
    pub backoff_base: Duration,
    pub inline_images: bool,
}

impl AnnotateOptions {
    pub fn new(prompts: Vec<String>) -> Self {
        Self {
            prompts,
            box_threshold: DEFAULT_BOX_THRESHOLD,
            text_threshold: DEFAULT_TEXT_THRESHOLD,
            max_concurrent: 4,
            retries: 2,
            backoff_base: Duration::from_millis(500),
            inline_images: false,
        }
    }

    /// Concurrency, retry and transport settings taken from the teacher spec.
    pub fn from_spec(prompts: Vec<String>, spec: &BackendSpec) -> Self {
        Self {
            max_concurrent: spec.max_concurrent,
            retries: spec.retries,
            backoff_base: Duration::from_millis(spec.backoff_base_ms),
            inline_images: spec.inline_images,
            ..Self::new(prompts)
        }
    }

    fn validate(&self, classes: &ClassSet) -> Result<(), AnnotateError> {
        if self.prompts.is_empty() || self.prompts.iter().any(|p| p.trim().is_empty()) {
            return Err(AnnotateError::Config("prompts must be non-empty strings".into()));
        }
        if self.prompts.len() != classes.len() {
            return Err(AnnotateError::Config(format!(
                "{} prompts for {} classes; prompt i labels class i",
                self.prompts.len(),
                classes.len()
            )));
        }
        for (name, t) in [("box", self.box_threshold), ("text", self.text_threshold)] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(AnnotateError::Config(format!("{name} threshold {t} outside (0, 1]")));
            }
        }
        if self.max_concurrent == 0 {
            return Err(AnnotateError::Config("max_concurrent must be at least 1".into()));
        }
        Ok(())
    }
}

/// One image to annotate.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageJob {
    pub id: String,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
}

impl ImageJob {
    pub fn from_manifest(root: &Path, manifest: &DatasetManifest) -> Vec<ImageJob> {
        manifest
            .records
            .iter()
            .map(|r| ImageJob {
                id: r.image_id.clone(),
                path: root.join(&r.path),
                width: r.width,
                height: r.height,
            })
            .collect()
    }

    fn payload(&self, inline: bool) -> Result<ImagePayload, BackendError> {
        if inline {
            ImagePayload::read_inline(&self.path)
        } else {
            Ok(ImagePayload::path(&self.path))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Detect,
    Segment,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageFailure {
    pub image_id: String,
    pub stage: Stage,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnnotateStats {
    pub images: usize,
    pub detected: usize,
    pub segmented: usize,
    pub boxes_kept: usize,
    pub below_threshold: usize,
    pub clipped: usize,
    pub outside_image: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRun {
    /// Images the teacher labelled, in input order.
    pub detection: Vec<AnnotatedImage>,
    /// Empty when no segmenter is configured; otherwise the detected images
    /// that were also segmented, each with one mask per box.
    pub segmentation: Vec<AnnotatedImage>,
    pub failures: Vec<ImageFailure>,
    pub stats: AnnotateStats,
}

impl AnnotationRun {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Default)]
struct Filtered {
    boxes: Vec<GroundTruthBox>,
    below: usize,
    clipped: usize,
    outside: usize,
}

fn check_response(resp: &DetectResponse, prompts: usize) -> Result<(), BackendError> {
    for (i, d) in resp.detections.iter().enumerate() {
        let reason = if d.prompt_index >= prompts {
            format!(
                "detection {i} has prompt_index {} but only {prompts} prompts were sent",
                d.prompt_index
            )
        } else if !(0.0..=1.0).contains(&d.confidence) {
            format!("detection {i} has confidence {} outside [0, 1]", d.confidence)
        } else if d.bbox.iter().any(|c| !c.is_finite()) || d.bbox[0] > d.bbox[2] || d.bbox[1] > d.bbox[3] {
            format!("detection {i} has malformed bbox {:?}", d.bbox)
        } else {
            continue;
        };
        let payload = serde_json::to_string(resp).unwrap_or_default();
        return Err(BackendError::protocol(reason, &payload));
    }
    Ok(())
}

fn filter_detections(resp: &DetectResponse, job: &ImageJob, threshold: f64) -> Filtered {
    let mut out = Filtered::default();
    for d in &resp.detections {
        if d.confidence < threshold {
            out.below += 1;
            continue;
        }
        let raw = d.bbox();
        match clip_to_image(&raw, f64::from(job.width), f64::from(job.height)) {
            Ok(b) => {
                out.clipped += usize::from(b != raw);
                out.boxes.push(GroundTruthBox::new(b, d.prompt_index));
            }
            Err(_) => out.outside += 1,
        }
    }
    out
}

fn detect_one(job: &ImageJob, teacher: &dyn Teacher, opts: &AnnotateOptions) -> Result<Filtered, BackendError> {
    let req = DetectRequest {
        image: job.payload(opts.inline_images)?,
        prompts: opts.prompts.clone(),
        box_threshold: opts.box_threshold,
        text_threshold: opts.text_threshold,
    };
    let resp = with_retries(opts.retries, opts.backoff_base, || teacher.detect(&req))?;
    check_response(&resp, opts.prompts.len())?;
    Ok(filter_detections(&resp, job, opts.box_threshold))
}

fn segment_one(
    job: &ImageJob,
    labels: &AnnotatedImage,
    segmenter: &dyn Segmenter,
    opts: &AnnotateOptions,
) -> Result<AnnotatedImage, BackendError> {
    let mut out = labels.clone();
    if labels.ground_truths.is_empty() {
        out.masks = Some(Vec::new());
        return Ok(out);
    }
    let req = SegmentRequest {
        image: job.payload(opts.inline_images)?,
        boxes: labels
            .ground_truths
            .iter()
            .map(|g| [g.bbox.x_min, g.bbox.y_min, g.bbox.x_max, g.bbox.y_max])
            .collect(),
    };
    let resp = with_retries(opts.retries, opts.backoff_base, || segmenter.segment(&req))?;
    let payload = || serde_json::to_string(&resp).unwrap_or_default();
    if resp.masks.len() != req.boxes.len() {
        return Err(BackendError::protocol(
            format!("sent {} boxes, got {} masks", req.boxes.len(), resp.masks.len()),
            &payload(),
        ));
    }
    let mut masks = Vec::with_capacity(resp.masks.len());
    for (i, (m, g)) in resp.masks.iter().zip(&labels.ground_truths).enumerate() {
        let mask = m.clone().into_annotation(g.class_id, job.width, job.height);
        mask.check()
            .map_err(|e| BackendError::protocol(format!("mask {i}: {e}"), &payload()))?;
        masks.push(mask);
    }
    out.masks = Some(masks);
    Ok(out)
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

/// Labels `jobs` with `teacher`, then masks them with `segmenter` if given.
pub fn annotate_dataset(
    jobs: &[ImageJob],
    classes: &ClassSet,
    teacher: &dyn Teacher,
    segmenter: Option<&dyn Segmenter>,
    opts: &AnnotateOptions,
) -> Result<AnnotationRun, AnnotateError> {
    opts.validate(classes)?;
    let workers = pool(opts.max_concurrent);
    let mut stats = AnnotateStats {
        images: jobs.len(),
        ..Default::default()
    };
    let mut failures = Vec::new();

    let detected: Vec<Result<Filtered, BackendError>> =
        workers.install(|| jobs.par_iter().map(|j| detect_one(j, teacher, opts)).collect());
    let mut detection = Vec::with_capacity(jobs.len());
    let mut detected_jobs = Vec::with_capacity(jobs.len());
    for (job, result) in jobs.iter().zip(detected) {
        match result {
            Ok(f) => {
                stats.boxes_kept += f.boxes.len();
                stats.below_threshold += f.below;
                stats.clipped += f.clipped;
                stats.outside_image += f.outside;
                detection.push(AnnotatedImage::new(job.id.clone(), job.width, job.height).with_boxes(f.boxes));
                detected_jobs.push(job);
            }
            Err(e) => failures.push(ImageFailure {
                image_id: job.id.clone(),
                stage: Stage::Detect,
                error: e.to_string(),
            }),
        }
    }
    stats.detected = detection.len();

    let mut segmentation = Vec::new();
    if let Some(seg) = segmenter {
        let results: Vec<Result<AnnotatedImage, BackendError>> = workers.install(|| {
            detected_jobs
                .par_iter()
                .zip(&detection)
                .map(|(job, labels)| segment_one(job, labels, seg, opts))
                .collect()
        });
        for (job, r) in detected_jobs.iter().zip(results) {
            match r {
                Ok(img) => segmentation.push(img),
                Err(e) => failures.push(ImageFailure {
                    image_id: job.id.clone(),
                    stage: Stage::Segment,
                    error: e.to_string(),
                }),
            }
        }
        stats.segmented = segmentation.len();
    }

    Ok(AnnotationRun {
        detection,
        segmentation,
        failures,
        stats,
    })
}

pub const DETECTIONS_COCO: &str = "annotations/detections.coco.json";
pub const SEGMENTATION_COCO: &str = "annotations/segmentation.coco.json";

fn subset(base: &DatasetManifest, images: &[AnnotatedImage]) -> Result<Dataset, FormatError> {
    let mut manifest = DatasetManifest {
        records: Vec::with_capacity(images.len()),
        ..base.clone()
    };
    for img in images {
        let mut r = base
            .record(&img.id)
            .cloned()
            .ok_or_else(|| FormatError::Manifest(format!("`{}` is not in the manifest", img.id)))?;
        r.source = AnnotationSource::TeacherAuto;
        manifest.records.push(r);
    }
    Dataset::new(manifest, images.to_vec())
}

/// Writes the detection dataset as a YOLO layout under `root` plus a COCO
/// copy, and the segmentation dataset (if any) as COCO with masks. Failed
/// images are left out of both. Returns the files written.
pub fn persist_annotations(
    root: &Path,
    base: &DatasetManifest,
    run: &AnnotationRun,
) -> Result<Vec<PathBuf>, AnnotateError> {
    let det = subset(base, &run.detection)?;
    let mut written = write_yolo_layout(root, &det)?;
    let coco = root.join(DETECTIONS_COCO);
    write_text(&coco, &write_coco_json(&det.manifest, &det.images)?)?;
    written.push(coco);
    if !run.segmentation.is_empty() {
        let seg = subset(base, &run.segmentation)?;
        let path = root.join(SEGMENTATION_COCO);
        write_text(&path, &write_coco_json(&seg.manifest, &seg.images)?)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::WireDetection;
    use crate::geometry::BBox;

    struct Scripted(DetectResponse);

    impl Teacher for Scripted {
        fn detect(&self, _: &DetectRequest) -> Result<DetectResponse, BackendError> {
            Ok(self.0.clone())
        }
    }

    fn det(b: [f64; 4], p: usize, c: f64) -> WireDetection {
        WireDetection {
            bbox: b,
            prompt_index: p,
            confidence: c,
        }
    }

    fn job() -> ImageJob {
        ImageJob {
            id: "a".into(),
            path: "a.png".into(),
            width: 100,
            height: 50,
        }
    }

    fn opts() -> AnnotateOptions {
        AnnotateOptions::new(vec!["camel".into(), "rope".into()])
    }

    #[test]
    fn threshold_and_clipping() {
        let classes = ClassSet::new(["camel", "rope"]).unwrap();
        let teacher = Scripted(DetectResponse {
            detections: vec![
                det([1.0, 1.0, 10.0, 10.0], 0, 0.9),
                det([1.0, 1.0, 10.0, 10.0], 1, 0.34),
                det([90.0, 40.0, 120.0, 60.0], 1, 0.35),
                det([200.0, 200.0, 300.0, 300.0], 0, 0.8),
            ],
            model: "t".into(),
            latency_ms: 1.0,
        });
        let run = annotate_dataset(&[job()], &classes, &teacher, None, &opts()).unwrap();
        let boxes = &run.detection[0].ground_truths;
        assert_eq!(boxes.len(), 2);
        assert_eq!(boxes[1].bbox, BBox::new(90.0, 40.0, 100.0, 50.0).unwrap());
        assert_eq!(boxes[1].class_id, 1);
        assert_eq!(
            (run.stats.below_threshold, run.stats.clipped, run.stats.outside_image),
            (1, 1, 1)
        );
        assert!(run.segmentation.is_empty());
    }

    #[test]
    fn bad_prompt_index_is_a_recorded_failure() {
        let classes = ClassSet::new(["camel", "rope"]).unwrap();
        let teacher = Scripted(DetectResponse {
            detections: vec![det([1.0, 1.0, 2.0, 2.0], 5, 0.9)],
            model: "t".into(),
            latency_ms: 1.0,
        });
        let run = annotate_dataset(&[job()], &classes, &teacher, None, &opts()).unwrap();
        assert!(run.detection.is_empty());
        assert_eq!(run.failures.len(), 1);
        assert!(
            run.failures[0].error.contains("prompt_index 5"),
            "{}",
            run.failures[0].error
        );
    }

    #[test]
    fn prompt_count_must_match_classes() {
        let classes = ClassSet::new(["camel"]).unwrap();
        let teacher = Scripted(DetectResponse {
            detections: vec![],
            model: "t".into(),
            latency_ms: 0.0,
        });
        assert!(annotate_dataset(&[], &classes, &teacher, None, &opts()).is_err());
        let run = annotate_dataset(
            &[],
            &classes,
            &teacher,
            None,
            &AnnotateOptions::new(vec!["camel".into()]),
        )
        .unwrap();
        assert!(run.detection.is_empty() && run.segmentation.is_empty());
    }
}
