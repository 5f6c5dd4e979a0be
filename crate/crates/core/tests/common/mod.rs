//! Helpers shared by the integration tests: random instance generators, an
//! independently written brute-force evaluator, a small HTTP stub server
//! and on-disk dataset builders.
#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;

use herdpipe::formats::{write_yolo_layout, AnnotationSource, Dataset, DatasetManifest, ManifestRecord, Split};
use herdpipe::geometry::{
    AnnotatedImage, BBox, ClassSet, Detection, GroundTruthBox, ImagePredictions, MaskAnnotation, MaskEncoding,
};
use herdpipe::pipeline::RasterImage;
use rand::Rng;

pub const CLASS_NAMES: [&str; 4] = ["camel", "mask", "pole", "rope"];

pub fn classes(n: usize) -> ClassSet {
    ClassSet::new(CLASS_NAMES[..n].iter().copied()).unwrap()
}

// ---------------------------------------------------------------------------
// Random small evaluation instances on an integer grid
// ---------------------------------------------------------------------------

/// Integer corners keep every area exact, so both evaluators see identical
/// IoU values.
pub fn grid_box(rng: &mut impl Rng, side: u32) -> BBox {
    let x0 = rng.gen_range(0..side);
    let y0 = rng.gen_range(0..side);
    let x1 = rng.gen_range(x0 + 1..=side);
    let y1 = rng.gen_range(y0 + 1..=side);
    BBox::new(x0.into(), y0.into(), x1.into(), y1.into()).unwrap()
}

/// Jitters a box by at most `delta` grid units per side.
pub fn nudge(rng: &mut impl Rng, b: &BBox, delta: i32, side: u32) -> BBox {
    let mut c = [b.x_min, b.y_min, b.x_max, b.y_max].map(|v| v as i32);
    for v in &mut c {
        *v = (*v + rng.gen_range(-delta..=delta)).clamp(0, side as i32);
    }
    if c[2] <= c[0] {
        c[2] = (c[0] + 1).min(side as i32);
        c[0] = c[2] - 1;
    }
    if c[3] <= c[1] {
        c[3] = (c[1] + 1).min(side as i32);
        c[1] = c[3] - 1;
    }
    BBox::new(c[0].into(), c[1].into(), c[2].into(), c[3].into()).unwrap()
}

pub struct Instance {
    pub classes: ClassSet,
    pub gts: Vec<AnnotatedImage>,
    pub preds: Vec<ImagePredictions>,
}

/// Up to `max_images` images with up to `max_boxes` ground truths and up to
/// `max_boxes` detections each, over up to `max_classes` classes. Detections
/// are mostly jittered copies of ground truths so that matches happen.
/// Confidences come from a coarse set so that ties occur.
pub fn random_instance(rng: &mut impl Rng, max_images: usize, max_boxes: usize, max_classes: usize) -> Instance {
    const SIDE: u32 = 24;
    let n_classes = rng.gen_range(1..=max_classes);
    let n_images = rng.gen_range(1..=max_images);
    let mut gts = Vec::new();
    let mut preds = Vec::new();
    for i in 0..n_images {
        let id = format!("img{i}");
        let boxes: Vec<GroundTruthBox> = (0..rng.gen_range(0..=max_boxes))
            .map(|_| GroundTruthBox::new(grid_box(rng, SIDE), rng.gen_range(0..n_classes)))
            .collect();
        let dets: Vec<Detection> = (0..rng.gen_range(0..=max_boxes))
            .map(|_| {
                let (bbox, class_id) = if !boxes.is_empty() && rng.gen_bool(0.7) {
                    let g = &boxes[rng.gen_range(0..boxes.len())];
                    let c = if rng.gen_bool(0.85) {
                        g.class_id
                    } else {
                        rng.gen_range(0..n_classes)
                    };
                    (nudge(rng, &g.bbox, 3, SIDE), c)
                } else {
                    (grid_box(rng, SIDE), rng.gen_range(0..n_classes))
                };
                let confidence = f64::from(rng.gen_range(1..=20u32)) / 20.0;
                Detection::new(bbox, class_id, confidence)
            })
            .collect();
        gts.push(AnnotatedImage::new(id.clone(), SIDE, SIDE).with_boxes(boxes));
        if !dets.is_empty() || rng.gen_bool(0.5) {
            preds.push(ImagePredictions::new(id, dets));
        }
    }
    Instance {
        classes: classes(n_classes),
        gts,
        preds,
    }
}

// ---------------------------------------------------------------------------
// Brute-force evaluator
// ---------------------------------------------------------------------------

fn area(b: &BBox) -> f64 {
    (b.x_max - b.x_min) * (b.y_max - b.y_min)
}

pub fn oracle_iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Greedy matching written from its definition: visit detections by
/// descending confidence (earlier index first on ties); each takes the
/// unclaimed ground truth with the largest IoU at or above the threshold,
/// lowest index on ties. `None` for `class` ignores labels.
/// Returns, per detection, the claimed ground-truth index.
pub fn oracle_match(dets: &[Detection], gts: &[GroundTruthBox], thr: f64, class: Option<usize>) -> Vec<Option<usize>> {
    let mut visit: Vec<usize> = (0..dets.len())
        .filter(|&i| class.is_none_or(|c| dets[i].class_id == c))
        .collect();
    // Stable sort keeps index order among equal confidences.
    visit.sort_by(|&a, &b| dets[b].confidence.partial_cmp(&dets[a].confidence).unwrap());
    let mut taken = vec![false; gts.len()];
    let mut out = vec![None; dets.len()];
    for d in visit {
        let mut pick: Option<usize> = None;
        let mut pick_iou = -1.0;
        for g in 0..gts.len() {
            if taken[g] || class.is_some_and(|c| gts[g].class_id != c) {
                continue;
            }
            let v = oracle_iou(&dets[d].bbox, &gts[g].bbox);
            if v >= thr && v > pick_iou {
                pick = Some(g);
                pick_iou = v;
            }
        }
        if let Some(g) = pick {
            taken[g] = true;
            out[d] = Some(g);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    /// `[class][threshold]`
    pub ap: Vec<Vec<Option<f64>>>,
    pub class_ap: Vec<Option<f64>>,
    pub class_recall: Vec<Option<f64>>,
    pub mean_by_threshold: Vec<f64>,
    pub map: f64,
    pub overall_ap: f64,
    pub overall_recall: f64,
}

fn mean_or_one(v: impl Iterator<Item = Option<f64>>) -> f64 {
    let xs: Vec<f64> = v.flatten().collect();
    if xs.is_empty() {
        1.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Area under the step curve obtained by walking the ranked detections one
/// at a time: each step adds (recall gained) x (precision after the step).
fn riemann_ap(ranked_hits: &[bool], n_gt: usize) -> f64 {
    let mut tp = 0usize;
    let mut area = 0.0;
    let mut last_recall = 0.0;
    for (k, &hit) in ranked_hits.iter().enumerate() {
        if hit {
            tp += 1;
        }
        let recall = if n_gt == 0 { 1.0 } else { tp as f64 / n_gt as f64 };
        let precision = tp as f64 / (k + 1) as f64;
        area += (recall - last_recall) * precision;
        last_recall = recall;
    }
    area
}

pub fn oracle_evaluate(inst: &Instance, thresholds: &[f64]) -> OracleReport {
    let n_classes = inst.classes.len();
    let empty: Vec<Detection> = Vec::new();
    let dets_for = |id: &str| {
        inst.preds
            .iter()
            .find(|p| p.image_id == id)
            .map_or(&empty, |p| &p.detections)
    };
    let mut ap = vec![vec![None; thresholds.len()]; n_classes];
    let mut class_recall = vec![None; n_classes];
    for c in 0..n_classes {
        let n_gt: usize = inst
            .gts
            .iter()
            .flat_map(|g| &g.ground_truths)
            .filter(|g| g.class_id == c)
            .count();
        let n_det: usize = inst
            .preds
            .iter()
            .flat_map(|p| &p.detections)
            .filter(|d| d.class_id == c)
            .count();
        for (t, &thr) in thresholds.iter().enumerate() {
            // (confidence, image, detection, hit)
            let mut ranked: Vec<(f64, usize, usize, bool)> = Vec::new();
            for (ii, img) in inst.gts.iter().enumerate() {
                let dets = dets_for(&img.id);
                let m = oracle_match(dets, &img.ground_truths, thr, Some(c));
                for (di, d) in dets.iter().enumerate() {
                    if d.class_id == c {
                        ranked.push((d.confidence, ii, di, m[di].is_some()));
                    }
                }
            }
            ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let hits: Vec<bool> = ranked.iter().map(|r| r.3).collect();
            if n_gt > 0 || n_det > 0 {
                ap[c][t] = Some(riemann_ap(&hits, n_gt));
            }
            if t == 0 && n_gt > 0 {
                let tp = hits.iter().filter(|h| **h).count();
                class_recall[c] = Some(tp as f64 / n_gt as f64);
            }
        }
    }
    let mean_by_threshold: Vec<f64> = (0..thresholds.len())
        .map(|t| mean_or_one((0..n_classes).map(|c| ap[c][t])))
        .collect();
    let map = mean_by_threshold.iter().sum::<f64>() / thresholds.len() as f64;
    let class_ap: Vec<Option<f64>> = ap
        .iter()
        .map(|row| {
            let xs: Vec<f64> = row.iter().flatten().copied().collect();
            (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
        })
        .collect();
    OracleReport {
        overall_ap: mean_or_one(class_ap.iter().copied()),
        overall_recall: mean_or_one(class_recall.iter().copied()),
        ap,
        class_ap,
        class_recall,
        mean_by_threshold,
        map,
    }
}

pub fn sweep() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

// ---------------------------------------------------------------------------
// Random datasets for format round trips
// ---------------------------------------------------------------------------

fn float_box(rng: &mut impl Rng, w: u32, h: u32) -> BBox {
    let (w, h) = (f64::from(w), f64::from(h));
    let x0 = rng.gen_range(0.0..w - 1.0);
    let y0 = rng.gen_range(0.0..h - 1.0);
    let x1 = rng.gen_range(x0 + 0.5..=w);
    let y1 = rng.gen_range(y0 + 0.5..=h);
    BBox::new(x0, y0, x1, y1).unwrap()
}

fn rect_rle(b: &BBox, w: u32, h: u32) -> Vec<u32> {
    let mut bits = vec![false; (w * h) as usize];
    for y in b.y_min.ceil() as u32..(b.y_max.floor() as u32).min(h) {
        for x in b.x_min.ceil() as u32..(b.x_max.floor() as u32).min(w) {
            bits[(y * w + x) as usize] = true;
        }
    }
    herdpipe::formats::rle::encode(&bits)
}

/// A dataset with random image sizes, boxes and splits. When `masks` is set,
/// some images carry one mask per box (RLE or polygon).
pub fn random_dataset(rng: &mut impl Rng, max_images: usize, masks: bool) -> Dataset {
    let n_classes = rng.gen_range(1..=CLASS_NAMES.len());
    let classes = classes(n_classes);
    let mut manifest = DatasetManifest::new(classes);
    let mut images = Vec::new();
    for i in 0..rng.gen_range(1..=max_images) {
        let id = format!("frame_{i:04}");
        let w = rng.gen_range(8..=96);
        let h = rng.gen_range(8..=96);
        let split = Split::ALL[rng.gen_range(0..3)];
        let boxes: Vec<GroundTruthBox> = (0..rng.gen_range(0..=5))
            .map(|_| GroundTruthBox::new(float_box(rng, w, h), rng.gen_range(0..n_classes)))
            .collect();
        let mut img = AnnotatedImage::new(id.clone(), w, h).with_boxes(boxes);
        if masks && rng.gen_bool(0.5) {
            img.masks = Some(
                img.ground_truths
                    .iter()
                    .map(|g| MaskAnnotation {
                        class_id: g.class_id,
                        width: w,
                        height: h,
                        encoding: if rng.gen_bool(0.5) {
                            MaskEncoding::Rle(rect_rle(&g.bbox, w, h))
                        } else {
                            let b = g.bbox;
                            MaskEncoding::Polygon(vec![[b.x_min, b.y_min], [b.x_max, b.y_min], [b.x_max, b.y_max]])
                        },
                    })
                    .collect(),
            );
        }
        manifest.records.push(ManifestRecord::new(
            id.clone(),
            ManifestRecord::conventional_path(&id, split),
            w,
            h,
            split,
            AnnotationSource::Fixture,
        ));
        images.push(img);
    }
    Dataset::new(manifest, images).unwrap()
}

// ---------------------------------------------------------------------------
// On-disk datasets
// ---------------------------------------------------------------------------

/// Writes a YOLO layout with `n` small images (and their PNGs) in `split`,
/// one box per image, class cycling through the given classes.
pub fn write_image_dataset(root: &Path, ids: &[String], split: Split, n_classes: usize, side: u32) -> Dataset {
    let mut manifest = DatasetManifest::new(classes(n_classes));
    let mut images = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        let path = ManifestRecord::conventional_path(id, split);
        let value = (i * 37 % 251) as u8;
        let mut raster = RasterImage::filled(side, side, 3, value).unwrap();
        raster.pixel_mut(0, 0).copy_from_slice(&[255, 0, (i % 256) as u8]);
        raster.save_png(&root.join(&path)).unwrap();
        let s = f64::from(side);
        let b = BBox::new(s * 0.25, s * 0.25, s * 0.75, s * 0.75).unwrap();
        images
            .push(AnnotatedImage::new(id.clone(), side, side).with_boxes(vec![GroundTruthBox::new(b, i % n_classes)]));
        manifest.records.push(ManifestRecord::new(
            id.clone(),
            path,
            side,
            side,
            split,
            AnnotationSource::Fixture,
        ));
    }
    let ds = Dataset::new(manifest, images).unwrap();
    write_yolo_layout(root, &ds).unwrap();
    ds
}

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:04}")).collect()
}

// ---------------------------------------------------------------------------
// HTTP stub
// ---------------------------------------------------------------------------

pub struct StubRequest {
    pub method: String,
    pub url: String,
    pub body: String,
}

type Handler = dyn Fn(&StubRequest) -> (u16, String) + Send + Sync;

/// A local HTTP server answering every request with `handler`. Requests are
/// served one at a time on a background thread.
pub struct StubServer {
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
    pub url: String,
}

impl StubServer {
    pub fn start(handler: impl Fn(&StubRequest) -> (u16, String) + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let addr = server.server_addr().to_ip().unwrap();
        let handler: Box<Handler> = Box::new(handler);
        let s = Arc::clone(&server);
        let thread = std::thread::spawn(move || {
            for mut req in s.incoming_requests() {
                let mut body = String::new();
                let _ = req.as_reader().read_to_string(&mut body);
                let stub = StubRequest {
                    method: req.method().to_string(),
                    url: req.url().to_string(),
                    body,
                };
                let (code, text) = handler(&stub);
                let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                let _ = req.respond(
                    tiny_http::Response::from_string(text)
                        .with_status_code(code)
                        .with_header(header),
                );
            }
        });
        Self {
            server,
            thread: Some(thread),
            url: format!("http://{addr}"),
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
