//! YOLO text labels: `class_id cx cy w h`, normalized to the image size.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{read_text, write_text, Dataset, DatasetManifest, FormatError, Split, MANIFEST_FILE};
use crate::geometry::{AnnotatedImage, BBox, ClassSet, GroundTruthBox};

/// Half a unit in the sixth decimal, times two for the `cx ± w/2` sum.
const QUANT_SLACK: f64 = 1e-6;

pub fn write_yolo_txt(img: &AnnotatedImage) -> Result<String, FormatError> {
    if img.width == 0 || img.height == 0 {
        return Err(FormatError::Invalid(format!("image `{}` has zero size", img.id)));
    }
    let (w, h) = (f64::from(img.width), f64::from(img.height));
    let mut out = String::new();
    for (index, gt) in img.ground_truths.iter().enumerate() {
        let b = &gt.bbox;
        if !b.is_valid() || !b.within(w, h) {
            return Err(FormatError::BoxOutsideImage {
                image: img.id.clone(),
                index,
                width: img.width,
                height: img.height,
            });
        }
        let cx = (b.x_min + b.x_max) / 2.0 / w;
        let cy = (b.y_min + b.y_max) / 2.0 / h;
        let bw = b.width() / w;
        let bh = b.height() / h;
        let _ = writeln!(out, "{} {cx:.6} {cy:.6} {bw:.6} {bh:.6}", gt.class_id);
    }
    Ok(out)
}

fn line_err(line: usize, reason: impl Into<String>) -> FormatError {
    FormatError::Line {
        line,
        reason: reason.into(),
    }
}

/// Snaps a coordinate that overshoots `[0, limit]` by quantization noise.
fn settle(v: f64, limit: f64, line: usize) -> Result<f64, FormatError> {
    let slack = QUANT_SLACK * limit;
    if v < -slack || v > limit + slack {
        return Err(line_err(line, "box extends outside the image"));
    }
    Ok(v.clamp(0.0, limit))
}

pub fn parse_yolo_txt(
    id: &str,
    text: &str,
    width: u32,
    height: u32,
    classes: &ClassSet,
) -> Result<AnnotatedImage, FormatError> {
    if width == 0 || height == 0 {
        return Err(FormatError::Invalid(format!("image `{id}` has zero size")));
    }
    let (w, h) = (f64::from(width), f64::from(height));
    let mut boxes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(line_err(line, format!("expected 5 fields, got {}", fields.len())));
        }
        let class_id: usize = fields[0]
            .parse()
            .map_err(|_| line_err(line, format!("class id `{}` is not an integer", fields[0])))?;
        if classes.check_id(class_id).is_err() {
            return Err(line_err(
                line,
                format!("class id {class_id} out of range for {} classes", classes.len()),
            ));
        }
        let mut vals = [0.0f64; 4];
        for (slot, field) in vals.iter_mut().zip(&fields[1..]) {
            let v: f64 = field
                .parse()
                .map_err(|_| line_err(line, format!("`{field}` is not a number")))?;
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(line_err(line, format!("`{field}` is outside [0, 1]")));
            }
            *slot = v;
        }
        let [cx, cy, bw, bh] = vals;
        let x_min = settle((cx - bw / 2.0) * w, w, line)?;
        let x_max = settle((cx + bw / 2.0) * w, w, line)?;
        let y_min = settle((cy - bh / 2.0) * h, h, line)?;
        let y_max = settle((cy + bh / 2.0) * h, h, line)?;
        let bbox = BBox::new(x_min, y_min, x_max, y_max).map_err(|e| line_err(line, e.to_string()))?;
        boxes.push(GroundTruthBox::new(bbox, class_id));
    }
    Ok(AnnotatedImage::new(id, width, height).with_boxes(boxes))
}

fn data_yaml(classes: &ClassSet) -> String {
    let mut out = String::from("path: .\ntrain: train/images\nval: valid/images\ntest: test/images\nnames:\n");
    for (i, name) in classes.names().iter().enumerate() {
        // JSON strings are valid YAML scalars
        let quoted = serde_json::to_string(name).unwrap_or_default();
        let _ = writeln!(out, "  {i}: {quoted}");
    }
    out
}

/// Writes `manifest.json`, `data.yaml` and `<split>/labels/<id>.txt` under
/// `root`, the layout Ultralytics-style trainers read. Returns written paths.
pub fn write_yolo_layout(root: &Path, dataset: &Dataset) -> Result<Vec<PathBuf>, FormatError> {
    dataset.validate()?;
    let mut written = Vec::new();
    for (record, img) in dataset.manifest.records.iter().zip(&dataset.images) {
        let path = DatasetManifest::label_path(root, record);
        write_text(&path, &write_yolo_txt(img)?)?;
        written.push(path);
    }
    for split in Split::ALL {
        let dir = root.join(split.as_str()).join("labels");
        if !dir.exists() {
            std::fs::create_dir_all(&dir).map_err(|source| FormatError::Io {
                path: dir.clone(),
                source,
            })?;
        }
    }
    let yaml = root.join("data.yaml");
    write_text(&yaml, &data_yaml(&dataset.manifest.classes))?;
    written.push(yaml);
    let manifest = root.join(MANIFEST_FILE);
    dataset.manifest.save(&manifest)?;
    written.push(manifest);
    Ok(written)
}

/// Reads a layout produced by [`write_yolo_layout`].
pub fn read_yolo_layout(root: &Path) -> Result<Dataset, FormatError> {
    let manifest = DatasetManifest::load(&root.join(MANIFEST_FILE))?;
    let mut images = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        let path = DatasetManifest::label_path(root, r);
        let text = read_text(&path)?;
        let img = parse_yolo_txt(&r.image_id, &text, r.width, r.height, &manifest.classes)
            .map_err(|e| FormatError::Invalid(format!("{}: {e}", path.display())))?;
        images.push(img);
    }
    Dataset::new(manifest, images)
}
