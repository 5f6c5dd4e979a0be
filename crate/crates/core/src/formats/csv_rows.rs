//! Flat CSV, one row per box. Image sizes and images without boxes come
//! from the manifest, which travels alongside the CSV file.

use std::collections::HashMap;

use super::{Dataset, DatasetManifest, FormatError};
use crate::geometry::{AnnotatedImage, BBox, ClassSet, Detection, GroundTruthBox, ImagePredictions};

pub const CSV_HEADER: [&str; 8] = [
    "image_id",
    "class",
    "x_min",
    "y_min",
    "x_max",
    "y_max",
    "confidence",
    "split",
];

struct Row {
    image_id: String,
    class: String,
    bbox: [f64; 4],
    confidence: Option<f64>,
    split: String,
}

fn render(mut rows: Vec<Row>) -> Result<String, FormatError> {
    rows.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let conf = r.confidence.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([
            r.image_id.as_str(),
            r.class.as_str(),
            &r.bbox[0].to_string(),
            &r.bbox[1].to_string(),
            &r.bbox[2].to_string(),
            &r.bbox[3].to_string(),
            &conf,
            r.split.as_str(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| FormatError::Invalid(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| FormatError::Invalid(e.to_string()))
}

fn class_name(classes: &ClassSet, id: usize) -> Result<String, FormatError> {
    classes.check_id(id)?;
    Ok(classes.name(id).unwrap_or_default().to_string())
}

pub fn write_csv(dataset: &Dataset) -> Result<String, FormatError> {
    dataset.validate()?;
    let classes = &dataset.manifest.classes;
    let mut rows = Vec::with_capacity(dataset.box_count());
    for (rec, img) in dataset.manifest.records.iter().zip(&dataset.images) {
        for gt in &img.ground_truths {
            let b = gt.bbox;
            rows.push(Row {
                image_id: img.id.clone(),
                class: class_name(classes, gt.class_id)?,
                bbox: [b.x_min, b.y_min, b.x_max, b.y_max],
                confidence: None,
                split: rec.split.to_string(),
            });
        }
    }
    render(rows)
}

pub fn write_csv_predictions(manifest: &DatasetManifest, preds: &[ImagePredictions]) -> Result<String, FormatError> {
    let mut rows = Vec::new();
    for p in preds {
        let rec = manifest
            .record(&p.image_id)
            .ok_or_else(|| FormatError::Manifest(format!("predictions for unknown image `{}`", p.image_id)))?;
        for d in &p.detections {
            d.check(&manifest.classes)?;
            let b = d.bbox;
            rows.push(Row {
                image_id: p.image_id.clone(),
                class: class_name(&manifest.classes, d.class_id)?,
                bbox: [b.x_min, b.y_min, b.x_max, b.y_max],
                confidence: Some(d.confidence),
                split: rec.split.to_string(),
            });
        }
    }
    render(rows)
}

struct ParsedRow {
    line: usize,
    image_index: usize,
    class_id: usize,
    bbox: BBox,
    confidence: Option<f64>,
}

fn parse_rows(text: &str, manifest: &DatasetManifest) -> Result<Vec<ParsedRow>, FormatError> {
    let index: HashMap<&str, usize> = manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.image_id.as_str(), i))
        .collect();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(FormatError::Line {
            line: 1,
            reason: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let err = |reason: String| FormatError::Line { line, reason };
        let image_id = &rec[0];
        let image_index = *index
            .get(image_id)
            .ok_or_else(|| err(format!("image `{image_id}` is not in the manifest")))?;
        let class_id = manifest
            .classes
            .id_of(&rec[1])
            .ok_or_else(|| FormatError::UnknownClass {
                name: rec[1].to_string(),
                known: manifest.classes.names().to_vec(),
            })?;
        let mut c = [0.0; 4];
        for (slot, field) in c.iter_mut().zip(rec.iter().skip(2)) {
            *slot = field.parse().map_err(|_| err(format!("`{field}` is not a number")))?;
        }
        let bbox = BBox::new(c[0], c[1], c[2], c[3]).map_err(|e| err(e.to_string()))?;
        let confidence = match &rec[6] {
            "" => None,
            s => Some(
                s.parse::<f64>()
                    .map_err(|_| err(format!("confidence `{s}` is not a number")))?,
            ),
        };
        let split = manifest.records[image_index].split;
        if rec[7] != *split.as_str() {
            return Err(err(format!(
                "split `{}` disagrees with manifest split `{split}`",
                &rec[7]
            )));
        }
        out.push(ParsedRow {
            line,
            image_index,
            class_id,
            bbox,
            confidence,
        });
    }
    Ok(out)
}

/// Ground-truth rows; every manifest image is returned, in manifest order.
pub fn parse_csv(text: &str, manifest: &DatasetManifest) -> Result<Vec<AnnotatedImage>, FormatError> {
    manifest.validate()?;
    let mut images: Vec<AnnotatedImage> = manifest
        .records
        .iter()
        .map(|r| AnnotatedImage::new(r.image_id.clone(), r.width, r.height))
        .collect();
    for row in parse_rows(text, manifest)? {
        if row.confidence.is_some() {
            return Err(FormatError::Line {
                line: row.line,
                reason: "ground-truth rows must leave confidence empty".into(),
            });
        }
        images[row.image_index]
            .ground_truths
            .push(GroundTruthBox::new(row.bbox, row.class_id));
    }
    Dataset::new(manifest.clone(), images.clone())?;
    Ok(images)
}

pub fn parse_csv_predictions(text: &str, manifest: &DatasetManifest) -> Result<Vec<ImagePredictions>, FormatError> {
    manifest.validate()?;
    let mut preds: Vec<ImagePredictions> = manifest
        .records
        .iter()
        .map(|r| ImagePredictions::new(r.image_id.clone(), Vec::new()))
        .collect();
    for row in parse_rows(text, manifest)? {
        let confidence = row.confidence.ok_or_else(|| FormatError::Line {
            line: row.line,
            reason: "prediction rows need a confidence".into(),
        })?;
        let d = Detection::new(row.bbox, row.class_id, confidence);
        d.check(&manifest.classes)?;
        preds[row.image_index].detections.push(d);
    }
    Ok(preds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::{AnnotationSource, ManifestRecord, Split};

    fn dataset() -> Dataset {
        let mut m = DatasetManifest::new(ClassSet::new(["camel", "rope"]).unwrap());
        for (id, split) in [("b", Split::Valid), ("a", Split::Train), ("empty", Split::Test)] {
            m.records.push(ManifestRecord::new(
                id,
                ManifestRecord::conventional_path(id, split),
                100,
                100,
                split,
                AnnotationSource::Fixture,
            ));
        }
        let images = vec![
            AnnotatedImage::new("b", 100, 100)
                .with_boxes(vec![GroundTruthBox::new(BBox::new(0.1, 0.2, 30.0, 40.5).unwrap(), 1)]),
            AnnotatedImage::new("a", 100, 100)
                .with_boxes(vec![GroundTruthBox::new(BBox::new(1.0, 2.0, 3.0, 4.0).unwrap(), 0)]),
            AnnotatedImage::new("empty", 100, 100),
        ];
        Dataset::new(m, images).unwrap()
    }

    #[test]
    fn rows_sorted_with_shortest_floats() {
        let text = write_csv(&dataset()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "image_id,class,x_min,y_min,x_max,y_max,confidence,split");
        assert_eq!(lines[1], "a,camel,1,2,3,4,,train");
        assert_eq!(lines[2], "b,rope,0.1,0.2,30,40.5,,valid");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn round_trip_keeps_empty_images() {
        let ds = dataset();
        let text = write_csv(&ds).unwrap();
        assert_eq!(parse_csv(&text, &ds.manifest).unwrap(), ds.images);
    }

    #[test]
    fn predictions_round_trip() {
        let ds = dataset();
        let preds: Vec<ImagePredictions> = ds
            .images
            .iter()
            .map(|i| {
                let mut p = ImagePredictions::from_ground_truth(i);
                p.detections.iter_mut().for_each(|d| d.confidence = 0.375);
                p
            })
            .collect();
        let text = write_csv_predictions(&ds.manifest, &preds).unwrap();
        assert!(text.contains(",0.375,"));
        assert_eq!(parse_csv_predictions(&text, &ds.manifest).unwrap(), preds);
        assert!(parse_csv(&text, &ds.manifest).is_err());
    }

    #[test]
    fn line_numbers_in_errors() {
        let ds = dataset();
        let text =
            "image_id,class,x_min,y_min,x_max,y_max,confidence,split\na,camel,1,2,3,4,,train\na,camel,1,x,3,4,,train\n";
        assert!(matches!(
            parse_csv(text, &ds.manifest),
            Err(FormatError::Line { line: 3, .. })
        ));
        let text = "image_id,class,x_min,y_min,x_max,y_max,confidence,split\na,horse,1,2,3,4,,train\n";
        assert!(matches!(
            parse_csv(text, &ds.manifest),
            Err(FormatError::UnknownClass { .. })
        ));
    }
}
