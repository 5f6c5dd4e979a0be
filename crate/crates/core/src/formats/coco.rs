//! COCO-style JSON. Category ids equal class ids. Images carry three extra
//! keys (`name`, `split`, `source`) so the manifest survives a round trip.
//! RLE masks are stored column-major as COCO expects.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rle;
use super::{AnnotationSource, Dataset, DatasetManifest, FormatError, ManifestRecord, Normalization, Split};
use crate::geometry::{
    AnnotatedImage, BBox, ClassSet, Detection, GroundTruthBox, ImagePredictions, MaskAnnotation, MaskEncoding,
};

#[derive(Debug, Serialize, Deserialize)]
struct CocoInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalization: Option<Normalization>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    info: Option<CocoInfo>,
    images: Vec<CocoImage>,
    categories: Vec<CocoCategory>,
    annotations: Vec<CocoAnnotation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<AnnotationSource>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum CocoSegmentation {
    Polygon(Vec<Vec<f64>>),
    Rle { counts: Vec<u32>, size: [u32; 2] },
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default)]
    area: f64,
    #[serde(default)]
    iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segmentation: Option<CocoSegmentation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

fn coco_image(index: usize, r: &ManifestRecord) -> CocoImage {
    CocoImage {
        id: index as u64 + 1,
        file_name: r.path.clone(),
        width: r.width,
        height: r.height,
        name: Some(r.image_id.clone()),
        split: Some(r.split),
        source: Some(r.source),
    }
}

fn categories(classes: &ClassSet) -> Vec<CocoCategory> {
    classes
        .names()
        .iter()
        .enumerate()
        .map(|(i, n)| CocoCategory {
            id: i as u64,
            name: n.clone(),
        })
        .collect()
}

fn xywh(b: &BBox) -> [f64; 4] {
    [b.x_min, b.y_min, b.width(), b.height()]
}

fn segmentation(mask: &MaskAnnotation) -> CocoSegmentation {
    match &mask.encoding {
        MaskEncoding::Polygon(points) => {
            CocoSegmentation::Polygon(vec![points.iter().flat_map(|p| [p[0], p[1]]).collect()])
        }
        MaskEncoding::Rle(counts) => CocoSegmentation::Rle {
            counts: rle::row_to_column_major(counts, mask.width, mask.height),
            size: [mask.height, mask.width],
        },
    }
}

fn to_text(doc: &CocoDocument) -> Result<String, FormatError> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

fn header(manifest: &DatasetManifest) -> CocoDocument {
    CocoDocument {
        info: manifest
            .normalization
            .clone()
            .map(|n| CocoInfo { normalization: Some(n) }),
        images: manifest
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| coco_image(i, r))
            .collect(),
        categories: categories(&manifest.classes),
        annotations: Vec::new(),
    }
}

pub fn write_coco_json(manifest: &DatasetManifest, images: &[AnnotatedImage]) -> Result<String, FormatError> {
    Dataset::new(manifest.clone(), images.to_vec())?;
    let mut doc = header(manifest);
    let mut next_id = 1u64;
    for (ii, img) in images.iter().enumerate() {
        for (bi, gt) in img.ground_truths.iter().enumerate() {
            doc.annotations.push(CocoAnnotation {
                id: next_id,
                image_id: ii as u64 + 1,
                category_id: gt.class_id as u64,
                bbox: xywh(&gt.bbox),
                area: gt.bbox.area(),
                iscrowd: 0,
                segmentation: img.masks.as_ref().map(|m| segmentation(&m[bi])),
                score: None,
            });
            next_id += 1;
        }
    }
    to_text(&doc)
}

/// Scored detections as a COCO document over the manifest's images.
pub fn write_coco_predictions(manifest: &DatasetManifest, preds: &[ImagePredictions]) -> Result<String, FormatError> {
    manifest.validate()?;
    let index: HashMap<&str, usize> = manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.image_id.as_str(), i))
        .collect();
    let mut doc = header(manifest);
    let mut next_id = 1u64;
    for p in preds {
        let ii = *index
            .get(p.image_id.as_str())
            .ok_or_else(|| FormatError::Manifest(format!("predictions for unknown image `{}`", p.image_id)))?;
        for d in &p.detections {
            d.check(&manifest.classes)?;
            doc.annotations.push(CocoAnnotation {
                id: next_id,
                image_id: ii as u64 + 1,
                category_id: d.class_id as u64,
                bbox: xywh(&d.bbox),
                area: d.bbox.area(),
                iscrowd: 0,
                segmentation: None,
                score: Some(d.confidence),
            });
            next_id += 1;
        }
    }
    to_text(&doc)
}

struct Parsed {
    manifest: DatasetManifest,
    /// COCO image id -> index into `manifest.records`.
    image_index: HashMap<u64, usize>,
    /// COCO category id -> class id.
    class_index: HashMap<u64, usize>,
    annotations: Vec<CocoAnnotation>,
}

fn stem(file_name: &str) -> String {
    Path::new(file_name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_name.to_string())
}

fn parse_document(text: &str) -> Result<Parsed, FormatError> {
    let doc: CocoDocument = serde_json::from_str(text)?;
    let mut cats: Vec<&CocoCategory> = doc.categories.iter().collect();
    cats.sort_by_key(|c| c.id);
    if cats.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(FormatError::Invalid("duplicate category id".into()));
    }
    let classes = ClassSet::new(cats.iter().map(|c| c.name.clone()))?;
    let class_index = cats.iter().enumerate().map(|(i, c)| (c.id, i)).collect();

    let mut manifest = DatasetManifest::new(classes);
    manifest.normalization = doc.info.and_then(|i| i.normalization);
    let mut image_index = HashMap::with_capacity(doc.images.len());
    for (i, im) in doc.images.into_iter().enumerate() {
        if image_index.insert(im.id, i).is_some() {
            return Err(FormatError::Invalid(format!("duplicate image id {}", im.id)));
        }
        manifest.records.push(ManifestRecord {
            image_id: im.name.unwrap_or_else(|| stem(&im.file_name)),
            path: im.file_name,
            width: im.width,
            height: im.height,
            split: im.split.unwrap_or(Split::Train),
            source: im.source.unwrap_or(AnnotationSource::Human),
        });
    }
    manifest.validate()?;
    Ok(Parsed {
        manifest,
        image_index,
        class_index,
        annotations: doc.annotations,
    })
}

fn locate(parsed: &Parsed, a: &CocoAnnotation) -> Result<(usize, usize, BBox), FormatError> {
    let ii = *parsed
        .image_index
        .get(&a.image_id)
        .ok_or_else(|| FormatError::DanglingImage {
            annotation: a.id,
            image_id: a.image_id.to_string(),
        })?;
    let class_id = *parsed.class_index.get(&a.category_id).ok_or_else(|| {
        FormatError::Invalid(format!(
            "annotation {} references unknown category {}",
            a.id, a.category_id
        ))
    })?;
    let [x, y, w, h] = a.bbox;
    let bbox = BBox::from_xywh(x, y, w, h)?;
    Ok((ii, class_id, bbox))
}

fn mask_from(seg: CocoSegmentation, class_id: usize, r: &ManifestRecord) -> Result<MaskAnnotation, FormatError> {
    let encoding = match seg {
        CocoSegmentation::Polygon(rings) => {
            let [ring] = <[Vec<f64>; 1]>::try_from(rings)
                .map_err(|_| FormatError::Mask("exactly one polygon ring is supported".into()))?;
            if ring.len() % 2 != 0 {
                return Err(FormatError::Mask("polygon has an odd coordinate count".into()));
            }
            MaskEncoding::Polygon(ring.chunks(2).map(|c| [c[0], c[1]]).collect())
        }
        CocoSegmentation::Rle { counts, size } => {
            if size != [r.height, r.width] {
                return Err(FormatError::Mask(format!(
                    "RLE size {:?} does not match image {}x{}",
                    size, r.width, r.height
                )));
            }
            if !rle::is_canonical(&counts) {
                return Err(FormatError::Mask("non-canonical run lengths".into()));
            }
            MaskEncoding::Rle(rle::column_to_row_major(&counts, r.width, r.height))
        }
    };
    let mask = MaskAnnotation {
        class_id,
        width: r.width,
        height: r.height,
        encoding,
    };
    mask.check()?;
    Ok(mask)
}

/// Inverse of [`write_coco_json`]. Annotations with a `score` are rejected;
/// use [`parse_coco_predictions`] for detections.
pub fn parse_coco_json(text: &str) -> Result<(DatasetManifest, Vec<AnnotatedImage>), FormatError> {
    let mut parsed = parse_document(text)?;
    let mut images: Vec<AnnotatedImage> = parsed
        .manifest
        .records
        .iter()
        .map(|r| AnnotatedImage::new(r.image_id.clone(), r.width, r.height))
        .collect();
    let mut masks: Vec<Vec<Option<MaskAnnotation>>> = vec![Vec::new(); images.len()];
    for a in std::mem::take(&mut parsed.annotations) {
        if a.score.is_some() {
            return Err(FormatError::Invalid(format!(
                "annotation {} carries a score; ground truths must not",
                a.id
            )));
        }
        let (ii, class_id, bbox) = locate(&parsed, &a)?;
        images[ii].ground_truths.push(GroundTruthBox::new(bbox, class_id));
        let mask = a
            .segmentation
            .map(|s| mask_from(s, class_id, &parsed.manifest.records[ii]))
            .transpose()?;
        masks[ii].push(mask);
    }
    for (img, ms) in images.iter_mut().zip(masks) {
        let present = ms.iter().filter(|m| m.is_some()).count();
        if present == 0 {
            continue;
        }
        if present != ms.len() {
            return Err(FormatError::Mask(format!(
                "image `{}` has segmentation on only some annotations",
                img.id
            )));
        }
        img.masks = Some(ms.into_iter().flatten().collect());
    }
    Dataset::new(parsed.manifest.clone(), images.clone())?;
    Ok((parsed.manifest, images))
}

/// Detections from a COCO document whose annotations all carry `score`.
/// Images are matched to the given manifest by `name` (or file stem).
pub fn parse_coco_predictions(text: &str, manifest: &DatasetManifest) -> Result<Vec<ImagePredictions>, FormatError> {
    let parsed = parse_document(text)?;
    if parsed.manifest.classes != manifest.classes {
        return Err(FormatError::Invalid(format!(
            "prediction categories [{}] differ from dataset classes [{}]",
            parsed.manifest.classes.names().join(", "),
            manifest.classes.names().join(", ")
        )));
    }
    let mut preds: Vec<ImagePredictions> = parsed
        .manifest
        .records
        .iter()
        .map(|r| {
            manifest
                .record(&r.image_id)
                .map(|_| ImagePredictions::new(r.image_id.clone(), Vec::new()))
                .ok_or_else(|| FormatError::Manifest(format!("predictions for unknown image `{}`", r.image_id)))
        })
        .collect::<Result<_, _>>()?;
    for a in &parsed.annotations {
        let score = a
            .score
            .ok_or_else(|| FormatError::Invalid(format!("annotation {} has no score", a.id)))?;
        let (ii, class_id, bbox) = locate(&parsed, a)?;
        let d = Detection::new(bbox, class_id, score);
        d.check(&manifest.classes)?;
        preds[ii].detections.push(d);
    }
    Ok(preds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> DatasetManifest {
        let mut m = DatasetManifest::new(ClassSet::new(["camel", "rope"]).unwrap());
        m.records.push(ManifestRecord::new(
            "a",
            "train/images/a.png",
            100,
            80,
            Split::Train,
            AnnotationSource::TeacherAuto,
        ));
        m
    }

    fn boxed() -> Vec<AnnotatedImage> {
        vec![AnnotatedImage::new("a", 100, 80)
            .with_boxes(vec![GroundTruthBox::new(BBox::new(10.0, 20.0, 30.0, 60.0).unwrap(), 1)])]
    }

    #[test]
    fn empty_dataset() {
        let m = DatasetManifest::new(ClassSet::new(["camel"]).unwrap());
        let text = write_coco_json(&m, &[]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["images"], serde_json::json!([]));
        assert_eq!(v["annotations"], serde_json::json!([]));
        assert_eq!(v["categories"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn bbox_is_xywh() {
        let text = write_coco_json(&manifest(), &boxed()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["annotations"][0]["bbox"], serde_json::json!([10.0, 20.0, 20.0, 40.0]));
        assert_eq!(v["annotations"][0]["category_id"], 1);
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 3);
        let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("images") < pos("categories") && pos("categories") < pos("annotations"));
    }

    #[test]
    fn round_trip_with_masks() {
        let mut imgs = boxed();
        imgs[0]
            .ground_truths
            .push(GroundTruthBox::new(BBox::new(0.0, 0.0, 4.0, 4.0).unwrap(), 0));
        let mut bits = vec![false; 100 * 80];
        bits[205] = true;
        bits[206] = true;
        bits[305] = true;
        imgs[0].masks = Some(vec![
            MaskAnnotation {
                class_id: 1,
                width: 100,
                height: 80,
                encoding: MaskEncoding::Polygon(vec![[10.0, 20.0], [30.0, 20.0], [30.0, 60.0]]),
            },
            MaskAnnotation {
                class_id: 0,
                width: 100,
                height: 80,
                encoding: MaskEncoding::Rle(rle::encode(&bits)),
            },
        ]);
        let mut m = manifest();
        m.normalization = Some(Normalization {
            mean: vec![0.5; 3],
            std: vec![0.5; 3],
        });
        let text = write_coco_json(&m, &imgs).unwrap();
        let (m2, imgs2) = parse_coco_json(&text).unwrap();
        assert_eq!(m2, m);
        assert_eq!(imgs2, imgs);
    }

    #[test]
    fn structured_errors() {
        assert!(matches!(
            parse_coco_json(r#"{"images": [], "categories": [{"id": 0, "name": "a"}]}"#),
            Err(FormatError::Json(_))
        ));
        let dangling = r#"{"images": [], "categories": [{"id": 0, "name": "a"}],
            "annotations": [{"id": 7, "image_id": 3, "category_id": 0, "bbox": [0,0,1,1]}]}"#;
        assert!(matches!(
            parse_coco_json(dangling),
            Err(FormatError::DanglingImage { annotation: 7, .. })
        ));
    }

    #[test]
    fn foreign_one_based_categories() {
        let doc = r#"{"images": [{"id": 5, "file_name": "x/cam.jpg", "width": 10, "height": 10}],
            "categories": [{"id": 2, "name": "rope"}, {"id": 1, "name": "camel"}],
            "annotations": [{"id": 1, "image_id": 5, "category_id": 2, "bbox": [1,1,2,2]}]}"#;
        let (m, imgs) = parse_coco_json(doc).unwrap();
        assert_eq!(m.classes.names(), ["camel", "rope"]);
        assert_eq!(m.records[0].image_id, "cam");
        assert_eq!(imgs[0].ground_truths[0].class_id, 1);
    }

    #[test]
    fn predictions_round_trip() {
        let m = manifest();
        let preds = vec![ImagePredictions::new(
            "a",
            vec![Detection::new(BBox::new(1.0, 2.0, 3.0, 4.0).unwrap(), 0, 0.25)],
        )];
        let text = write_coco_predictions(&m, &preds).unwrap();
        assert_eq!(parse_coco_predictions(&text, &m).unwrap(), preds);
        // ground-truth parser refuses scored annotations
        assert!(parse_coco_json(&text).is_err());
    }
}
