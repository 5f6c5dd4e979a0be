//! Pascal VOC XML, one document per image. Pixel coordinates are 1-based
//! and inclusive, so `xmin = x_min + 1` and `xmax = x_max` after rounding.

use serde::{Deserialize, Serialize};

use super::{FormatError, ManifestRecord};
use crate::geometry::{AnnotatedImage, BBox, ClassSet, GroundTruthBox};

#[derive(Debug, Serialize, Deserialize)]
struct VocAnnotation {
    #[serde(default)]
    folder: String,
    filename: String,
    size: VocSize,
    #[serde(default)]
    segmented: u8,
    #[serde(rename = "object", default)]
    objects: Vec<VocObject>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VocSize {
    width: u32,
    height: u32,
    #[serde(default = "three")]
    depth: u32,
}

fn three() -> u32 {
    3
}

#[derive(Debug, Serialize, Deserialize)]
struct VocObject {
    name: String,
    #[serde(default = "unspecified")]
    pose: String,
    #[serde(default)]
    truncated: u8,
    #[serde(default)]
    difficult: u8,
    bndbox: VocBox,
}

fn unspecified() -> String {
    "Unspecified".into()
}

#[derive(Debug, Serialize, Deserialize)]
struct VocBox {
    xmin: i64,
    ymin: i64,
    xmax: i64,
    ymax: i64,
}

fn xml_err(e: impl std::fmt::Display) -> FormatError {
    FormatError::Xml(e.to_string())
}

pub fn write_voc_xml(record: &ManifestRecord, img: &AnnotatedImage, classes: &ClassSet) -> Result<String, FormatError> {
    img.check(classes)?;
    let (w, h) = (f64::from(img.width), f64::from(img.height));
    let objects = img
        .ground_truths
        .iter()
        .map(|gt| {
            let b = &gt.bbox;
            let x_max = b.x_max.round();
            let y_max = b.y_max.round();
            let x_min = b.x_min.round().min(x_max);
            let y_min = b.y_min.round().min(y_max);
            VocObject {
                name: classes.name(gt.class_id).unwrap_or_default().to_string(),
                pose: unspecified(),
                truncated: u8::from(b.x_min <= 0.0 || b.y_min <= 0.0 || b.x_max >= w || b.y_max >= h),
                difficult: 0,
                bndbox: VocBox {
                    xmin: x_min as i64 + 1,
                    ymin: y_min as i64 + 1,
                    xmax: x_max as i64,
                    ymax: y_max as i64,
                },
            }
        })
        .collect();
    let folder = record
        .path
        .rsplit_once('/')
        .map(|(dir, _)| dir.to_string())
        .unwrap_or_default();
    let filename = record.path.rsplit('/').next().unwrap_or(&record.path).to_string();
    let doc = VocAnnotation {
        folder,
        filename,
        size: VocSize {
            width: img.width,
            height: img.height,
            depth: 3,
        },
        segmented: 0,
        objects,
    };
    let mut out = String::new();
    let mut ser = quick_xml::se::Serializer::with_root(&mut out, Some("annotation")).map_err(xml_err)?;
    ser.indent(' ', 2);
    doc.serialize(ser).map_err(xml_err)?;
    out.push('\n');
    Ok(out)
}

/// Parses one VOC document. Returns the `filename` element and the labels,
/// with `id` used as the image id.
pub fn parse_voc_xml(id: &str, text: &str, classes: &ClassSet) -> Result<(String, AnnotatedImage), FormatError> {
    let doc: VocAnnotation = quick_xml::de::from_str(text).map_err(xml_err)?;
    if doc.size.width == 0 || doc.size.height == 0 {
        return Err(FormatError::Invalid(format!("`{id}`: image has zero size")));
    }
    let mut boxes = Vec::with_capacity(doc.objects.len());
    for (index, o) in doc.objects.iter().enumerate() {
        let class_id = classes.id_of(&o.name).ok_or_else(|| FormatError::UnknownClass {
            name: o.name.clone(),
            known: classes.names().to_vec(),
        })?;
        let b = &o.bndbox;
        let bbox = BBox::new((b.xmin - 1) as f64, (b.ymin - 1) as f64, b.xmax as f64, b.ymax as f64)
            .map_err(|e| FormatError::Invalid(format!("`{id}` object {index}: {e}")))?;
        if !bbox.within(f64::from(doc.size.width), f64::from(doc.size.height)) {
            return Err(FormatError::BoxOutsideImage {
                image: id.to_string(),
                index,
                width: doc.size.width,
                height: doc.size.height,
            });
        }
        boxes.push(GroundTruthBox::new(bbox, class_id));
    }
    let img = AnnotatedImage::new(id, doc.size.width, doc.size.height).with_boxes(boxes);
    Ok((doc.filename, img))
}
