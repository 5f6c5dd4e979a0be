//! Writes a synthetic dataset as YOLO text files, then converts it to COCO
//! JSON, Pascal VOC XML and CSV and reads each result back.
//!
//! Run with `cargo run --example convert`.

use herdpipe::formats::{
    convert, read_dataset, write_dataset, AnnotationSource, Dataset, DatasetManifest, Format, ManifestRecord, Split,
};
use herdpipe::geometry::{AnnotatedImage, BBox, ClassSet, GroundTruthBox};

fn synthetic() -> anyhow::Result<Dataset> {
    let mut manifest = DatasetManifest::new(ClassSet::new(["camel", "mask", "pole", "rope"])?);
    let mut images = Vec::new();
    for i in 0..6u32 {
        let id = format!("clip_{i:03}");
        let x = f64::from(10 + 20 * i);
        let boxes = vec![
            GroundTruthBox::new(BBox::new(x, 15.0, x + 50.5, 90.25)?, (i % 4) as usize),
            GroundTruthBox::new(BBox::new(200.0, 40.0, 260.0, 150.0)?, 3),
        ];
        images.push(AnnotatedImage::new(id.clone(), 320, 240).with_boxes(boxes));
        let path = ManifestRecord::conventional_path(&id, Split::Train);
        manifest.records.push(ManifestRecord::new(
            id,
            path,
            320,
            240,
            Split::Train,
            AnnotationSource::Fixture,
        ));
    }
    Ok(Dataset::new(manifest, images)?)
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let ds = synthetic()?;
    let yolo = dir.path().join("yolo");
    write_dataset(&yolo, Format::YoloTxt, &ds)?;

    for (to, name) in [
        (Format::CocoJson, "labels.json"),
        (Format::VocXml, "voc"),
        (Format::Csv, "labels.csv"),
    ] {
        let out = dir.path().join(name);
        let s = convert(&yolo, Some(Format::YoloTxt), &out, to)?;
        let back = read_dataset(&out, to)?;
        let first = &back.images[0].ground_truths[0].bbox;
        println!(
            "{} -> {}: {} images, {} boxes, {} files; first box [{:.3}, {:.3}, {:.3}, {:.3}]",
            s.from,
            s.to,
            s.images,
            s.boxes,
            s.written.len(),
            first.x_min,
            first.y_min,
            first.x_max,
            first.y_max
        );
    }
    Ok(())
}
