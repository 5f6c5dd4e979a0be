//! Auto-labels a dataset with the mock oracle standing in for the zero-shot
//! detector and the segmenter, then writes YOLO labels and COCO files.
//!
//! Run with `cargo run --example annotate_mock`.

use herdpipe::annotate::{annotate_dataset, persist_annotations, AnnotateOptions, ImageJob};
use herdpipe::backend::{MockOracle, Segmenter};
use herdpipe::formats::{AnnotationSource, Dataset, DatasetManifest, ManifestRecord, Split};
use herdpipe::geometry::{AnnotatedImage, BBox, ClassSet, GroundTruthBox};
use herdpipe::pipeline::RasterImage;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let classes = ClassSet::new(["camel", "mask", "pole", "rope"])?;
    let mut manifest = DatasetManifest::new(classes.clone());
    let mut reference = Vec::new();
    for i in 0..8u32 {
        let id = format!("frame_{i:03}");
        let path = ManifestRecord::conventional_path(&id, Split::Train);
        RasterImage::filled(96, 64, 3, 90)?.save_png(&root.join(&path))?;
        let x = f64::from(4 * i);
        let boxes = vec![
            GroundTruthBox::new(BBox::new(x, 10.0, x + 30.0, 40.0)?, 0),
            GroundTruthBox::new(BBox::new(60.0, 5.0, 70.0, 60.0)?, 2),
        ];
        reference.push(AnnotatedImage::new(id.clone(), 96, 64).with_boxes(boxes));
        manifest.records.push(ManifestRecord::new(
            id,
            path,
            96,
            64,
            Split::Train,
            AnnotationSource::Unlabeled,
        ));
    }
    let oracle = MockOracle::new(Dataset::new(manifest.clone(), reference)?);

    let jobs = ImageJob::from_manifest(root, &manifest);
    let opts = AnnotateOptions::new(vec!["camel".into(), "face mask".into(), "pole".into(), "rope".into()]);
    let run = annotate_dataset(&jobs, &classes, &oracle, Some(&oracle as &dyn Segmenter), &opts)?;
    let s = &run.stats;
    println!(
        "{} of {} images detected, {} boxes kept, {} segmented, {} failures",
        s.detected,
        s.images,
        s.boxes_kept,
        s.segmented,
        run.failures.len()
    );
    for path in persist_annotations(root, &manifest, &run)?
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
    {
        println!("wrote {}", path.strip_prefix(root)?.display());
    }
    println!("requests sent to the oracle: {}", oracle.requests().len());
    Ok(())
}
