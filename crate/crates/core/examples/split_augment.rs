//! Builds a 50-image dataset on disk, splits it 70/20/10 with a fixed seed
//! and adds augmented copies of the train images.
//!
//! Run with `cargo run --example split_augment`.

use herdpipe::formats::{write_yolo_layout, AnnotationSource, Dataset, DatasetManifest, ManifestRecord, Split};
use herdpipe::geometry::{AnnotatedImage, BBox, ClassSet, GroundTruthBox};
use herdpipe::pipeline::{apply_split, augment_dataset, split, PipelineConfig, RasterImage};

const SIDE: u32 = 64;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let mut manifest = DatasetManifest::new(ClassSet::new(["camel", "pole"])?);
    let mut images = Vec::new();
    for i in 0..50u32 {
        let id = format!("herd_{i:03}");
        let path = ManifestRecord::conventional_path(&id, Split::Train);
        let mut raster = RasterImage::filled(SIDE, SIDE, 3, (i * 5) as u8)?;
        for y in 16..48 {
            for x in 8..40 {
                raster.pixel_mut(x, y).copy_from_slice(&[200, 150, 90]);
            }
        }
        raster.save_png(&root.join(&path))?;
        let gt = GroundTruthBox::new(BBox::new(8.0, 16.0, 40.0, 48.0)?, (i % 2) as usize);
        images.push(AnnotatedImage::new(id.clone(), SIDE, SIDE).with_boxes(vec![gt]));
        manifest.records.push(ManifestRecord::new(
            id,
            path,
            SIDE,
            SIDE,
            Split::Train,
            AnnotationSource::Fixture,
        ));
    }
    let mut ds = Dataset::new(manifest, images)?;
    write_yolo_layout(root, &ds)?;

    let cfg = PipelineConfig {
        rng_seed: 42,
        ..PipelineConfig::default()
    };
    let ids: Vec<String> = ds.manifest.records.iter().map(|r| r.image_id.clone()).collect();
    let assignment = split(&ids, cfg.split_fractions, cfg.rng_seed)?;
    apply_split(root, &mut ds.manifest, &assignment)?;
    let [train, valid, test] = assignment.counts();
    println!("split: train {train}, valid {valid}, test {test}");

    let s = augment_dataset(root, &cfg)?;
    println!(
        "augment: train {} -> {}, valid {}, test {}, total {} ({} grayscale sources)",
        s.train_before, s.train_after, s.valid, s.test, s.total, s.grayscale_sources
    );
    println!(
        "running augment again fails: {}",
        augment_dataset(root, &cfg).unwrap_err()
    );
    Ok(())
}
