//! Samples every third frame from a directory of frame images and writes the
//! preprocessed frames into a train split.
//!
//! Run with `cargo run --example extract_frames`.

use herdpipe::pipeline::{extract_frames, ImageSequenceSource, PipelineConfig, RasterImage};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let frames = dir.path().join("frames");
    std::fs::create_dir_all(&frames)?;
    for i in 0..10u32 {
        let mut img = RasterImage::filled(48, 32, 3, 40 + (i * 15) as u8)?;
        img.pixel_mut(i, 5).copy_from_slice(&[255, 255, 255]);
        img.save_png(&frames.join(format!("frame{i:04}.png")))?;
    }
    let source = ImageSequenceSource::open(&frames, Some("pasture"))?;
    let out = dir.path().join("train/images");
    let cfg = PipelineConfig::default();
    let s = extract_frames(&source, 3, &out, Some(&cfg))?;
    println!(
        "{} of {} frames kept (stride {}): {:?}",
        s.image_ids.len(),
        s.frame_count,
        s.stride,
        s.image_ids
    );
    Ok(())
}
