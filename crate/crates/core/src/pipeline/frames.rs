use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::Serialize;

use super::{io_err, preprocess, PipelineConfig, PipelineError, RasterImage};
use crate::formats::check_image_id;

/// Indices `0, stride, 2*stride, ...` below `frame_count`.
pub fn frame_indices(frame_count: usize, stride: usize) -> Result<Vec<usize>, PipelineError> {
    if stride == 0 {
        return Err(PipelineError::Config("stride must be at least 1".into()));
    }
    Ok((0..frame_count).step_by(stride).collect())
}

pub fn frame_name(video_id: &str, index: usize) -> String {
    format!("{video_id}_{index}")
}

/// Random access to decoded video frames.
pub trait FrameSource: Sync {
    fn video_id(&self) -> &str;
    fn frame_count(&self) -> usize;
    fn frame(&self, index: usize) -> Result<RasterImage, PipelineError>;
}

/// A directory of already-dumped frames, ordered by file name.
#[derive(Debug, Clone)]
pub struct ImageSequenceSource {
    video_id: String,
    frames: Vec<PathBuf>,
}

fn is_raster(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

impl ImageSequenceSource {
    /// `video_id` defaults to the directory name.
    pub fn open(dir: &Path, video_id: Option<&str>) -> Result<Self, PipelineError> {
        let mut frames: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_file() && is_raster(p))
            .collect();
        frames.sort();
        let video_id = match video_id {
            Some(v) => v.to_string(),
            None => dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .ok_or_else(|| PipelineError::Source(format!("{} has no name", dir.display())))?,
        };
        check_image_id(&video_id)?;
        Ok(Self { video_id, frames })
    }
}

impl FrameSource for ImageSequenceSource {
    fn video_id(&self) -> &str {
        &self.video_id
    }

    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, index: usize) -> Result<RasterImage, PipelineError> {
        let path = self
            .frames
            .get(index)
            .ok_or_else(|| PipelineError::Source(format!("frame {index} of {} does not exist", self.frames.len())))?;
        RasterImage::load(path)
    }
}

/// Delegates decoding to an external `ffmpeg`, which dumps every frame to a
/// scratch directory that is then read as an image sequence.
#[derive(Debug, Clone)]
pub struct FfmpegSource {
    inner: ImageSequenceSource,
}

impl FfmpegSource {
    pub fn open(video: &Path, scratch: &Path, video_id: Option<&str>) -> Result<Self, PipelineError> {
        if !video.is_file() {
            return Err(PipelineError::Io {
                path: video.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "video not found"),
            });
        }
        std::fs::create_dir_all(scratch).map_err(io_err(scratch))?;
        let status = Command::new("ffmpeg")
            .args(["-nostdin", "-v", "error", "-i"])
            .arg(video)
            .args(["-vsync", "0"])
            .arg(scratch.join("%08d.png"))
            .status()
            .map_err(|e| {
                PipelineError::Source(format!(
                    "cannot run ffmpeg ({e}); dump the frames to a directory and pass that instead"
                ))
            })?;
        if !status.success() {
            return Err(PipelineError::Source(format!(
                "ffmpeg failed on {} ({status})",
                video.display()
            )));
        }
        let stem = video
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".into());
        let inner = ImageSequenceSource::open(scratch, Some(video_id.unwrap_or(&stem)))?;
        Ok(Self { inner })
    }
}

impl FrameSource for FfmpegSource {
    fn video_id(&self) -> &str {
        self.inner.video_id()
    }

    fn frame_count(&self) -> usize {
        self.inner.frame_count()
    }

    fn frame(&self, index: usize) -> Result<RasterImage, PipelineError> {
        self.inner.frame(index)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtractSummary {
    pub video_id: String,
    pub frame_count: usize,
    pub stride: usize,
    pub indices: Vec<usize>,
    pub image_ids: Vec<String>,
    pub written: Vec<PathBuf>,
}

/// Writes every `stride`-th frame to `out_dir/<video-id>_<index>.png`,
/// preprocessed when `preprocess_with` is given.
pub fn extract_frames(
    source: &dyn FrameSource,
    stride: usize,
    out_dir: &Path,
    preprocess_with: Option<&PipelineConfig>,
) -> Result<ExtractSummary, PipelineError> {
    let indices = frame_indices(source.frame_count(), stride)?;
    let image_ids: Vec<String> = indices.iter().map(|&i| frame_name(source.video_id(), i)).collect();
    let written = indices
        .par_iter()
        .zip(&image_ids)
        .map(|(&i, id)| {
            let mut img = source.frame(i)?;
            if let Some(cfg) = preprocess_with {
                img = preprocess(&img, cfg)?;
            }
            let path = out_dir.join(format!("{id}.png"));
            img.save_png(&path)?;
            Ok(path)
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(ExtractSummary {
        video_id: source.video_id().to_string(),
        frame_count: source.frame_count(),
        stride,
        indices,
        image_ids,
        written,
    })
}
