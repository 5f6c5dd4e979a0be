use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use super::PipelineError;

/// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, PipelineError> {
        if channels != 1 && channels != 3 {
            return Err(PipelineError::Raster(format!("unsupported channel count {channels}")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(PipelineError::Raster(format!(
                "{width}x{height}x{channels} needs {expected} samples, got {}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self, PipelineError> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width as usize * height as usize * channels as usize],
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    /// The samples of pixel (x, y).
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let o = self.offset(x, y);
        let c = self.channels as usize;
        &mut self.data[o..o + c]
    }

    /// Copies the `w`x`h` window whose top-left corner is (x0, y0).
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Result<Self, PipelineError> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(PipelineError::Raster(format!(
                "window {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels as usize;
        let mut data = Vec::with_capacity(w as usize * h as usize * c);
        for y in y0..y0 + h {
            let start = self.offset(x0, y);
            data.extend_from_slice(&self.data[start..start + w as usize * c]);
        }
        Self::new(w, h, self.channels, data)
    }

    /// Single-channel luma, `0.299R + 0.587G + 0.114B` rounded.
    pub fn to_luma(&self) -> Self {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| {
                let l = 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]);
                l.round().clamp(0.0, 255.0) as u8
            })
            .collect();
        Self {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    fn from_dynamic(img: DynamicImage) -> Result<Self, PipelineError> {
        match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                Self::new(w, h, 1, g.into_raw())
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                Self::new(w, h, 3, rgb.into_raw())
            }
        }
    }

    fn to_dynamic(&self) -> DynamicImage {
        if self.channels == 1 {
            DynamicImage::ImageLuma8(GrayImage::from_raw(self.width, self.height, self.data.clone()).expect("sized"))
        } else {
            DynamicImage::ImageRgb8(RgbImage::from_raw(self.width, self.height, self.data.clone()).expect("sized"))
        }
    }

    /// Reads a PNG or JPEG file. Grayscale files stay single-channel; every
    /// other layout is converted to RGB.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let img = image::open(path).map_err(|e| PipelineError::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_dynamic(img)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PipelineError> {
        let img = image::load_from_memory(bytes).map_err(|e| PipelineError::Raster(e.to_string()))?;
        Self::from_dynamic(img)
    }

    pub fn to_png(&self) -> Result<Vec<u8>, PipelineError> {
        let mut out = Cursor::new(Vec::new());
        self.to_dynamic()
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| PipelineError::Raster(e.to_string()))?;
        Ok(out.into_inner())
    }

    /// Writes PNG, creating parent directories.
    pub fn save_png(&self, path: &Path) -> Result<(), PipelineError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(super::io_err(parent))?;
        }
        std::fs::write(path, self.to_png()?).map_err(super::io_err(path))
    }
}
