use super::{PipelineConfig, PipelineError, RasterImage};

fn map_samples(img: &RasterImage, f: impl Fn(f64) -> f64) -> RasterImage {
    let mut out = img.clone();
    for s in out.data_mut() {
        *s = f(f64::from(*s)).round().clamp(0.0, 255.0) as u8;
    }
    out
}

pub fn adjust_brightness(img: &RasterImage, factor: f64) -> RasterImage {
    map_samples(img, |s| s * factor)
}

/// Scales each sample's distance from mid-gray (128).
pub fn adjust_contrast(img: &RasterImage, factor: f64) -> RasterImage {
    map_samples(img, |s| (s - 128.0) * factor + 128.0)
}

/// `kernel`x`kernel` mean filter with edge-replicate padding, per channel.
pub fn box_blur(img: &RasterImage, kernel: usize) -> Result<RasterImage, PipelineError> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(PipelineError::Config(format!("kernel must be odd, got {kernel}")));
    }
    if kernel == 1 {
        return Ok(img.clone());
    }
    let r = (kernel / 2) as i64;
    let (w, h, c) = (img.width() as i64, img.height() as i64, img.channels() as usize);
    let area = (kernel * kernel) as f64;
    let src = img.data();
    let mut out = img.clone();
    let dst = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut sum = 0u32;
                for dy in -r..=r {
                    let yy = (y + dy).clamp(0, h - 1);
                    for dx in -r..=r {
                        let xx = (x + dx).clamp(0, w - 1);
                        sum += u32::from(src[((yy * w + xx) as usize) * c + ch]);
                    }
                }
                dst[((y * w + x) as usize) * c + ch] = (f64::from(sum) / area).round() as u8;
            }
        }
    }
    Ok(out)
}

/// Brightness, then contrast, then noise reduction. Normalization is not
/// applied to pixels; it is recorded in the manifest for the trainer.
pub fn preprocess(img: &RasterImage, cfg: &PipelineConfig) -> Result<RasterImage, PipelineError> {
    let bright = adjust_brightness(img, cfg.brightness_factor);
    let contrast = adjust_contrast(&bright, cfg.contrast_factor);
    box_blur(&contrast, cfg.noise_kernel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_mid_gray() {
        let cfg = PipelineConfig::default();
        let img = RasterImage::filled(5, 4, 3, 128).unwrap();
        let b = adjust_brightness(&img, 1.2);
        assert!(b.data().iter().all(|&s| s == 154));
        let c = adjust_contrast(&b, 1.5);
        assert!(c.data().iter().all(|&s| s == 167));
        let out = preprocess(&img, &cfg).unwrap();
        assert!(out.data().iter().all(|&s| s == 167));
    }

    #[test]
    fn black_is_fixed() {
        let img = RasterImage::filled(3, 3, 1, 0).unwrap();
        let out = preprocess(&img, &PipelineConfig::default()).unwrap();
        assert!(out.data().iter().all(|&s| s == 0));
    }

    #[test]
    fn single_white_pixel_spreads() {
        let mut img = RasterImage::filled(5, 5, 1, 0).unwrap();
        img.pixel_mut(2, 2)[0] = 255;
        let out = box_blur(&img, 3).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                let near = (1..=3).contains(&x) && (1..=3).contains(&y);
                assert_eq!(out.pixel(x, y)[0], if near { 28 } else { 0 }, "({x},{y})");
            }
        }
    }

    #[test]
    fn edge_replication() {
        // 1x3 strip: replicate-padded rows give column means of 3 identical rows
        let img = RasterImage::new(3, 1, 1, vec![0, 90, 180]).unwrap();
        let out = box_blur(&img, 3).unwrap();
        // left: (0+0+90)/3 = 30, mid: 90, right: (90+180+180)/3 = 150
        assert_eq!(out.data(), &[30, 90, 150]);
    }
}
