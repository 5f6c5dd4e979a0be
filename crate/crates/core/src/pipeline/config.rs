use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::formats::Normalization;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub frame_stride: usize,
    pub brightness_factor: f64,
    pub contrast_factor: f64,
    pub normalize_mean: Vec<f64>,
    pub normalize_std: Vec<f64>,
    pub noise_kernel: usize,
    /// (train, valid, test)
    pub split_fractions: [f64; 3],
    pub crop_max_zoom: f64,
    pub grayscale_fraction: f64,
    pub outputs_per_train_image: usize,
    pub rng_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frame_stride: 10,
            brightness_factor: 1.2,
            contrast_factor: 1.5,
            normalize_mean: vec![0.5; 3],
            normalize_std: vec![0.5; 3],
            noise_kernel: 3,
            split_fractions: [0.7, 0.2, 0.1],
            crop_max_zoom: 0.35,
            grayscale_fraction: 0.2,
            outputs_per_train_image: 2,
            rng_seed: 0,
        }
    }
}

fn unit(name: &str, v: f64) -> Result<(), PipelineError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(PipelineError::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

pub(crate) fn check_fractions(f: &[f64; 3]) -> Result<(), PipelineError> {
    for (name, v) in ["train", "valid", "test"].iter().zip(f) {
        unit(&format!("{name} fraction"), *v)?;
    }
    let sum: f64 = f.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(PipelineError::Config(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.frame_stride == 0 {
            return Err(PipelineError::Config("frame_stride must be at least 1".into()));
        }
        if self.noise_kernel == 0 || self.noise_kernel.is_multiple_of(2) {
            return Err(PipelineError::Config(format!(
                "noise_kernel must be odd and positive, got {}",
                self.noise_kernel
            )));
        }
        for (name, v) in [
            ("brightness_factor", self.brightness_factor),
            ("contrast_factor", self.contrast_factor),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(PipelineError::Config(format!("{name} must be finite and ≥ 0")));
            }
        }
        if self.normalize_mean.len() != self.normalize_std.len() {
            return Err(PipelineError::Config(
                "normalize_mean and normalize_std need one entry per channel".into(),
            ));
        }
        if self.normalize_std.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(PipelineError::Config("normalize_std entries must be positive".into()));
        }
        check_fractions(&self.split_fractions)?;
        unit("crop_max_zoom", self.crop_max_zoom)?;
        if self.crop_max_zoom >= 1.0 {
            return Err(PipelineError::Config("crop_max_zoom must be below 1".into()));
        }
        unit("grayscale_fraction", self.grayscale_fraction)?;
        if self.outputs_per_train_image == 0 {
            return Err(PipelineError::Config(
                "outputs_per_train_image must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn normalization(&self) -> Normalization {
        Normalization {
            mean: self.normalize_mean.clone(),
            std: self.normalize_std.clone(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        PipelineConfig::default().validate().unwrap();
        let partial = PipelineConfig::from_toml("rng_seed = 9\nframe_stride = 5\n").unwrap();
        assert_eq!(partial.rng_seed, 9);
        assert_eq!(partial.noise_kernel, 3);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_toml("split_fractions = [0.7, 0.2, 0.2]").is_err());
        assert!(PipelineConfig::from_toml("noise_kernel = 4").is_err());
        assert!(PipelineConfig::from_toml("frame_stride = 0").is_err());
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
    }
}
