use serde::{Deserialize, Serialize};

use super::DistillError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    /// Student variant, e.g. `yolov8s`.
    pub model_variant: String,
    pub num_epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lrf: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub optimizer: String,
    /// Square input size in pixels.
    pub image_size: u32,
}

/// The model family of a variant: `yolov8s` -> `yolov8`.
pub fn model_family(variant: &str) -> String {
    let lower = variant.to_ascii_lowercase();
    match lower.strip_prefix("yolov") {
        Some(rest) => {
            let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
            format!("yolov{digits}")
        }
        None => lower,
    }
}

/// `yolov8s` -> `YOLOv8s`.
pub fn display_model(variant: &str) -> String {
    match variant.to_ascii_lowercase().strip_prefix("yolov") {
        Some(rest) => format!("YOLOv{rest}"),
        None => variant.to_string(),
    }
}

impl Hyperparams {
    /// Per-family defaults: batch 16, SGD, lr0 0.01, momentum 0.937.
    pub fn preset(variant: &str, num_epochs: usize, image_size: u32) -> Result<Self, DistillError> {
        let (lrf, weight_decay) = match model_family(variant).as_str() {
            "yolov8" => (0.01, 0.001),
            "yolov7" => (0.1, 0.0005),
            "yolov5" => (0.01, 0.0005),
            other => {
                return Err(DistillError::Config(format!(
                    "no preset for model family `{other}`; give every hyperparameter explicitly"
                )))
            }
        };
        let hp = Self {
            model_variant: variant.to_ascii_lowercase(),
            num_epochs,
            batch_size: 16,
            lr0: 0.01,
            lrf,
            momentum: 0.937,
            weight_decay,
            optimizer: "SGD".into(),
            image_size,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn family(&self) -> String {
        model_family(&self.model_variant)
    }

    pub fn validate(&self) -> Result<(), DistillError> {
        let fail = |m: String| Err(DistillError::Config(m));
        if self.model_variant.is_empty() || self.optimizer.is_empty() {
            return fail("model_variant and optimizer must be named".into());
        }
        if self.num_epochs == 0 || self.batch_size == 0 {
            return fail("num_epochs and batch_size must be at least 1".into());
        }
        if !(self.lr0 > 0.0 && self.lrf > 0.0) {
            return fail(format!("lr0 ({}) and lrf ({}) must be positive", self.lr0, self.lrf));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return fail(format!("weight_decay {} is negative", self.weight_decay));
        }
        if self.image_size < 32 {
            return fail(format!("image_size {} is below 32", self.image_size));
        }
        Ok(())
    }

    /// Mini-batches needed to cover `train_images` once.
    pub fn batches_per_epoch(&self, train_images: usize) -> usize {
        train_images.div_ceil(self.batch_size)
    }
}
