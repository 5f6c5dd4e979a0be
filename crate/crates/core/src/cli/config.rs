use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::annotate::{DEFAULT_BOX_THRESHOLD, DEFAULT_TEXT_THRESHOLD};
use crate::backend::BackendSpec;
use crate::distill::Hyperparams;
use crate::metrics::EvalConfig;
use crate::pipeline::PipelineConfig;

/// The `--config` document. Every field is optional; flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct CliConfig {
    pub dataset_root: Option<PathBuf>,
    pub classes: Vec<String>,
    /// One prompt per class, in class order. Defaults to the class names.
    pub prompts: Vec<String>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub pipeline: PipelineConfig,
    pub annotate: AnnotateSection,
    pub teacher: Option<BackendSpec>,
    pub segmenter: Option<BackendSpec>,
    pub trainer: Option<BackendSpec>,
    pub eval: EvalSection,
    pub distill: DistillSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateSection {
    pub box_threshold: f64,
    pub text_threshold: f64,
}

impl Default for AnnotateSection {
    fn default() -> Self {
        Self {
            box_threshold: DEFAULT_BOX_THRESHOLD,
            text_threshold: DEFAULT_TEXT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub iou_thresholds: Vec<f64>,
    pub confidence_steps: usize,
    /// IoU and confidence cutoffs for the confusion matrix.
    pub confusion_iou: f64,
    pub confusion_confidence: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            iou_thresholds: EvalConfig::default_sweep(),
            confidence_steps: 101,
            confusion_iou: 0.5,
            confusion_confidence: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSection {
    pub model: String,
    pub epochs: usize,
    pub image_size: u32,
    /// Full hyperparameter set; replaces the family preset when present.
    pub hyperparams: Option<Hyperparams>,
    pub poll_interval_ms: u64,
    pub stall_timeout_s: u64,
    pub runs_dir: PathBuf,
}

impl Default for DistillSection {
    fn default() -> Self {
        Self {
            model: "yolov8s".into(),
            epochs: 50,
            image_size: 1024,
            hyperparams: None,
            poll_interval_ms: 5000,
            stall_timeout_s: 6 * 3600,
            runs_dir: PathBuf::from("runs"),
        }
    }
}

impl CliConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.pipeline.validate()?;
        for (name, spec) in [
            ("teacher", &cfg.teacher),
            ("segmenter", &cfg.segmenter),
            ("trainer", &cfg.trainer),
        ] {
            if let Some(s) = spec {
                s.validate().with_context(|| format!("[{name}]"))?;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("config {}", path.display()))
    }

    /// `flag` if given, else the configured root.
    pub fn root(&self, flag: Option<&Path>) -> anyhow::Result<PathBuf> {
        match flag.map(Path::to_path_buf).or_else(|| self.dataset_root.clone()) {
            Some(p) => Ok(p),
            None => bail!("no dataset root: pass --root or set dataset_root in the config"),
        }
    }

    pub fn eval_config(&self, classes: crate::geometry::ClassSet) -> EvalConfig {
        EvalConfig::new(classes)
            .with_thresholds(self.eval.iou_thresholds.clone())
            .with_confidence_steps(self.eval.confidence_steps)
    }
}
