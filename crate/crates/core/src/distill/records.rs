use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DistillError, Hyperparams};
use crate::formats::check_image_id;

/// Serializes non-finite floats as JSON `null` and reads `null` back as NaN.
pub mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// One epoch as reported by the trainer. Losses are stored verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(with = "nan_as_null")]
    pub train_box_loss: f64,
    #[serde(with = "nan_as_null")]
    pub train_cls_loss: f64,
    #[serde(with = "nan_as_null")]
    pub train_dfl_loss: f64,
    #[serde(with = "nan_as_null")]
    pub val_box_loss: f64,
    #[serde(with = "nan_as_null")]
    pub val_cls_loss: f64,
    #[serde(with = "nan_as_null")]
    pub val_dfl_loss: f64,
    #[serde(with = "nan_as_null")]
    pub ap: f64,
    #[serde(with = "nan_as_null")]
    pub recall: f64,
    #[serde(with = "nan_as_null")]
    pub ap50: f64,
    #[serde(with = "nan_as_null")]
    pub ap50_95: f64,
    /// Sum of the per-batch training losses over the epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_loss_sum: Option<f64>,
}

impl EpochRecord {
    pub fn losses(&self) -> [(&'static str, f64); 6] {
        [
            ("train_box_loss", self.train_box_loss),
            ("train_cls_loss", self.train_cls_loss),
            ("train_dfl_loss", self.train_dfl_loss),
            ("val_box_loss", self.val_box_loss),
            ("val_cls_loss", self.val_cls_loss),
            ("val_dfl_loss", self.val_dfl_loss),
        ]
    }

    pub fn metrics(&self) -> [(&'static str, f64); 4] {
        [
            ("ap", self.ap),
            ("recall", self.recall),
            ("ap50", self.ap50),
            ("ap50_95", self.ap50_95),
        ]
    }
}

/// Static model figures as reported by the backend, plus measured speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub layers: u64,
    pub params: u64,
    pub flops: f64,
    pub weight_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap: Option<f64>,
}

/// `/v1/model/describe` reply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelDescription {
    pub layers: u64,
    pub params: u64,
    pub flops: f64,
    pub weight_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    EpochGap,
    DuplicateEpoch,
    ExtraEpoch,
    NanLoss,
    MetricOutOfRange,
    MissingEpochs,
    Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub model_family: String,
    pub dataset_path: String,
    pub hyperparams: Hyperparams,
    pub train_images: usize,
    pub batches_per_epoch: usize,
    pub status: RunStatus,
    pub epochs: Vec<EpochRecord>,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ModelProfile>,
}

impl RunRecord {
    pub fn final_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn to_json(&self) -> Result<String, DistillError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, DistillError> {
        Ok(serde_json::from_str(text)?)
    }

    /// `<runs_dir>/<run_id>.json`
    pub fn save(&self, runs_dir: &Path) -> Result<std::path::PathBuf, DistillError> {
        check_image_id(&self.run_id)
            .map_err(|_| DistillError::Config(format!("run id `{}` is not a safe file name", self.run_id)))?;
        let path = runs_dir.join(format!("{}.json", self.run_id));
        crate::formats::write_text(&path, &self.to_json()?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, DistillError> {
        let text = std::fs::read_to_string(path).map_err(|source| DistillError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Checks one incoming record against the epoch the run expects next.
pub fn check_epoch(rec: &EpochRecord, expected: usize, num_epochs: usize) -> Result<(), Diagnostic> {
    if rec.epoch != expected {
        let (kind, message) = if rec.epoch < expected {
            (
                DiagnosticKind::DuplicateEpoch,
                format!("epoch {} arrived again; expected epoch {expected}", rec.epoch),
            )
        } else {
            (
                DiagnosticKind::EpochGap,
                format!("expected epoch {expected}, trainer sent epoch {}", rec.epoch),
            )
        };
        return Err(Diagnostic {
            kind,
            epoch: Some(expected),
            message,
        });
    }
    if rec.epoch > num_epochs {
        return Err(Diagnostic {
            kind: DiagnosticKind::ExtraEpoch,
            epoch: Some(rec.epoch),
            message: format!("epoch {} exceeds num_epochs {num_epochs}", rec.epoch),
        });
    }
    if let Some((name, v)) = rec.losses().into_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Diagnostic {
            kind: DiagnosticKind::NanLoss,
            epoch: Some(rec.epoch),
            message: format!("epoch {}: {name} is {v}", rec.epoch),
        });
    }
    if let Some((name, v)) = rec.metrics().into_iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
        return Err(Diagnostic {
            kind: DiagnosticKind::MetricOutOfRange,
            epoch: Some(rec.epoch),
            message: format!("epoch {}: {name} = {v} lies outside [0, 1]", rec.epoch),
        });
    }
    Ok(())
}
