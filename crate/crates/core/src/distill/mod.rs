//! Student training runs driven through an external trainer, plus run
//! comparison, model selection and speed profiling.

mod compare;
mod hyperparams;
mod profile;
mod records;
mod run;
mod trainer;

use std::path::PathBuf;

use thiserror::Error;

use crate::backend::BackendError;
use crate::formats::FormatError;

pub use compare::{
    compare_runs, criterion_scores, join_profiles_csv, load_runs_csv, render_comparison, render_profiles, run_id_for,
    select_best, summaries_csv, Criterion, RunSummary,
};
pub use hyperparams::{display_model, model_family, Hyperparams};
pub use profile::profile_backend;
pub use records::{
    check_epoch, nan_as_null, Diagnostic, DiagnosticKind, EpochRecord, ModelDescription, ModelProfile, RunRecord,
    RunStatus,
};
pub use run::{run_distillation, RunOptions};
pub use trainer::{HttpTrainer, InferenceBackend, Trainer};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("config: {0}")]
    Config(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("table line {line}: {reason}")]
    Table { line: usize, reason: String },
}
