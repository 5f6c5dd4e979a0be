//! Scripted trainer runs compared against the JSON files next to this module.
//! Set `HERDPIPE_BLESS=1` to rewrite the files from the current output.
#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Duration;

use herdpipe::backend::BackendError;
use herdpipe::distill::{run_distillation, EpochRecord, Hyperparams, RunOptions, RunRecord, Trainer};
use herdpipe::formats::Split;
use serde_json::Value;

use crate::common::{ids, write_image_dataset};

/// Hands out a fixed list of epoch records; `epochs(from)` returns the
/// records from position `from - 1` on.
pub struct ScriptedTrainer {
    pub run_id: String,
    pub script: Vec<EpochRecord>,
}

impl Trainer for ScriptedTrainer {
    fn start(&self, _dataset_path: &str, _hp: &Hyperparams) -> Result<String, BackendError> {
        Ok(self.run_id.clone())
    }

    fn epochs(&self, _run_id: &str, from: usize) -> Result<Vec<EpochRecord>, BackendError> {
        Ok(self.script.iter().skip(from.saturating_sub(1)).cloned().collect())
    }
}

pub fn epoch(i: usize) -> EpochRecord {
    let t = i as f64;
    EpochRecord {
        epoch: i,
        train_box_loss: 1.5 - 0.1 * t,
        train_cls_loss: 1.25 - 0.125 * t,
        train_dfl_loss: 1.375 - 0.0625 * t,
        val_box_loss: 1.25 - 0.0625 * t,
        val_cls_loss: 1.0 - 0.125 * t,
        val_dfl_loss: 1.125 - 0.03125 * t,
        ap: 0.125 * t,
        recall: 0.1875 * t,
        ap50: 0.25 * t,
        ap50_95: 0.125 * t,
        train_loss_sum: None,
    }
}

pub struct Case {
    pub file: &'static str,
    pub epochs: &'static [usize],
    /// Epoch whose validation box loss is NaN.
    pub nan_at: Option<usize>,
}

pub const CASES: &[Case] = &[
    Case {
        file: "run_ok.json",
        epochs: &[1, 2, 3, 4],
        nan_at: None,
    },
    Case {
        file: "run_gap.json",
        epochs: &[1, 2, 4],
        nan_at: None,
    },
    Case {
        file: "run_nan.json",
        epochs: &[1, 2, 3, 4],
        nan_at: Some(3),
    },
];

pub const DATASET_PLACEHOLDER: &str = "<dataset>";

pub fn golden_path(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(file)
}

/// Runs the scripted trainer for `case` on a 20-image dataset.
pub fn run_case(case: &Case) -> Result<RunRecord, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_image_dataset(dir.path(), &ids("train_", 20), Split::Train, 2, 8);
    let script = case
        .epochs
        .iter()
        .map(|&i| {
            let mut e = epoch(i);
            if case.nan_at == Some(i) {
                e.val_box_loss = f64::NAN;
            }
            e
        })
        .collect();
    let trainer = ScriptedTrainer {
        run_id: "yolov8s-e4-s640".into(),
        script,
    };
    let hp = Hyperparams::preset("yolov8s", 4, 640).map_err(|e| e.to_string())?;
    let opts = RunOptions {
        poll_interval: Duration::from_millis(1),
        stall_timeout: Duration::from_millis(50),
        ..RunOptions::default()
    };
    let mut record = run_distillation(dir.path(), &hp, &trainer, &opts).map_err(|e| e.to_string())?;
    record.dataset_path = DATASET_PLACEHOLDER.into();
    Ok(record)
}

pub fn check_case(case: &Case) -> Result<(), String> {
    let record = run_case(case)?;
    let json = record.to_json().map_err(|e| e.to_string())?;
    let path = golden_path(case.file);
    if std::env::var_os("HERDPIPE_BLESS").is_some() {
        std::fs::write(&path, &json).map_err(|e| e.to_string())?;
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let want: Value = serde_json::from_str(&expected).map_err(|e| e.to_string())?;
    let got: Value = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    if want != got {
        return Err(format!("{} differs from the golden file:\n{json}", case.file));
    }
    let reparsed = RunRecord::from_json(&expected).map_err(|e| e.to_string())?;
    if reparsed.epochs.len() != record.epochs.len() || reparsed.status != record.status {
        return Err(format!("{} does not parse back into the same run", case.file));
    }
    Ok(())
}
