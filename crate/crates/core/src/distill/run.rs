use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::records::check_epoch;
use super::{Diagnostic, DiagnosticKind, DistillError, Hyperparams, RunRecord, RunStatus, Trainer};
use crate::backend::with_retries;
use crate::formats::{read_yolo_layout, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Pause between epoch polls that brought nothing new.
    pub poll_interval: Duration,
    /// Give up when no new epoch arrives for this long.
    pub stall_timeout: Duration,
    pub retries: u32,
    pub backoff_base: Duration,
    /// Where `<run_id>.json` is written, if anywhere.
    pub runs_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            poll_interval: Duration::from_secs(5),
            stall_timeout: Duration::from_secs(6 * 3600),
            retries: 2,
            backoff_base: Duration::from_millis(500),
            runs_dir: None,
        }
    }
}

fn fail(record: &mut RunRecord, d: Diagnostic) {
    record.status = RunStatus::Failed;
    record.diagnostics.push(d);
}

/// Trains a student on the YOLO-layout dataset at `dataset_root`.
///
/// Epoch records stream in from the trainer and are checked as they arrive:
/// indices must run 1, 2, 3, ... without gaps, losses must be finite and
/// metrics must lie in [0, 1]. The first violation stops ingestion and marks
/// the run failed; the records accepted so far are kept. Only precondition
/// problems are returned as `Err`.
pub fn run_distillation(
    dataset_root: &Path,
    hp: &Hyperparams,
    trainer: &dyn Trainer,
    opts: &RunOptions,
) -> Result<RunRecord, DistillError> {
    hp.validate()?;
    let dataset = read_yolo_layout(dataset_root)?;
    let train_images = dataset.manifest.split_records(Split::Train).count();
    if train_images == 0 {
        return Err(DistillError::Precondition(format!(
            "{} has no train images",
            dataset_root.display()
        )));
    }
    let dataset_path = std::fs::canonicalize(dataset_root)
        .unwrap_or_else(|_| dataset_root.to_path_buf())
        .to_string_lossy()
        .into_owned();
    let run_id = with_retries(opts.retries, opts.backoff_base, || trainer.start(&dataset_path, hp))?;

    let mut record = RunRecord {
        run_id: run_id.clone(),
        model_family: hp.family(),
        dataset_path,
        hyperparams: hp.clone(),
        train_images,
        batches_per_epoch: hp.batches_per_epoch(train_images),
        status: RunStatus::Completed,
        epochs: Vec::with_capacity(hp.num_epochs),
        diagnostics: Vec::new(),
        checkpoint: None,
        profile: None,
    };

    let mut last_progress = Instant::now();
    'poll: while record.epochs.len() < hp.num_epochs {
        let next = record.epochs.len() + 1;
        let batch = match with_retries(opts.retries, opts.backoff_base, || trainer.epochs(&run_id, next)) {
            Ok(b) => b,
            Err(e) => {
                fail(
                    &mut record,
                    Diagnostic {
                        kind: DiagnosticKind::Backend,
                        epoch: Some(next),
                        message: e.to_string(),
                    },
                );
                break;
            }
        };
        if batch.is_empty() {
            if last_progress.elapsed() >= opts.stall_timeout {
                fail(
                    &mut record,
                    Diagnostic {
                        kind: DiagnosticKind::MissingEpochs,
                        epoch: Some(next),
                        message: format!(
                            "no record for epoch {next} within {:?}; received {} of {}",
                            opts.stall_timeout,
                            next - 1,
                            hp.num_epochs
                        ),
                    },
                );
                break;
            }
            std::thread::sleep(opts.poll_interval);
            continue;
        }
        last_progress = Instant::now();
        for rec in batch {
            let expected = record.epochs.len() + 1;
            if let Err(d) = check_epoch(&rec, expected, hp.num_epochs) {
                fail(&mut record, d);
                break 'poll;
            }
            record.epochs.push(rec);
        }
    }

    if let Some(dir) = &opts.runs_dir {
        record.save(dir)?;
    }
    Ok(record)
}
