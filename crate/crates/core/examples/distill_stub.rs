//! Drives a training run against an in-process trainer that reports one
//! epoch per poll, then compares the finished run with two recorded ones.
//!
//! Run with `cargo run --example distill_stub`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use herdpipe::backend::BackendError;
use herdpipe::distill::{
    compare_runs, render_comparison, run_distillation, select_best, Criterion, EpochRecord, Hyperparams, RunOptions,
    RunSummary, Trainer,
};
use herdpipe::formats::{write_yolo_layout, AnnotationSource, Dataset, DatasetManifest, ManifestRecord, Split};
use herdpipe::geometry::{AnnotatedImage, ClassSet};

/// Releases one more epoch on every poll.
struct SteppingTrainer {
    polls: AtomicUsize,
    total: usize,
}

impl SteppingTrainer {
    fn record(epoch: usize) -> EpochRecord {
        let t = epoch as f64;
        EpochRecord {
            epoch,
            train_box_loss: 1.6 / t,
            train_cls_loss: 1.9 / t,
            train_dfl_loss: 1.4 / t,
            val_box_loss: 1.5 / t,
            val_cls_loss: 1.7 / t,
            val_dfl_loss: 1.3 / t,
            ap: 0.2 * t,
            recall: 0.18 * t,
            ap50: 0.22 * t,
            ap50_95: 0.15 * t,
            train_loss_sum: None,
        }
    }
}

impl Trainer for SteppingTrainer {
    fn start(&self, _dataset_path: &str, hp: &Hyperparams) -> Result<String, BackendError> {
        Ok(format!("{}-demo", hp.model_variant))
    }

    fn epochs(&self, _run_id: &str, from: usize) -> Result<Vec<EpochRecord>, BackendError> {
        let ready = (self.polls.fetch_add(1, Ordering::SeqCst) + 1).min(self.total);
        Ok((from..=ready).map(Self::record).collect())
    }
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let mut manifest = DatasetManifest::new(ClassSet::new(["camel"])?);
    let mut images = Vec::new();
    for i in 0..40 {
        let id = format!("img_{i:03}");
        let path = ManifestRecord::conventional_path(&id, Split::Train);
        images.push(AnnotatedImage::new(id.clone(), 32, 32));
        manifest.records.push(ManifestRecord::new(
            id,
            path,
            32,
            32,
            Split::Train,
            AnnotationSource::Fixture,
        ));
    }
    write_yolo_layout(dir.path(), &Dataset::new(manifest, images)?)?;

    let hp = Hyperparams::preset("yolov8n", 4, 640)?;
    let trainer = SteppingTrainer {
        polls: AtomicUsize::new(0),
        total: 4,
    };
    let opts = RunOptions {
        poll_interval: Duration::from_millis(5),
        stall_timeout: Duration::from_secs(2),
        runs_dir: Some(dir.path().join("runs")),
        ..RunOptions::default()
    };
    let record = run_distillation(dir.path(), &hp, &trainer, &opts)?;
    println!(
        "run {}: {:?} after {} epochs, {} batches per epoch",
        record.run_id,
        record.status,
        record.epochs.len(),
        record.batches_per_epoch
    );

    let mut runs: Vec<RunSummary> = RunSummary::from_record(&record).into_iter().collect();
    for (size, ap) in [(512, 0.71), (1024, 0.83)] {
        let mut other = runs[0].clone();
        other.run_id = format!("yolov8n-e4-s{size}");
        other.image_size = size;
        other.ap = ap;
        runs.push(other);
    }
    let sorted = compare_runs(&runs);
    print!("{}", render_comparison(&sorted));
    println!("best by max-ap: {}", select_best(&sorted, Criterion::MaxAp)?.run_id);
    Ok(())
}
