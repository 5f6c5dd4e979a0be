use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use serde_json::json;

use super::{
    AnnotateArgs, Cli, CliConfig, Command, ConvertArgs, DistillArgs, EvaluateArgs, ExtractArgs, Outcome, ProfileArgs,
    ReportArgs, RootArgs, SplitArgs, EXIT_ERROR, EXIT_PARTIAL,
};
use crate::annotate::{annotate_dataset, persist_annotations, AnnotateOptions, ImageJob};
use crate::backend::{open_backend, BackendKind, Segmenter};
use crate::distill::{
    compare_runs, join_profiles_csv, load_runs_csv, profile_backend, render_comparison, render_profiles,
    run_distillation, select_best, summaries_csv, Criterion, HttpTrainer, Hyperparams, RunOptions, RunRecord,
    RunStatus, RunSummary,
};
use crate::formats::{
    convert, detect_format, parse_coco_predictions, parse_csv_predictions, read_dataset, write_text, AnnotationSource,
    DatasetManifest, Format, ManifestRecord, Split, MANIFEST_FILE,
};
use crate::geometry::ClassSet;
use crate::metrics::{confusion_matrix, curves_csv, evaluate, render_table, LabeledTable, NormalizationMode};
use crate::pipeline::{apply_split, augment_dataset, extract_frames, split, FfmpegSource, ImageSequenceSource};

pub(crate) fn dispatch(cli: Cli) -> anyhow::Result<Outcome> {
    let mut cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    let jobs = cli.jobs.or(cfg.jobs);
    if let Some(n) = jobs {
        if n == 0 {
            bail!("--jobs must be at least 1");
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(cfg.pipeline.rng_seed);
    cfg.pipeline.rng_seed = seed;
    match cli.command {
        Command::ExtractFrames(a) => extract(&a, &cfg),
        Command::Annotate(a) => annotate(&a, &cfg, jobs),
        Command::Convert(a) => convert_cmd(&a),
        Command::Split(a) => split_cmd(&a, &cfg, seed).map(|o| o.seeded(seed)),
        Command::Augment(a) => augment(&a, &cfg).map(|o| o.seeded(seed)),
        Command::Evaluate(a) => evaluate_cmd(&a, &cfg),
        Command::Distill(a) => distill(&a, &cfg),
        Command::Report(a) => report(&a),
        Command::Profile(a) => profile(&a, &cfg),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn extract(args: &ExtractArgs, cfg: &CliConfig) -> anyhow::Result<Outcome> {
    let root = cfg.root(args.root.root.as_deref())?;
    let mut pcfg = cfg.pipeline.clone();
    if let Some(s) = args.stride {
        pcfg.frame_stride = s;
    }
    pcfg.validate()?;
    let manifest_path = root.join(MANIFEST_FILE);
    let mut manifest = if manifest_path.exists() {
        DatasetManifest::load(&manifest_path)?
    } else {
        let names = if args.classes.is_empty() {
            &cfg.classes
        } else {
            &args.classes
        };
        if names.is_empty() {
            bail!("a new dataset needs class names: pass --classes or set `classes` in the config");
        }
        DatasetManifest::new(ClassSet::new(names.iter().cloned())?)
    };
    let out_dir = root.join(Split::Train.as_str()).join("images");
    let pre = (!args.no_preprocess).then_some(&pcfg);
    let summary = if args.input.is_dir() {
        let src = ImageSequenceSource::open(&args.input, args.video_id.as_deref())?;
        extract_frames(&src, pcfg.frame_stride, &out_dir, pre)?
    } else {
        let scratch = root.join(".frames-scratch");
        let result = FfmpegSource::open(&args.input, &scratch, args.video_id.as_deref())
            .and_then(|src| extract_frames(&src, pcfg.frame_stride, &out_dir, pre));
        let _ = std::fs::remove_dir_all(&scratch);
        result?
    };
    for (id, path) in summary.image_ids.iter().zip(&summary.written) {
        let (w, h) = image::image_dimensions(path).with_context(|| format!("reading {}", path.display()))?;
        let record = ManifestRecord::new(
            id.clone(),
            ManifestRecord::conventional_path(id, Split::Train),
            w,
            h,
            Split::Train,
            AnnotationSource::Unlabeled,
        );
        match manifest.records.iter_mut().find(|r| r.image_id == *id) {
            Some(r) => *r = record,
            None => manifest.records.push(record),
        }
    }
    if pre.is_some() {
        manifest.normalization = Some(pcfg.normalization());
    }
    manifest.save(&manifest_path)?;
    let text = format!(
        "extracted {} of {} frames from {} (stride {}) into {}\n",
        summary.image_ids.len(),
        summary.frame_count,
        summary.video_id,
        summary.stride,
        out_dir.display()
    );
    Outcome::ok(
        json!({
            "video_id": summary.video_id,
            "frame_count": summary.frame_count,
            "stride": summary.stride,
            "indices": summary.indices,
            "image_ids": summary.image_ids,
            "preprocessed": pre.is_some(),
            "manifest": manifest_path,
        }),
        text,
    )
}

fn annotate(args: &AnnotateArgs, cfg: &CliConfig, jobs: Option<usize>) -> anyhow::Result<Outcome> {
    let root = cfg.root(args.root.root.as_deref())?;
    let manifest = DatasetManifest::load(&root.join(MANIFEST_FILE))?;
    let mut teacher_spec = cfg
        .teacher
        .clone()
        .ok_or_else(|| anyhow!("annotate needs a [teacher] backend in the config"))?;
    if let Some(e) = &args.endpoint {
        teacher_spec.endpoint = Some(e.clone());
    }
    let prompts = if !args.prompts.is_empty() {
        args.prompts.clone()
    } else if !cfg.prompts.is_empty() {
        cfg.prompts.clone()
    } else {
        manifest.classes.names().to_vec()
    };
    let mut opts = AnnotateOptions::from_spec(prompts, &teacher_spec);
    opts.box_threshold = args.box_threshold.unwrap_or(cfg.annotate.box_threshold);
    opts.text_threshold = args.text_threshold.unwrap_or(cfg.annotate.text_threshold);
    if let Some(j) = jobs {
        opts.max_concurrent = opts.max_concurrent.min(j);
    }
    let teacher = open_backend(&teacher_spec)?;
    let segmenter = match (&cfg.segmenter, args.no_segment) {
        (Some(spec), false) => Some(open_backend(spec)?),
        _ => None,
    };
    let image_jobs = ImageJob::from_manifest(&root, &manifest);
    let run = annotate_dataset(
        &image_jobs,
        &manifest.classes,
        teacher.as_ref(),
        segmenter.as_deref().map(|s| s as &dyn Segmenter),
        &opts,
    )?;
    let written = persist_annotations(&root, &manifest, &run)?;
    let s = &run.stats;
    let mut text = format!(
        "annotated {} of {} images: {} boxes kept, {} below threshold, {} clipped, {} outside the image\n",
        s.detected, s.images, s.boxes_kept, s.below_threshold, s.clipped, s.outside_image
    );
    if segmenter.is_some() {
        let _ = writeln!(text, "segmented {} images", s.segmented);
    }
    let errors: Vec<String> = run
        .failures
        .iter()
        .map(|f| format!("image {} failed at {:?}: {}", f.image_id, f.stage, f.error).to_lowercase())
        .collect();
    let mut out = Outcome::ok(
        json!({
            "stats": run.stats,
            "failures": run.failures,
            "files_written": written.len(),
        }),
        text,
    )?;
    if !run.is_complete() {
        out.exit_code = EXIT_PARTIAL;
        out.errors = errors;
    }
    Ok(out)
}

fn convert_cmd(args: &ConvertArgs) -> anyhow::Result<Outcome> {
    let to: Format = args.format.parse()?;
    let from = args.from.as_deref().map(str::parse::<Format>).transpose()?;
    let s = convert(&args.input, from, &args.out, to)?;
    let text = format!(
        "converted {} images ({} boxes) from {} to {}; {} masks dropped; {} files written\n",
        s.images,
        s.boxes,
        s.from,
        s.to,
        s.masks_dropped,
        s.written.len()
    );
    Outcome::ok(&s, text)
}

fn split_cmd(args: &SplitArgs, cfg: &CliConfig, seed: u64) -> anyhow::Result<Outcome> {
    let root = cfg.root(args.root.root.as_deref())?;
    let mut manifest = DatasetManifest::load(&root.join(MANIFEST_FILE))?;
    let fractions = match args.fractions.as_deref() {
        Some(&[train, valid, test]) => [train, valid, test],
        Some(v) => bail!("--fractions takes three values (train,valid,test), got {}", v.len()),
        None => cfg.pipeline.split_fractions,
    };
    let ids: Vec<String> = manifest.records.iter().map(|r| r.image_id.clone()).collect();
    let assignment = split(&ids, fractions, seed)?;
    let moved = apply_split(&root, &mut manifest, &assignment)?;
    let [train, valid, test] = assignment.counts();
    Outcome::ok(
        json!({
            "fractions": fractions,
            "train": train,
            "valid": valid,
            "test": test,
            "files_moved": moved,
        }),
        format!(
            "split {} images: train {train}, valid {valid}, test {test}\n",
            ids.len()
        ),
    )
}

fn augment(args: &RootArgs, cfg: &CliConfig) -> anyhow::Result<Outcome> {
    let root = cfg.root(args.root.as_deref())?;
    let s = augment_dataset(&root, &cfg.pipeline)?;
    let text = format!(
        "train {} -> {} images ({} grayscale sources, {} boxes dropped); valid {}, test {}, total {}\n",
        s.train_before, s.train_after, s.grayscale_sources, s.boxes_dropped, s.valid, s.test, s.total
    );
    Outcome::ok(&s, text)
}

fn evaluate_cmd(args: &EvaluateArgs, cfg: &CliConfig) -> anyhow::Result<Outcome> {
    let gt_path = if args.gt.file_name().is_some_and(|n| n == MANIFEST_FILE) {
        match args.gt.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        }
    } else {
        args.gt.clone()
    };
    let gt = read_dataset(&gt_path, detect_format(&gt_path)?)?;
    let pred_text = read(&args.pred)?;
    let preds = match args.pred.extension().and_then(|e| e.to_str()) {
        Some("json") => parse_coco_predictions(&pred_text, &gt.manifest)?,
        Some("csv") => parse_csv_predictions(&pred_text, &gt.manifest)?,
        _ => bail!("{}: predictions must be .json (COCO) or .csv", args.pred.display()),
    };
    let classes = gt.manifest.classes.clone();
    let report = evaluate(&gt.images, &preds, &cfg.eval_config(classes.clone()))?;
    let cm = confusion_matrix(
        &gt.images,
        &preds,
        &classes,
        cfg.eval.confusion_iou,
        cfg.eval.confusion_confidence,
    )?;
    let table = cm.to_table(NormalizationMode::ColumnNormalized);
    if let Some(path) = &args.curves {
        write_text(path, &curves_csv(&report, None).unwrap_or_default())?;
    }
    if let Some(dir) = &args.curves_dir {
        for (id, name) in classes.names().iter().enumerate() {
            if let Some(csv) = curves_csv(&report, Some(id)) {
                write_text(&dir.join(format!("{name}.csv")), &csv)?;
            }
        }
    }
    let mut text = render_table(&report);
    let _ = writeln!(
        text,
        "\nconfusion matrix (rows predicted, columns true, column-normalized; IoU {}, confidence {}):",
        cfg.eval.confusion_iou, cfg.eval.confusion_confidence
    );
    text.push_str(&table.render(2));
    Outcome::ok(
        json!({
            "ap": report.ap,
            "ap50": report.ap50,
            "map": report.map,
            "recall": report.recall,
            "iou_thresholds": report.iou_thresholds,
            "mean_ap_by_threshold": report.mean_ap_by_threshold,
            "per_class": report.per_class,
            "confusion": {
                "labels": table.columns,
                "counts": cm.counts,
                "normalized": table.cells,
            },
        }),
        text,
    )
}

fn distill(args: &DistillArgs, cfg: &CliConfig) -> anyhow::Result<Outcome> {
    let root = cfg.root(args.root.root.as_deref())?;
    let mut spec = cfg
        .trainer
        .clone()
        .ok_or_else(|| anyhow!("distill needs a [trainer] backend in the config"))?;
    if let Some(e) = &args.endpoint {
        spec.endpoint = Some(e.clone());
    }
    if spec.kind != BackendKind::RemoteHttp {
        bail!("the trainer must be a remote-http backend");
    }
    let endpoint = spec
        .endpoint
        .clone()
        .ok_or_else(|| anyhow!("trainer endpoint missing"))?;
    let d = &cfg.distill;
    let mut hp = match &d.hyperparams {
        Some(h) => h.clone(),
        None => Hyperparams::preset(
            args.model.as_deref().unwrap_or(&d.model),
            args.epochs.unwrap_or(d.epochs),
            args.size.unwrap_or(d.image_size),
        )?,
    };
    if let Some(m) = &args.model {
        hp.model_variant = m.to_ascii_lowercase();
    }
    if let Some(e) = args.epochs {
        hp.num_epochs = e;
    }
    if let Some(s) = args.size {
        hp.image_size = s;
    }
    if let Some(b) = args.batch {
        hp.batch_size = b;
    }
    hp.validate()?;
    let trainer = HttpTrainer::new(&endpoint, spec.timeout());
    let opts = RunOptions {
        poll_interval: Duration::from_millis(d.poll_interval_ms),
        stall_timeout: Duration::from_secs(d.stall_timeout_s),
        retries: spec.retries,
        backoff_base: Duration::from_millis(spec.backoff_base_ms),
        runs_dir: Some(args.runs_dir.clone().unwrap_or_else(|| d.runs_dir.clone())),
    };
    let record = run_distillation(&root, &hp, &trainer, &opts)?;
    let mut text = format!(
        "run {} {}: {} of {} epochs\n",
        record.run_id,
        match record.status {
            RunStatus::Completed => "completed",
            RunStatus::Failed => "failed",
        },
        record.epochs.len(),
        hp.num_epochs
    );
    if let Some(s) = RunSummary::from_record(&record) {
        text.push_str(&render_comparison(&[s]));
    }
    let mut out = Outcome::ok(&record, text)?;
    if record.status == RunStatus::Failed {
        out.exit_code = EXIT_ERROR;
        out.errors = record.diagnostics.iter().map(|d| d.message.clone()).collect();
    }
    Ok(out)
}

fn load_runs(path: &Path, out: &mut Vec<RunSummary>) -> anyhow::Result<()> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        for f in files {
            load_runs(&f, out)?;
        }
        return Ok(());
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => out.extend(load_runs_csv(&read(path)?).with_context(|| path.display().to_string())?),
        Some("json") => {
            let rec = RunRecord::load(path)?;
            if let Some(s) = RunSummary::from_record(&rec) {
                out.push(s);
            }
        }
        _ => bail!(
            "{}: expected a .csv results table, a run .json or a directory",
            path.display()
        ),
    }
    Ok(())
}

fn report(args: &ReportArgs) -> anyhow::Result<Outcome> {
    let mut runs = Vec::new();
    for p in &args.runs {
        load_runs(p, &mut runs)?;
    }
    if let Some(p) = &args.profiles {
        join_profiles_csv(&mut runs, &read(p)?).with_context(|| p.display().to_string())?;
    }
    let criterion: Criterion = args.select.parse()?;
    let sorted = compare_runs(&runs);
    let best = select_best(&sorted, criterion)?.run_id.clone();
    if let Some(p) = &args.csv {
        write_text(p, &summaries_csv(&sorted))?;
    }
    let mut text = render_comparison(&sorted);
    if sorted.iter().any(|r| r.profile.is_some()) {
        text.push('\n');
        text.push_str(&render_profiles(&sorted));
    }
    let _ = writeln!(text, "\nbest by {}: {best}", criterion.as_str());
    let confusion = match &args.confusion {
        Some(p) => {
            let table = LabeledTable::parse(&read(p)?).with_context(|| p.display().to_string())?;
            text.push('\n');
            text.push_str(&table.render(2));
            Some(json!({ "table": table, "diagonal": table.diagonal() }))
        }
        None => None,
    };
    Outcome::ok(
        json!({
            "runs": sorted,
            "best": { "criterion": criterion, "run_id": best },
            "confusion": confusion,
        }),
        text,
    )
}

fn profile(args: &ProfileArgs, cfg: &CliConfig) -> anyhow::Result<Outcome> {
    let spec = cfg.trainer.as_ref();
    let endpoint = args
        .endpoint
        .clone()
        .or_else(|| spec.and_then(|s| s.endpoint.clone()))
        .ok_or_else(|| anyhow!("profile needs --endpoint or a [trainer] endpoint"))?;
    let timeout = spec.map_or(Duration::from_secs(30), |s| s.timeout());
    let probes = args
        .probe
        .iter()
        .map(|p| std::fs::read(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut p = profile_backend(&HttpTrainer::new(&endpoint, timeout), &probes, args.trials)?;
    if let Some(path) = &args.run {
        let mut rec = RunRecord::load(path)?;
        p.ap = rec.final_epoch().map(|e| e.ap);
        rec.profile = Some(p.clone());
        write_text(path, &rec.to_json()?)?;
    }
    let text = format!(
        "layers {}, params {:.1}M, flops {:.1}G, weight {:.1}Mb, {:.0} fps, {:.1} ms median latency over {} trials\n",
        p.layers,
        p.params as f64 / 1e6,
        p.flops / 1e9,
        p.weight_bytes as f64 / 1e6,
        p.fps.unwrap_or_default(),
        p.latency_ms.unwrap_or_default(),
        args.trials
    );
    Outcome::ok(&p, text)
}
