//! The `herdpipe` command line: one subcommand per pipeline stage, a shared
//! TOML config and an optional JSON summary on stdout.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::schema::{self, WireSchema};

pub use config::{AnnotateSection, CliConfig, DistillSection, EvalSection};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "herdpipe", version, about = "Video-to-detector dataset pipeline")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "HERDPIPE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Print a machine-readable summary on stdout instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample every n-th frame of a video (or image sequence) into the train split.
    ExtractFrames(ExtractArgs),
    /// Label a dataset with the teacher and, optionally, the segmenter.
    Annotate(AnnotateArgs),
    /// Convert annotations between coco-json, voc-xml, yolo-txt and csv.
    Convert(ConvertArgs),
    /// Assign images to train/valid/test.
    Split(SplitArgs),
    /// Add augmented copies of the train images.
    Augment(RootArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Train a student model through the trainer backend.
    Distill(DistillArgs),
    /// Compare runs, select the best one and render tables.
    Report(ReportArgs),
    /// Time an inference backend.
    Profile(ProfileArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ExtractFrames(_) => "extract-frames",
            Command::Annotate(_) => "annotate",
            Command::Convert(_) => "convert",
            Command::Split(_) => "split",
            Command::Augment(_) => "augment",
            Command::Evaluate(_) => "evaluate",
            Command::Distill(_) => "distill",
            Command::Report(_) => "report",
            Command::Profile(_) => "profile",
        }
    }
}

#[derive(Debug, Args)]
pub struct RootArgs {
    /// Dataset root (overrides `dataset_root`).
    #[arg(long)]
    pub root: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Video file or directory of frame images.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub root: RootArgs,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Frame name prefix; defaults to the input's file stem.
    #[arg(long)]
    pub video_id: Option<String>,
    /// Class names for a new manifest.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
    /// Write frames as decoded, without brightness, contrast and denoising.
    #[arg(long)]
    pub no_preprocess: bool,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[command(flatten)]
    pub root: RootArgs,
    /// One prompt per class, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub prompts: Vec<String>,
    #[arg(long)]
    pub box_threshold: Option<f64>,
    #[arg(long)]
    pub text_threshold: Option<f64>,
    /// Teacher endpoint (overrides `teacher.endpoint`).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Skip segmentation even when a segmenter is configured.
    #[arg(long)]
    pub no_segment: bool,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Input format; guessed from the path when omitted.
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Output format.
    #[arg(long, alias = "to")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub root: RootArgs,
    /// train,valid,test
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground truth: a manifest.json, a dataset directory or an annotation file.
    #[arg(long)]
    pub gt: PathBuf,
    /// Predictions: COCO JSON with scores or CSV with a confidence column.
    #[arg(long)]
    pub pred: PathBuf,
    /// Write the class-mean confidence curves as CSV.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Write every class's confidence curves as `<dir>/<class>.csv`.
    #[arg(long)]
    pub curves_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub root: RootArgs,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub size: Option<u32>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Trainer endpoint (overrides `trainer.endpoint`).
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run results: results CSV files, run JSON files or directories of them.
    #[arg(long, required = true, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    /// Size and speed CSV joined onto the runs.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// max-ap, max-ap50, max-recall or balanced.
    #[arg(long, default_value = "max-ap")]
    pub select: String,
    /// Write the sorted comparison as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Confusion table to render alongside.
    #[arg(long)]
    pub confusion: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Probe images sent to the backend, cycled.
    #[arg(long, required = true, num_args = 1..)]
    pub probe: Vec<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Inference endpoint (overrides `trainer.endpoint`).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Run JSON to attach the profile to.
    #[arg(long)]
    pub run: Option<PathBuf>,
}

/// What a subcommand hands back for printing.
#[derive(Debug)]
pub(crate) struct Outcome {
    pub result: Value,
    pub text: String,
    pub errors: Vec<String>,
    pub exit_code: i32,
    pub seed: Option<u64>,
}

impl Outcome {
    pub fn ok(result: impl Serialize, text: String) -> anyhow::Result<Self> {
        Ok(Self {
            result: serde_json::to_value(result)?,
            text,
            errors: Vec::new(),
            exit_code: EXIT_OK,
            seed: None,
        })
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: &'static str,
    pub status: &'static str,
    pub exit_code: i32,
    pub seed: Option<u64>,
    pub result: Value,
    pub errors: Vec<String>,
}

fn status_of(code: i32) -> &'static str {
    match code {
        EXIT_OK => "ok",
        EXIT_PARTIAL => "partial",
        _ => "error",
    }
}

fn emit(json: bool, summary: &Summary, text: &str) {
    if json {
        let value = serde_json::to_value(summary).unwrap_or(Value::Null);
        if let Err(e) = schema::validate(WireSchema::CliSummary, &value) {
            eprintln!("warning: summary does not match its schema: {e}");
        }
        println!("{}", serde_json::to_string_pretty(&value).unwrap_or_default());
    } else if !text.is_empty() {
        print!("{text}");
        if !text.ends_with('\n') {
            println!();
        }
    }
    for e in &summary.errors {
        eprintln!("error: {e}");
    }
}

/// The error and its causes joined with `: `, skipping causes whose text
/// already appears earlier in the message.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !out.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
    }
    out
}

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// process exit code.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let name = cli.command.name();
    let json = cli.json;
    let (summary, text) = match commands::dispatch(cli) {
        Ok(out) => (
            Summary {
                command: name,
                status: status_of(out.exit_code),
                exit_code: out.exit_code,
                seed: out.seed,
                result: out.result,
                errors: out.errors,
            },
            out.text,
        ),
        Err(e) => (
            Summary {
                command: name,
                status: "error",
                exit_code: EXIT_ERROR,
                seed: None,
                result: Value::Null,
                errors: vec![describe(&e)],
            },
            String::new(),
        ),
    };
    emit(json, &summary, &text);
    summary.exit_code
}

pub fn run() -> i32 {
    run_with(std::env::args_os())
}
