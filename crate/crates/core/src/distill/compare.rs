use std::cmp::Ordering;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{display_model, DistillError, ModelProfile, RunRecord};

/// One finished run reduced to its final-epoch figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    /// Lower-case variant, e.g. `yolov8s`.
    pub model: String,
    pub epochs: usize,
    pub image_size: u32,
    pub ap: f64,
    pub recall: f64,
    pub ap50: f64,
    pub ap50_95: f64,
    pub val_box_loss: f64,
    pub val_cls_loss: f64,
    pub val_dfl_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ModelProfile>,
}

/// `yolov8s`, 50, 1024 -> `yolov8s-e50-s1024`.
pub fn run_id_for(model: &str, epochs: usize, image_size: u32) -> String {
    format!("{}-e{epochs}-s{image_size}", model.to_ascii_lowercase())
}

impl RunSummary {
    /// `None` when the run produced no epochs.
    pub fn from_record(rec: &RunRecord) -> Option<Self> {
        let last = rec.final_epoch()?;
        Some(Self {
            run_id: rec.run_id.clone(),
            model: rec.hyperparams.model_variant.to_ascii_lowercase(),
            epochs: last.epoch,
            image_size: rec.hyperparams.image_size,
            ap: last.ap,
            recall: last.recall,
            ap50: last.ap50,
            ap50_95: last.ap50_95,
            val_box_loss: last.val_box_loss,
            val_cls_loss: last.val_cls_loss,
            val_dfl_loss: last.val_dfl_loss,
            profile: rec.profile.clone(),
        })
    }
}

#[derive(Debug, Deserialize)]
struct RunRow {
    model: String,
    epoch: usize,
    size: u32,
    ap: f64,
    recall: f64,
    ap50: f64,
    ap50_95: f64,
    box_loss: f64,
    cls_loss: f64,
    dfl_loss: f64,
}

#[derive(Debug, Deserialize)]
struct ProfileRow {
    model: String,
    epoch: usize,
    size: u32,
    layers: u64,
    params_m: f64,
    flops_g: f64,
    weight_mb: f64,
    fps: f64,
    latency_ms: f64,
    ap: f64,
}

fn rows<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, DistillError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| DistillError::Table {
                line: e.position().map_or(i + 2, |p| p.line() as usize),
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Reads final-epoch results from CSV with columns
/// `model,epoch,size,ap,recall,ap50,ap50_95,box_loss,cls_loss,dfl_loss`
/// (losses are validation losses). Run ids are derived from the key.
pub fn load_runs_csv(text: &str) -> Result<Vec<RunSummary>, DistillError> {
    let rows: Vec<RunRow> = rows(text)?;
    let mut out: Vec<RunSummary> = Vec::with_capacity(rows.len());
    for (i, r) in rows.into_iter().enumerate() {
        let run_id = run_id_for(&r.model, r.epoch, r.size);
        if out.iter().any(|s| s.run_id == run_id) {
            return Err(DistillError::Table {
                line: i + 2,
                reason: format!("duplicate run {run_id}"),
            });
        }
        for (name, v) in [
            ("ap", r.ap),
            ("recall", r.recall),
            ("ap50", r.ap50),
            ("ap50_95", r.ap50_95),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DistillError::Table {
                    line: i + 2,
                    reason: format!("{name} = {v} lies outside [0, 1]"),
                });
            }
        }
        out.push(RunSummary {
            run_id,
            model: r.model.to_ascii_lowercase(),
            epochs: r.epoch,
            image_size: r.size,
            ap: r.ap,
            recall: r.recall,
            ap50: r.ap50,
            ap50_95: r.ap50_95,
            val_box_loss: r.box_loss,
            val_cls_loss: r.cls_loss,
            val_dfl_loss: r.dfl_loss,
            profile: None,
        });
    }
    Ok(out)
}

/// Attaches profiles from CSV with columns
/// `model,epoch,size,layers,params_m,flops_g,weight_mb,fps,latency_ms,ap`.
/// Every row must match exactly one run.
pub fn join_profiles_csv(runs: &mut [RunSummary], text: &str) -> Result<(), DistillError> {
    let rows: Vec<ProfileRow> = rows(text)?;
    for (i, r) in rows.into_iter().enumerate() {
        let id = run_id_for(&r.model, r.epoch, r.size);
        let run = runs
            .iter_mut()
            .find(|s| s.run_id == id)
            .ok_or_else(|| DistillError::Table {
                line: i + 2,
                reason: format!("no run matches {id}"),
            })?;
        run.profile = Some(ModelProfile {
            layers: r.layers,
            params: (r.params_m * 1e6).round() as u64,
            flops: r.flops_g * 1e9,
            weight_bytes: (r.weight_mb * 1e6).round() as u64,
            fps: Some(r.fps),
            latency_ms: Some(r.latency_ms),
            ap: Some(r.ap),
        });
    }
    Ok(())
}

fn by_ap_then_id(a: &RunSummary, b: &RunSummary) -> Ordering {
    b.ap.total_cmp(&a.ap).then_with(|| a.run_id.cmp(&b.run_id))
}

/// Orders runs by AP, best first; equal AP falls back to run id.
pub fn compare_runs(runs: &[RunSummary]) -> Vec<RunSummary> {
    let mut out = runs.to_vec();
    out.sort_by(by_ap_then_id);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    MaxAp,
    MaxAp50,
    MaxRecall,
    /// Product of min-max normalized AP, fps and (1 - FLOPs).
    Balanced,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::MaxAp,
        Criterion::MaxAp50,
        Criterion::MaxRecall,
        Criterion::Balanced,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::MaxAp => "max-ap",
            Criterion::MaxAp50 => "max-ap50",
            Criterion::MaxRecall => "max-recall",
            Criterion::Balanced => "balanced",
        }
    }
}

impl FromStr for Criterion {
    type Err = DistillError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| {
            DistillError::Config(format!(
                "unknown criterion `{s}`; expected max-ap, max-ap50, max-recall or balanced"
            ))
        })
    }
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![1.0; values.len()]
    }
}

/// Scores used by `select_best`, in input order.
pub fn criterion_scores(runs: &[RunSummary], criterion: Criterion) -> Result<Vec<f64>, DistillError> {
    Ok(match criterion {
        Criterion::MaxAp => runs.iter().map(|r| r.ap).collect(),
        Criterion::MaxAp50 => runs.iter().map(|r| r.ap50).collect(),
        Criterion::MaxRecall => runs.iter().map(|r| r.recall).collect(),
        Criterion::Balanced => {
            let mut ap = Vec::with_capacity(runs.len());
            let mut fps = Vec::with_capacity(runs.len());
            let mut flops = Vec::with_capacity(runs.len());
            for r in runs {
                let p = r.profile.as_ref().and_then(|p| Some((p.fps?, p.flops)));
                let Some((f, fl)) = p else {
                    return Err(DistillError::Precondition(format!(
                        "run {} has no measured fps; profile it before balanced selection",
                        r.run_id
                    )));
                };
                ap.push(r.ap);
                fps.push(f);
                flops.push(fl);
            }
            let (ap, fps, flops) = (min_max(&ap), min_max(&fps), min_max(&flops));
            (0..runs.len()).map(|i| ap[i] * fps[i] * (1.0 - flops[i])).collect()
        }
    })
}

/// The run scoring highest under `criterion`; ties go to the smaller run id.
pub fn select_best(runs: &[RunSummary], criterion: Criterion) -> Result<&RunSummary, DistillError> {
    if runs.is_empty() {
        return Err(DistillError::Precondition("no runs to select from".into()));
    }
    let scores = criterion_scores(runs, criterion)?;
    let best = (0..runs.len())
        .min_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| runs[a].run_id.cmp(&runs[b].run_id))
        })
        .unwrap_or(0);
    Ok(&runs[best])
}

fn trim(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn grid(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            rows.iter()
                .map(|r| r[i].len())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        for (i, c) in cells.iter().enumerate() {
            let w = widths[i];
            if i == 0 {
                let _ = write!(out, "{c:<w$}");
            } else {
                let _ = write!(out, "  {c:>w$}");
            }
        }
        out.push('\n');
    };
    line(header.to_vec());
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
    out
}

/// Text table of final-epoch results, in the given order.
pub fn render_comparison(runs: &[RunSummary]) -> String {
    let header = [
        "Run", "Model", "Epoch", "Size", "AP", "Recall", "AP50", "AP50-95", "BoxLoss", "ClsLoss", "DflLoss",
    ];
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.run_id.clone(),
                display_model(&r.model),
                r.epochs.to_string(),
                r.image_size.to_string(),
                trim(r.ap, 5),
                trim(r.recall, 5),
                trim(r.ap50, 5),
                trim(r.ap50_95, 5),
                trim(r.val_box_loss, 7),
                trim(r.val_cls_loss, 7),
                trim(r.val_dfl_loss, 7),
            ]
        })
        .collect();
    grid(&header, &rows)
}

/// The same figures as `load_runs_csv` reads, so the output loads back.
pub fn summaries_csv(runs: &[RunSummary]) -> String {
    let mut out = String::from("model,epoch,size,ap,recall,ap50,ap50_95,box_loss,cls_loss,dfl_loss\n");
    for r in runs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            display_model(&r.model),
            r.epochs,
            r.image_size,
            r.ap,
            r.recall,
            r.ap50,
            r.ap50_95,
            r.val_box_loss,
            r.val_cls_loss,
            r.val_dfl_loss
        );
    }
    out
}

/// Size and speed table. Runs without a profile show `-`.
pub fn render_profiles(runs: &[RunSummary]) -> String {
    let header = [
        "Model", "Epoch", "Size", "Layers", "Params", "FLOPs", "Weight", "FPS", "ms", "AP",
    ];
    let dash = || "-".to_string();
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            let mut row = vec![display_model(&r.model), r.epochs.to_string(), r.image_size.to_string()];
            match &r.profile {
                Some(p) => row.extend([
                    p.layers.to_string(),
                    format!("{:.1}M", p.params as f64 / 1e6),
                    format!("{:.1}G", p.flops / 1e9),
                    format!("{:.1}Mb", p.weight_bytes as f64 / 1e6),
                    p.fps.map_or_else(dash, |v| format!("{v:.0}")),
                    p.latency_ms.map_or_else(dash, |v| format!("{v:.1}")),
                    trim(p.ap.unwrap_or(r.ap), 5),
                ]),
                None => {
                    row.extend(std::iter::repeat_with(dash).take(6));
                    row.push(trim(r.ap, 5));
                }
            }
            row
        })
        .collect();
    grid(&header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUNS: &str = "model,epoch,size,ap,recall,ap50,ap50_95,box_loss,cls_loss,dfl_loss\n\
        YOLOv8s,25,512,0.5,0.9,0.6,0.4,1,1,1\n\
        YOLOv8n,25,512,0.7,0.1,0.6,0.4,1,1,1\n";

    #[test]
    fn ordering_and_selection() {
        let runs = load_runs_csv(RUNS).unwrap();
        assert_eq!(runs[0].run_id, "yolov8s-e25-s512");
        assert_eq!(compare_runs(&runs)[0].run_id, "yolov8n-e25-s512");
        assert_eq!(
            select_best(&runs, Criterion::MaxRecall).unwrap().run_id,
            "yolov8s-e25-s512"
        );
        // equal ap50: smaller id wins
        assert_eq!(
            select_best(&runs, Criterion::MaxAp50).unwrap().run_id,
            "yolov8n-e25-s512"
        );
        assert!(matches!(
            select_best(&runs, Criterion::Balanced),
            Err(DistillError::Precondition(_))
        ));
        assert!(select_best(&[], Criterion::MaxAp).is_err());
        assert_eq!(load_runs_csv(&summaries_csv(&runs)).unwrap(), runs);
    }

    #[test]
    fn bad_rows_report_line() {
        let bad = format!("{RUNS}YOLOv8m,25,512,1.5,0.1,0.6,0.4,1,1,1\n");
        assert!(matches!(load_runs_csv(&bad), Err(DistillError::Table { line: 4, .. })));
        let dup = format!("{RUNS}YOLOv8n,25,512,0.5,0.1,0.6,0.4,1,1,1\n");
        assert!(matches!(load_runs_csv(&dup), Err(DistillError::Table { line: 4, .. })));
    }

    #[test]
    fn balanced_normalizes_each_column() {
        let mut runs = load_runs_csv(RUNS).unwrap();
        let profiles = "model,epoch,size,layers,params_m,flops_g,weight_mb,fps,latency_ms,ap\n\
            YOLOv8s,25,512,168,11.1,28.4,21.4,370,1.5,0.5\n\
            YOLOv8n,25,512,168,3.0,8.1,5.9,370,1.4,0.7\n";
        join_profiles_csv(&mut runs, profiles).unwrap();
        // equal fps normalizes to 1; v8s has max flops and min ap so scores 0
        let s = criterion_scores(&runs, Criterion::Balanced).unwrap();
        assert_eq!(s, vec![0.0, 1.0]);
        let text = render_profiles(&runs);
        assert!(text.contains("11.1M") && text.contains("28.4G") && text.contains("21.4Mb"));
        assert!(join_profiles_csv(
            &mut runs,
            "model,epoch,size,layers,params_m,flops_g,weight_mb,fps,latency_ms,ap\nYOLOv9,1,1,1,1,1,1,1,1,1\n"
        )
        .is_err());
    }

    #[test]
    fn criterion_names() {
        for c in Criterion::ALL {
            assert_eq!(c.as_str().parse::<Criterion>().unwrap(), c);
        }
        assert!("fastest".parse::<Criterion>().is_err());
    }
}
