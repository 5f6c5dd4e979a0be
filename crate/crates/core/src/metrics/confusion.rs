use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ImageIndex, MetricsError};
use crate::geometry::{AnnotatedImage, ClassSet, Detection, ImagePredictions};
use crate::matching::{check_threshold, match_class_agnostic, DetectionVerdict, GroundTruthVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    Raw,
    ColumnNormalized,
}

/// Counts indexed `[predicted][true]` over the classes plus a trailing
/// background row/column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

pub const BACKGROUND: &str = "background";

impl ConfusionMatrix {
    pub fn zeros(classes: &ClassSet) -> Self {
        let n = classes.len() + 1;
        Self {
            classes: classes.names().to_vec(),
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn background(&self) -> usize {
        self.classes.len()
    }

    pub fn get(&self, predicted: usize, truth: usize) -> u64 {
        self.counts[predicted][truth]
    }

    pub fn column_sum(&self, truth: usize) -> u64 {
        self.counts.iter().map(|row| row[truth]).sum()
    }

    /// Each column divided by its sum; columns without support stay zero.
    pub fn column_normalized(&self) -> Vec<Vec<f64>> {
        let n = self.counts.len();
        let sums: Vec<u64> = (0..n).map(|c| self.column_sum(c)).collect();
        self.counts
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&sums)
                    .map(|(&v, &s)| if s == 0 { 0.0 } else { v as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }

    pub fn to_table(&self, mode: NormalizationMode) -> LabeledTable {
        let mut labels = self.classes.clone();
        labels.push(BACKGROUND.to_string());
        let cells = match mode {
            NormalizationMode::Raw => self
                .counts
                .iter()
                .map(|r| r.iter().map(|&v| v as f64).collect())
                .collect(),
            NormalizationMode::ColumnNormalized => self.column_normalized(),
        };
        LabeledTable {
            rows: labels.clone(),
            columns: labels,
            cells,
        }
    }
}

/// A labeled grid of numbers: rows are predicted labels, columns true labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<f64>>,
}

const CORNER: &str = "pred\\true";

impl LabeledTable {
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.len().min(self.columns.len()))
            .map(|i| self.cells[i][i])
            .collect()
    }

    /// Whitespace-aligned text with `decimals` digits per cell.
    pub fn render(&self, decimals: usize) -> String {
        let body: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|r| r.iter().map(|v| format!("{v:.decimals$}")).collect())
            .collect();
        let first = self
            .rows
            .iter()
            .map(String::len)
            .chain([CORNER.len()])
            .max()
            .unwrap_or(0);
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(c, name)| body.iter().map(|r| r[c].len()).chain([name.len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{CORNER:<first$}");
        for (name, w) in self.columns.iter().zip(&widths) {
            let _ = write!(out, "  {name:>w$}");
        }
        out.push('\n');
        for (label, row) in self.rows.iter().zip(&body) {
            let _ = write!(out, "{label:<first$}");
            for (cell, w) in row.iter().zip(&widths) {
                let _ = write!(out, "  {cell:>w$}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(MetricsError::TableParse {
            line: 1,
            reason: "empty table".into(),
        })?;
        let mut htoks = header.split_whitespace();
        if htoks.next() != Some(CORNER) {
            return Err(MetricsError::TableParse {
                line: hline + 1,
                reason: format!("header must start with `{CORNER}`"),
            });
        }
        let columns: Vec<String> = htoks.map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        for (i, line) in lines {
            let mut toks = line.split_whitespace();
            let label = toks.next().unwrap_or_default().to_string();
            let values: Vec<f64> = toks
                .map(|t| {
                    t.parse::<f64>().map_err(|_| MetricsError::TableParse {
                        line: i + 1,
                        reason: format!("`{t}` is not a number"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if values.len() != columns.len() {
                return Err(MetricsError::TableParse {
                    line: i + 1,
                    reason: format!("expected {} cells, got {}", columns.len(), values.len()),
                });
            }
            rows.push(label);
            cells.push(values);
        }
        Ok(Self { rows, columns, cells })
    }
}

/// Class-agnostic greedy matching per image after dropping detections below
/// `conf_thr`. Matched pairs land in `(predicted, true)`, unmatched detections
/// in `(predicted, background)`, missed ground truths in `(background, true)`.
pub fn confusion_matrix(
    gts: &[AnnotatedImage],
    preds: &[ImagePredictions],
    classes: &ClassSet,
    iou_thr: f64,
    conf_thr: f64,
) -> Result<ConfusionMatrix, MetricsError> {
    check_threshold(iou_thr)?;
    if !(0.0..=1.0).contains(&conf_thr) {
        return Err(MetricsError::Config(format!(
            "confidence threshold must lie in [0, 1], got {conf_thr}"
        )));
    }
    let index = ImageIndex::build(gts, preds)?;
    let mut m = ConfusionMatrix::zeros(classes);
    let bg = m.background();
    for (img, dets) in index.images.iter().zip(&index.predictions) {
        let kept: Vec<Detection> = dets.iter().filter(|d| d.confidence >= conf_thr).copied().collect();
        for d in &kept {
            classes.check_id(d.class_id)?;
        }
        for g in &img.ground_truths {
            classes.check_id(g.class_id)?;
        }
        let r = match_class_agnostic(&kept, &img.ground_truths, iou_thr)?;
        for (di, v) in r.detections.iter().enumerate() {
            let pred = kept[di].class_id;
            match v {
                DetectionVerdict::TruePositive { ground_truth } => {
                    m.counts[pred][img.ground_truths[*ground_truth].class_id] += 1
                }
                _ => m.counts[pred][bg] += 1,
            }
        }
        for (gi, v) in r.ground_truths.iter().enumerate() {
            if matches!(v, GroundTruthVerdict::FalseNegative) {
                m.counts[bg][img.ground_truths[gi].class_id] += 1;
            }
        }
    }
    Ok(m)
}
