use std::fmt::Write as _;

use super::EvalReport;

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.5}"))
}

/// Plain-text summary using the familiar column names. `AP_valid0.95` holds
/// the 0.50:0.95 sweep mean.
pub fn render_table(report: &EvalReport) -> String {
    let header = ["Class", "AP", "Recall", "AP_valid0.50", "AP_valid0.95"];
    let mut rows: Vec<[String; 5]> = report
        .per_class
        .iter()
        .map(|c| {
            let sweep = if c.ap_by_threshold.iter().all(Option::is_some) {
                c.ap
            } else {
                None
            };
            [c.name.clone(), cell(c.ap), cell(c.recall), cell(c.ap50), cell(sweep)]
        })
        .collect();
    rows.push([
        "all".to_string(),
        cell(Some(report.ap)),
        cell(Some(report.recall)),
        cell(report.ap50),
        cell(Some(report.map)),
    ]);
    let widths: Vec<usize> = (0..5)
        .map(|i| {
            rows.iter()
                .map(|r| r[i].len())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
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
    line(&mut out, &header);
    for r in &rows {
        line(&mut out, &r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

/// `cutoff,precision,recall,f1` rows for one class, or for the class mean
/// when `class_id` is `None`.
pub fn curves_csv(report: &EvalReport, class_id: Option<usize>) -> Option<String> {
    let curve = match class_id {
        Some(id) => &report.curves.classes.get(id)?.confidence,
        None => &report.curves.all,
    };
    let mut out = String::from("cutoff,precision,recall,f1\n");
    for (j, c) in report.curves.cutoffs.iter().enumerate() {
        let _ = writeln!(out, "{c},{},{},{}", curve.precision[j], curve.recall[j], curve.f1[j]);
    }
    Some(out)
}
