//! Scores a small hand-made set of predictions: per-class AP table, the
//! column-normalized confusion matrix and the class-mean confidence curves.
//!
//! Run with `cargo run --example evaluate`.

use herdpipe::geometry::{AnnotatedImage, BBox, ClassSet, Detection, GroundTruthBox, ImagePredictions};
use herdpipe::metrics::{confusion_matrix, curves_csv, evaluate, render_table, EvalConfig, NormalizationMode};

fn bbox(x: f64, y: f64, w: f64, h: f64) -> BBox {
    BBox::new(x, y, x + w, y + h).expect("valid box")
}

fn main() -> anyhow::Result<()> {
    let classes = ClassSet::new(["camel", "rope"])?;
    let gts = vec![
        AnnotatedImage::new("frame_000", 640, 480).with_boxes(vec![
            GroundTruthBox::new(bbox(40.0, 60.0, 120.0, 90.0), 0),
            GroundTruthBox::new(bbox(300.0, 200.0, 40.0, 160.0), 1),
        ]),
        AnnotatedImage::new("frame_030", 640, 480)
            .with_boxes(vec![GroundTruthBox::new(bbox(200.0, 100.0, 150.0, 110.0), 0)]),
    ];
    let preds = vec![
        ImagePredictions::new(
            "frame_000",
            vec![
                Detection::new(bbox(42.0, 58.0, 118.0, 92.0), 0, 0.91),
                Detection::new(bbox(305.0, 210.0, 38.0, 140.0), 1, 0.64),
                Detection::new(bbox(500.0, 20.0, 60.0, 60.0), 0, 0.30),
            ],
        ),
        ImagePredictions::new(
            "frame_030",
            vec![Detection::new(bbox(230.0, 120.0, 90.0, 80.0), 0, 0.72)],
        ),
    ];

    let report = evaluate(&gts, &preds, &EvalConfig::new(classes.clone()))?;
    print!("{}", render_table(&report));

    let cm = confusion_matrix(&gts, &preds, &classes, 0.5, 0.25)?;
    println!("\nconfusion matrix (rows predicted, columns true):");
    print!("{}", cm.to_table(NormalizationMode::ColumnNormalized).render(2));

    let curves = curves_csv(&report, None).unwrap_or_default();
    println!("\nfirst confidence-curve rows:");
    for line in curves.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
