mod common;

use common::*;
use herdpipe::formats::{
    convert, parse_coco_json, parse_coco_predictions, parse_csv, parse_csv_predictions, parse_voc_xml, parse_yolo_txt,
    read_dataset, rle, write_coco_json, write_coco_predictions, write_csv, write_csv_predictions, write_dataset,
    write_voc_xml, write_yolo_txt, Dataset, Format,
};
use herdpipe::geometry::{AnnotatedImage, ImagePredictions};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dataset(seed: u64, masks: bool) -> Dataset {
    random_dataset(&mut ChaCha8Rng::seed_from_u64(seed), 5, masks)
}

fn max_box_error(a: &AnnotatedImage, b: &AnnotatedImage) -> f64 {
    assert_eq!(a.ground_truths.len(), b.ground_truths.len(), "box count for `{}`", a.id);
    a.ground_truths
        .iter()
        .zip(&b.ground_truths)
        .map(|(x, y)| {
            assert_eq!(x.class_id, y.class_id);
            let (p, q) = (x.bbox, y.bbox);
            [
                p.x_min - q.x_min,
                p.y_min - q.y_min,
                p.x_max - q.x_max,
                p.y_max - q.y_max,
            ]
            .into_iter()
            .fold(0.0f64, |m, d| m.max(d.abs()))
        })
        .fold(0.0, f64::max)
}

fn predictions(ds: &Dataset, seed: u64) -> Vec<ImagePredictions> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ds.images
        .iter()
        .map(|img| {
            let mut p = ImagePredictions::from_ground_truth(img);
            for d in &mut p.detections {
                d.confidence = rand::Rng::gen_range(&mut rng, 0.0..=1.0);
            }
            p
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn coco_round_trip_keeps_boxes_and_masks(seed in any::<u64>()) {
        let ds = dataset(seed, true);
        let text = write_coco_json(&ds.manifest, &ds.images).unwrap();
        prop_assert_eq!(&text, &write_coco_json(&ds.manifest, &ds.images).unwrap());
        let (m, imgs) = parse_coco_json(&text).unwrap();
        prop_assert_eq!(&m.classes, &ds.manifest.classes);
        for (a, b) in ds.images.iter().zip(&imgs) {
            prop_assert!(max_box_error(a, b) <= 1e-9);
            let count = |i: &AnnotatedImage| i.masks.as_ref().map_or(0, Vec::len);
            prop_assert_eq!(count(a), count(b));
        }
        for (r, s) in ds.manifest.records.iter().zip(&m.records) {
            prop_assert_eq!((&r.image_id, r.split, r.width, r.height), (&s.image_id, s.split, s.width, s.height));
        }
    }

    #[test]
    fn csv_round_trip_is_exact(seed in any::<u64>()) {
        let ds = dataset(seed, false);
        let text = write_csv(&ds).unwrap();
        let back = parse_csv(&text, &ds.manifest).unwrap();
        for (a, b) in ds.images.iter().zip(&back) {
            prop_assert_eq!(max_box_error(a, b), 0.0);
        }
    }

    #[test]
    fn yolo_round_trip_within_six_decimals(seed in any::<u64>()) {
        let ds = dataset(seed, false);
        for img in &ds.images {
            let text = write_yolo_txt(img).unwrap();
            let back = parse_yolo_txt(&img.id, &text, img.width, img.height, &ds.manifest.classes).unwrap();
            let tol = 1e-6 * f64::from(img.width.max(img.height)) + 1e-9;
            prop_assert!(max_box_error(img, &back) <= tol);
        }
    }

    #[test]
    fn voc_round_trip_within_half_a_pixel(seed in any::<u64>()) {
        let ds = dataset(seed, false);
        for (r, img) in ds.manifest.records.iter().zip(&ds.images) {
            let text = write_voc_xml(r, img, &ds.manifest.classes).unwrap();
            let (file, back) = parse_voc_xml(&img.id, &text, &ds.manifest.classes).unwrap();
            prop_assert!(r.path.ends_with(&file));
            prop_assert!(max_box_error(img, &back) <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn prediction_files_round_trip(seed in any::<u64>()) {
        let ds = dataset(seed, false);
        let preds = predictions(&ds, seed);
        let coco = write_coco_predictions(&ds.manifest, &preds).unwrap();
        let csv = write_csv_predictions(&ds.manifest, &preds).unwrap();
        for back in [parse_coco_predictions(&coco, &ds.manifest).unwrap(), parse_csv_predictions(&csv, &ds.manifest).unwrap()] {
            for p in &preds {
                let q = back.iter().find(|q| q.image_id == p.image_id);
                let q = q.map(|q| q.detections.clone()).unwrap_or_default();
                prop_assert_eq!(p.detections.len(), q.len());
                for (x, y) in p.detections.iter().zip(&q) {
                    prop_assert!((x.confidence - y.confidence).abs() <= 1e-9);
                    prop_assert!((x.bbox.x_max - y.bbox.x_max).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn rle_encode_decode_inverse(bits in proptest::collection::vec(any::<bool>(), 0..400)) {
        let counts = rle::encode(&bits);
        prop_assert!(rle::is_canonical(&counts));
        prop_assert_eq!(rle::decode(&counts), bits);
    }

    #[test]
    fn rle_major_order_swap_is_inverse(bits in proptest::collection::vec(any::<bool>(), 1..13), h in 1u32..13) {
        let w = bits.len() as u32;
        let mut grid = Vec::new();
        for y in 0..h { grid.extend(bits.iter().map(|b| *b ^ (y % 2 == 1))); }
        let rows = rle::encode(&grid);
        let cols = rle::row_to_column_major(&rows, w, h);
        prop_assert_eq!(rle::column_to_row_major(&cols, w, h), rows);
    }
}

#[test]
fn every_format_pair_converts_on_disk() {
    let ds = dataset(99, false);
    let dir = tempfile::tempdir().unwrap();
    let path_for = |f: Format, tag: &str| match f {
        Format::CocoJson => dir.path().join(format!("{tag}.json")),
        Format::Csv => dir.path().join(format!("{tag}.csv")),
        _ => dir.path().join(format!("{tag}-{}", f.as_str())),
    };
    for from in Format::ALL {
        let src = path_for(from, "src");
        write_dataset(&src, from, &ds).unwrap();
        for to in Format::ALL {
            let dst = path_for(to, &format!("{}-to", from.as_str()));
            let s = convert(&src, None, &dst, to).unwrap();
            assert_eq!((s.from, s.to, s.images), (from, to, ds.images.len()));
            let back = read_dataset(&dst, to).unwrap();
            let tol = if from == Format::VocXml || to == Format::VocXml {
                0.5 + 1e-6 * 96.0
            } else {
                1e-6 * 96.0 + 1e-9
            };
            for (a, b) in ds.images.iter().zip(&back.images) {
                assert!(max_box_error(a, b) <= tol, "{from} -> {to}: `{}`", a.id);
            }
        }
    }
}

#[test]
fn malformed_inputs_are_rejected() {
    let ds = dataset(1, false);
    let classes = &ds.manifest.classes;
    assert!(parse_yolo_txt("a", "0 0.5 0.5 0.2", 10, 10, classes).is_err());
    assert!(parse_yolo_txt("a", "9 0.5 0.5 0.2 0.2", 10, 10, classes).is_err());
    assert!(parse_yolo_txt("a", "0 0.5 0.5 nan 0.2", 10, 10, classes).is_err());
    assert!(parse_coco_json("{").is_err());
    assert!(parse_coco_json(r#"{"images": []}"#).is_err());
    assert!(parse_voc_xml("a", "<annotation><size><width>0</width></size></annotation>", classes).is_err());
    assert!(parse_csv("image_id,class\nx,y\n", &ds.manifest).is_err());
    assert!("xml".parse::<Format>().is_err());
}
