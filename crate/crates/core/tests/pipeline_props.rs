mod common;

use std::collections::HashSet;
use std::path::Path;

use common::*;
use herdpipe::formats::{read_yolo_layout, Split};
use herdpipe::pipeline::{
    adjust_brightness, adjust_contrast, apply_split, augment_dataset, box_blur, plan_augmentation, preprocess, split,
    split_counts, PipelineConfig, RasterImage,
};
use proptest::prelude::*;

/// Integer-percent version of the split rule: floor shares, then one
/// leftover each to test, valid, train (skipping zero shares), repeating.
fn oracle_counts(n: usize, pct: [usize; 3]) -> [usize; 3] {
    let mut c = pct.map(|p| n * p / 100);
    let mut left = n - c.iter().sum::<usize>();
    let order: Vec<usize> = [2, 1, 0].into_iter().filter(|&i| pct[i] > 0).collect();
    let mut k = 0;
    while left > 0 {
        c[order[k % order.len()]] += 1;
        left -= 1;
        k += 1;
    }
    c
}

fn fractions(pct: [usize; 3]) -> [f64; 3] {
    pct.map(|p| p as f64 / 100.0)
}

#[test]
fn split_counts_match_the_oracle_exhaustively() {
    let shares = [
        [70, 20, 10],
        [80, 10, 10],
        [60, 20, 20],
        [50, 50, 0],
        [100, 0, 0],
        [34, 33, 33],
        [90, 5, 5],
    ];
    for pct in shares {
        for n in 1..=300 {
            let got = split_counts(n, &fractions(pct)).unwrap();
            assert_eq!(got, oracle_counts(n, pct), "n = {n}, shares {pct:?}");
            for (c, p) in got.iter().zip(pct) {
                assert!((*c as f64 - n as f64 * p as f64 / 100.0).abs() < 1.0 + 1e-9);
            }
        }
    }
    assert_eq!(split_counts(1502, &[0.7, 0.2, 0.1]).unwrap(), [1051, 300, 151]);
}

#[test]
fn split_rejects_bad_input() {
    assert!(split_counts(10, &[0.5, 0.5, 0.5]).is_err());
    assert!(split_counts(10, &[1.2, -0.1, -0.1]).is_err());
    assert!(split(&[], [0.7, 0.2, 0.1], 0).is_err());
    assert!(split(&["a".into(), "a".into()], [0.7, 0.2, 0.1], 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn split_is_a_seeded_partition(n in 1usize..200, seed in any::<u64>()) {
        let all = ids("v", n);
        let a = split(&all, [0.7, 0.2, 0.1], seed).unwrap();
        prop_assert_eq!(&a, &split(&all, [0.7, 0.2, 0.1], seed).unwrap());
        prop_assert_eq!(a.counts(), split_counts(n, &[0.7, 0.2, 0.1]).unwrap());
        let order: Vec<&String> = a.assignments.iter().map(|(id, _)| id).collect();
        prop_assert_eq!(order, all.iter().collect::<Vec<_>>());
    }

    #[test]
    fn augmentation_plans_are_seeded_and_in_bounds(n in 1usize..40, seed in any::<u64>(), per in 1usize..4) {
        let imgs: Vec<_> = (0..n)
            .map(|i| herdpipe::geometry::AnnotatedImage::new(format!("t{i}"), 20 + i as u32, 30))
            .collect();
        let cfg = PipelineConfig { rng_seed: seed, outputs_per_train_image: per, ..PipelineConfig::default() };
        let plan = plan_augmentation(&imgs, &cfg).unwrap();
        prop_assert_eq!(&plan, &plan_augmentation(&imgs, &cfg).unwrap());
        prop_assert_eq!(plan.copies.len(), n * (per - 1));
        prop_assert_eq!(plan.grayscale_sources.len(), ((n as f64) * 0.2).round() as usize);
        for c in &plan.copies {
            let img = &imgs[c.source];
            let [x0, y0, w, h] = c.window;
            prop_assert!(x0 + w <= img.width && y0 + h <= img.height && w > 0 && h > 0);
            prop_assert!((0.0..=cfg.crop_max_zoom).contains(&c.zoom));
        }
    }

    #[test]
    fn brightness_and_contrast_stay_in_range(v in any::<u8>(), f in 0.0..3.0f64) {
        let img = RasterImage::filled(2, 2, 3, v).unwrap();
        let b = adjust_brightness(&img, f);
        prop_assert_eq!(b.pixel(0, 0)[0], (f64::from(v) * f).round().min(255.0) as u8);
        let c = adjust_contrast(&img, f);
        prop_assert_eq!(c.pixel(1, 1)[2], ((f64::from(v) - 128.0) * f + 128.0).round().clamp(0.0, 255.0) as u8);
    }
}

#[test]
fn blur_of_a_flat_image_is_flat_and_kernel_must_be_odd() {
    let img = RasterImage::filled(7, 5, 1, 77).unwrap();
    assert_eq!(box_blur(&img, 5).unwrap(), img);
    assert!(box_blur(&img, 4).is_err());
    let mut spot = RasterImage::filled(3, 3, 1, 0).unwrap();
    spot.pixel_mut(1, 1)[0] = 90;
    assert_eq!(box_blur(&spot, 3).unwrap().pixel(1, 1)[0], 10);
}

#[test]
fn preprocessing_is_deterministic() {
    let mut img = RasterImage::filled(9, 9, 3, 40).unwrap();
    for (i, s) in img.data_mut().iter_mut().enumerate() {
        *s = (i * 31 % 256) as u8;
    }
    let cfg = PipelineConfig::default();
    assert_eq!(preprocess(&img, &cfg).unwrap(), preprocess(&img, &cfg).unwrap());
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    if dir.is_dir() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            out.push((
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            ));
        }
    }
    out.sort();
    out
}

fn build(root: &Path, n: usize, seed: u64) {
    let all = ids("f", n);
    let mut ds = write_image_dataset(root, &all, Split::Train, 3, 16);
    let a = split(&all, [0.6, 0.2, 0.2], seed).unwrap();
    apply_split(root, &mut ds.manifest, &a).unwrap();
}

#[test]
fn augmentation_touches_only_train_and_keeps_boxes_inside() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build(root, 30, 5);
    let before: Vec<_> = ["valid", "test"]
        .iter()
        .flat_map(|s| {
            [
                files_under(&root.join(s).join("images")),
                files_under(&root.join(s).join("labels")),
            ]
        })
        .collect();
    let cfg = PipelineConfig {
        rng_seed: 5,
        ..PipelineConfig::default()
    };
    let s = augment_dataset(root, &cfg).unwrap();
    assert_eq!((s.train_before, s.train_after, s.valid, s.test), (18, 36, 6, 6));
    let after: Vec<_> = ["valid", "test"]
        .iter()
        .flat_map(|s| {
            [
                files_under(&root.join(s).join("images")),
                files_under(&root.join(s).join("labels")),
            ]
        })
        .collect();
    assert_eq!(before, after);

    let ds = read_yolo_layout(root).unwrap();
    let mut seen = HashSet::new();
    for (r, img) in ds.manifest.records.iter().zip(&ds.images) {
        assert!(seen.insert(r.image_id.clone()));
        for g in &img.ground_truths {
            assert!(g.bbox.within(f64::from(img.width), f64::from(img.height)));
        }
        let raster = RasterImage::load(&root.join(&r.path)).unwrap();
        assert_eq!((raster.width(), raster.height()), (img.width, img.height));
    }
    assert!(augment_dataset(root, &cfg).is_err(), "augmenting twice must be refused");
}

#[test]
fn same_seed_same_bytes() {
    let run = |seed: u64| {
        let dir = tempfile::tempdir().unwrap();
        build(dir.path(), 12, seed);
        augment_dataset(
            dir.path(),
            &PipelineConfig {
                rng_seed: seed,
                ..PipelineConfig::default()
            },
        )
        .unwrap();
        let mut all = Vec::new();
        for s in Split::ALL {
            all.extend(files_under(&dir.path().join(s.as_str()).join("images")));
            all.extend(files_under(&dir.path().join(s.as_str()).join("labels")));
        }
        all.push((
            "manifest".into(),
            std::fs::read(dir.path().join("manifest.json")).unwrap(),
        ));
        all
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}
