use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{rng, PipelineConfig, PipelineError, RasterImage};
use crate::formats::{read_yolo_layout, write_yolo_layout, Dataset, ManifestRecord, Split};
use crate::geometry::{clip_to_image, AnnotatedImage, GroundTruthBox};

/// Augmented copies are named `<id>_aug<k>`, k starting at 1.
pub const AUGMENT_SUFFIX: &str = "_aug";

/// Boxes keeping less than this share of their area after cropping are dropped.
const MIN_KEPT_AREA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedCopy {
    /// Index into the train images the plan was made for.
    pub source: usize,
    pub image_id: String,
    pub zoom: f64,
    /// `[x0, y0, width, height]` of the crop window.
    pub window: [u32; 4],
    pub grayscale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentPlan {
    pub seed: u64,
    /// Grouped by source image, in source order.
    pub copies: Vec<AugmentedCopy>,
    /// Sorted indices of train images whose copies are grayscale.
    pub grayscale_sources: Vec<usize>,
}

fn check_dims(img: &AnnotatedImage) -> Result<(), PipelineError> {
    if img.width == 0 || img.height == 0 {
        return Err(PipelineError::Contract(format!("image `{}` has no dimensions", img.id)));
    }
    Ok(())
}

/// Draws every random choice of the augmentation up front, single-threaded.
pub fn plan_augmentation(train: &[AnnotatedImage], cfg: &PipelineConfig) -> Result<AugmentPlan, PipelineError> {
    cfg.validate()?;
    let n = train.len();
    let gray_count = ((cfg.grayscale_fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(cfg.rng_seed, rng::GRAYSCALE_PICK, 0));
    let mut grayscale_sources = order[..gray_count].to_vec();
    grayscale_sources.sort_unstable();

    let mut copies = Vec::with_capacity(n * (cfg.outputs_per_train_image - 1));
    for (i, img) in train.iter().enumerate() {
        check_dims(img)?;
        let grayscale = grayscale_sources.binary_search(&i).is_ok();
        for k in 1..cfg.outputs_per_train_image {
            let mut r = rng::stream(cfg.rng_seed, rng::CROP, ((i as u64) << 16) | k as u64);
            let zoom = if cfg.crop_max_zoom > 0.0 {
                r.gen_range(0.0..=cfg.crop_max_zoom)
            } else {
                0.0
            };
            let w = ((f64::from(img.width) * (1.0 - zoom)).round() as u32).clamp(1, img.width);
            let h = ((f64::from(img.height) * (1.0 - zoom)).round() as u32).clamp(1, img.height);
            let x0 = r.gen_range(0..=img.width - w);
            let y0 = r.gen_range(0..=img.height - h);
            copies.push(AugmentedCopy {
                source: i,
                image_id: format!("{}{AUGMENT_SUFFIX}{k}", img.id),
                zoom,
                window: [x0, y0, w, h],
                grayscale,
            });
        }
    }
    Ok(AugmentPlan {
        seed: cfg.rng_seed,
        copies,
        grayscale_sources,
    })
}

/// Labels seen through the crop window, re-based to the window's origin.
fn crop_labels(img: &AnnotatedImage, copy: &AugmentedCopy) -> AnnotatedImage {
    let [x0, y0, w, h] = copy.window;
    let boxes = img
        .ground_truths
        .iter()
        .filter_map(|gt| {
            let moved = gt.bbox.translate(-f64::from(x0), -f64::from(y0));
            let clipped = clip_to_image(&moved, f64::from(w), f64::from(h)).ok()?;
            (clipped.area() >= MIN_KEPT_AREA * gt.bbox.area()).then_some(GroundTruthBox::new(clipped, gt.class_id))
        })
        .collect();
    AnnotatedImage::new(copy.image_id.clone(), w, h).with_boxes(boxes)
}

fn render_copy(
    labels: &AnnotatedImage,
    raster: &RasterImage,
    copy: &AugmentedCopy,
) -> Result<(AnnotatedImage, RasterImage), PipelineError> {
    let [x0, y0, w, h] = copy.window;
    let mut out = raster.crop(x0, y0, w, h)?;
    if copy.grayscale {
        out = out.to_luma();
    }
    Ok((crop_labels(labels, copy), out))
}

/// Expands the train split: each image is followed by its augmented copies.
pub fn augment_train(
    train: &[(AnnotatedImage, RasterImage)],
    cfg: &PipelineConfig,
) -> Result<(AugmentPlan, Vec<(AnnotatedImage, RasterImage)>), PipelineError> {
    for (img, raster) in train {
        check_dims(img)?;
        if (img.width, img.height) != (raster.width(), raster.height()) {
            return Err(PipelineError::Contract(format!(
                "labels for `{}` are {}x{} but the raster is {}x{}",
                img.id,
                img.width,
                img.height,
                raster.width(),
                raster.height()
            )));
        }
    }
    let labels: Vec<AnnotatedImage> = train.iter().map(|(a, _)| a.clone()).collect();
    let plan = plan_augmentation(&labels, cfg)?;
    let rendered = plan
        .copies
        .par_iter()
        .map(|c| render_copy(&train[c.source].0, &train[c.source].1, c))
        .collect::<Result<Vec<_>, _>>()?;
    let per = cfg.outputs_per_train_image - 1;
    let mut out = Vec::with_capacity(train.len() * cfg.outputs_per_train_image);
    let mut rendered = rendered.into_iter();
    for item in train {
        out.push(item.clone());
        out.extend(rendered.by_ref().take(per));
    }
    Ok((plan, out))
}

#[derive(Debug, Clone, Serialize)]
pub struct AugmentSummary {
    pub seed: u64,
    pub train_before: usize,
    pub train_after: usize,
    pub valid: usize,
    pub test: usize,
    pub total: usize,
    pub grayscale_sources: usize,
    pub boxes_dropped: usize,
}

fn is_augmented(id: &str) -> bool {
    id.rsplit_once(AUGMENT_SUFFIX)
        .is_some_and(|(_, k)| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()))
}

/// Augments the train split of the YOLO-layout dataset at `root` in place.
/// Valid and test files are not touched.
pub fn augment_dataset(root: &Path, cfg: &PipelineConfig) -> Result<AugmentSummary, PipelineError> {
    let dataset = read_yolo_layout(root)?;
    if let Some(r) = dataset.manifest.records.iter().find(|r| is_augmented(&r.image_id)) {
        return Err(PipelineError::Contract(format!(
            "dataset already holds augmented image `{}`",
            r.image_id
        )));
    }
    let train_idx: Vec<usize> = (0..dataset.images.len())
        .filter(|&i| dataset.manifest.records[i].split == Split::Train)
        .collect();
    let train_labels: Vec<AnnotatedImage> = train_idx.iter().map(|&i| dataset.images[i].clone()).collect();
    let plan = plan_augmentation(&train_labels, cfg)?;

    let rendered = plan
        .copies
        .par_iter()
        .map(|c| {
            let ri = train_idx[c.source];
            let record = &dataset.manifest.records[ri];
            let raster = RasterImage::load(&root.join(&record.path))?;
            let labels = &dataset.images[ri];
            if (raster.width(), raster.height()) != (labels.width, labels.height) {
                return Err(PipelineError::Contract(format!(
                    "`{}` is {}x{} on disk but {}x{} in the manifest",
                    record.path,
                    raster.width(),
                    raster.height(),
                    labels.width,
                    labels.height
                )));
            }
            let (img, pixels) = render_copy(labels, &raster, c)?;
            let path = ManifestRecord::conventional_path(&img.id, Split::Train);
            pixels.save_png(&root.join(&path))?;
            let record = ManifestRecord::new(img.id.clone(), path, img.width, img.height, Split::Train, record.source);
            Ok((ri, record, img))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let boxes_dropped: usize = rendered
        .iter()
        .map(|(ri, _, img)| dataset.images[*ri].ground_truths.len() - img.ground_truths.len())
        .sum();
    let mut manifest = dataset.manifest.clone();
    manifest.records.clear();
    let mut images = Vec::with_capacity(dataset.images.len() + rendered.len());
    let mut rendered = rendered.into_iter().peekable();
    for (i, (record, img)) in dataset.manifest.records.iter().zip(dataset.images).enumerate() {
        manifest.records.push(record.clone());
        images.push(img);
        while let Some((_, r, a)) = rendered.next_if(|(ri, _, _)| *ri == i) {
            manifest.records.push(r);
            images.push(a);
        }
    }
    manifest.normalization.get_or_insert_with(|| cfg.normalization());
    let out = Dataset::new(manifest, images)?;
    write_yolo_layout(root, &out)?;
    let [train, valid, test] = out.manifest.split_counts();
    Ok(AugmentSummary {
        seed: cfg.rng_seed,
        train_before: train_idx.len(),
        train_after: train,
        valid,
        test,
        total: out.images.len(),
        grayscale_sources: plan.grayscale_sources.len(),
        boxes_dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn item(id: &str, w: u32, h: u32, boxes: &[(f64, f64, f64, f64)]) -> (AnnotatedImage, RasterImage) {
        let gts = boxes
            .iter()
            .map(|b| GroundTruthBox::new(BBox::new(b.0, b.1, b.2, b.3).unwrap(), 0))
            .collect();
        let data = (0..w * h * 3).map(|i| (i % 251) as u8).collect();
        (
            AnnotatedImage::new(id, w, h).with_boxes(gts),
            RasterImage::new(w, h, 3, data).unwrap(),
        )
    }

    #[test]
    fn zero_zoom_is_identity() {
        let cfg = PipelineConfig {
            crop_max_zoom: 0.0,
            grayscale_fraction: 0.0,
            ..Default::default()
        };
        let train = vec![item("a", 20, 10, &[(1.0, 1.0, 5.0, 5.0)])];
        let (_, out) = augment_train(&train, &cfg).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].0.id, "a_aug1");
        assert_eq!(out[1].0.ground_truths, train[0].0.ground_truths);
        assert_eq!(out[1].1, train[0].1);
    }

    #[test]
    fn full_box_becomes_window() {
        let cfg = PipelineConfig {
            rng_seed: 5,
            ..Default::default()
        };
        let train: Vec<_> = (0..20)
            .map(|i| item(&format!("f{i}"), 40, 30, &[(0.0, 0.0, 40.0, 30.0)]))
            .collect();
        let (plan, out) = augment_train(&train, &cfg).unwrap();
        assert_eq!(out.len(), 40);
        assert_eq!(plan.grayscale_sources.len(), 4);
        for (c, (img, raster)) in plan.copies.iter().zip(out.iter().skip(1).step_by(2)) {
            let [_, _, w, h] = c.window;
            assert_eq!(
                img.ground_truths[0].bbox,
                BBox::new(0.0, 0.0, w.into(), h.into()).unwrap()
            );
            assert_eq!(raster.channels(), if c.grayscale { 1 } else { 3 });
            assert!(c.zoom <= 0.35);
        }
    }

    #[test]
    fn small_remainders_are_dropped() {
        let (img, _) = item("a", 100, 100, &[(0.0, 0.0, 10.0, 10.0), (50.0, 50.0, 60.0, 60.0)]);
        let copy = AugmentedCopy {
            source: 0,
            image_id: "a_aug1".into(),
            zoom: 0.1,
            window: [9, 0, 90, 90],
            grayscale: false,
        };
        let out = crop_labels(&img, &copy);
        // first box keeps 1x10 of 10x10 = 10%: kept; shift window one more pixel and it goes
        assert_eq!(out.ground_truths.len(), 2);
        let copy = AugmentedCopy {
            window: [10, 0, 90, 90],
            ..copy
        };
        assert_eq!(crop_labels(&img, &copy).ground_truths.len(), 1);
    }

    #[test]
    fn plan_is_seeded() {
        let imgs: Vec<_> = (0..30).map(|i| item(&format!("x{i}"), 64, 48, &[]).0).collect();
        let cfg = PipelineConfig {
            rng_seed: 11,
            ..Default::default()
        };
        assert_eq!(
            plan_augmentation(&imgs, &cfg).unwrap(),
            plan_augmentation(&imgs, &cfg).unwrap()
        );
        let other = PipelineConfig { rng_seed: 12, ..cfg };
        assert_ne!(
            plan_augmentation(&imgs, &other).unwrap().copies,
            plan_augmentation(
                &imgs,
                &PipelineConfig {
                    rng_seed: 11,
                    ..Default::default()
                }
            )
            .unwrap()
            .copies
        );
    }

    #[test]
    fn augmented_names_are_recognized() {
        assert!(is_augmented("cam_3_aug1"));
        assert!(!is_augmented("cam_3"));
        assert!(!is_augmented("x_aug"));
    }
}
