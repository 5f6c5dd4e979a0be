use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::{
    parse_coco_json, parse_csv, parse_voc_xml, read_text, read_yolo_layout, write_coco_json, write_csv, write_text,
    write_voc_xml, write_yolo_layout, Dataset, DatasetManifest, FormatError, MANIFEST_FILE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    CocoJson,
    VocXml,
    YoloTxt,
    Csv,
}

impl Format {
    pub const ALL: [Format; 4] = [Format::CocoJson, Format::VocXml, Format::YoloTxt, Format::Csv];

    pub fn as_str(self) -> &'static str {
        match self {
            Format::CocoJson => "coco-json",
            Format::VocXml => "voc-xml",
            Format::YoloTxt => "yolo-txt",
            Format::Csv => "csv",
        }
    }

    pub fn keeps_masks(self) -> bool {
        self == Format::CocoJson
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Format {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Format::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| FormatError::UnknownFormat(s.to_string()))
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Guesses the format from a path: `.json` and `.csv` files by extension,
/// directories by their contents.
pub fn detect_format(path: &Path) -> Result<Format, FormatError> {
    if path.is_dir() {
        if path.join("data.yaml").is_file() {
            return Ok(Format::YoloTxt);
        }
        let has_xml = std::fs::read_dir(path)
            .map_err(io(path))?
            .filter_map(Result::ok)
            .any(|e| e.path().extension().is_some_and(|x| x == "xml"));
        if has_xml {
            return Ok(Format::VocXml);
        }
    } else {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => return Ok(Format::CocoJson),
            Some("csv") => return Ok(Format::Csv),
            _ => {}
        }
    }
    Err(FormatError::UnknownFormat(format!(
        "cannot infer the format of {}",
        path.display()
    )))
}

/// `labels.csv` -> `labels.manifest.json` next to it.
pub(crate) fn csv_sidecar(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.manifest.json"))
}

pub fn read_dataset(path: &Path, format: Format) -> Result<Dataset, FormatError> {
    match format {
        Format::CocoJson => {
            let (manifest, images) = parse_coco_json(&read_text(path)?)?;
            Dataset::new(manifest, images)
        }
        Format::YoloTxt => read_yolo_layout(path),
        Format::Csv => {
            let manifest = DatasetManifest::load(&csv_sidecar(path))?;
            let images = parse_csv(&read_text(path)?, &manifest)?;
            Dataset::new(manifest, images)
        }
        Format::VocXml => {
            let manifest = DatasetManifest::load(&path.join(MANIFEST_FILE))?;
            let mut images = Vec::with_capacity(manifest.records.len());
            for r in &manifest.records {
                let file = path.join(format!("{}.xml", r.image_id));
                let (_, img) = parse_voc_xml(&r.image_id, &read_text(&file)?, &manifest.classes)?;
                images.push(img);
            }
            Dataset::new(manifest, images)
        }
    }
}

/// Writes `dataset` and returns the files produced.
pub fn write_dataset(path: &Path, format: Format, dataset: &Dataset) -> Result<Vec<PathBuf>, FormatError> {
    dataset.validate()?;
    match format {
        Format::CocoJson => {
            write_text(path, &write_coco_json(&dataset.manifest, &dataset.images)?)?;
            Ok(vec![path.to_path_buf()])
        }
        Format::YoloTxt => write_yolo_layout(path, dataset),
        Format::Csv => {
            write_text(path, &write_csv(dataset)?)?;
            let sidecar = csv_sidecar(path);
            dataset.manifest.save(&sidecar)?;
            Ok(vec![path.to_path_buf(), sidecar])
        }
        Format::VocXml => {
            let mut written = Vec::with_capacity(dataset.images.len() + 1);
            for (r, img) in dataset.manifest.records.iter().zip(&dataset.images) {
                let file = path.join(format!("{}.xml", r.image_id));
                write_text(&file, &write_voc_xml(r, img, &dataset.manifest.classes)?)?;
                written.push(file);
            }
            let m = path.join(MANIFEST_FILE);
            dataset.manifest.save(&m)?;
            written.push(m);
            Ok(written)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvertSummary {
    pub from: Format,
    pub to: Format,
    pub images: usize,
    pub boxes: usize,
    /// Masks present in the input that the target format cannot hold.
    pub masks_dropped: usize,
    pub written: Vec<PathBuf>,
}

pub fn convert(input: &Path, from: Option<Format>, output: &Path, to: Format) -> Result<ConvertSummary, FormatError> {
    let from = match from {
        Some(f) => f,
        None => detect_format(input)?,
    };
    let mut dataset = read_dataset(input, from)?;
    let masks = dataset.mask_count();
    let masks_dropped = if to.keeps_masks() {
        0
    } else {
        dataset.images.iter_mut().for_each(|i| i.masks = None);
        masks
    };
    let written = write_dataset(output, to, &dataset)?;
    Ok(ConvertSummary {
        from,
        to,
        images: dataset.images.len(),
        boxes: dataset.box_count(),
        masks_dropped,
        written,
    })
}
