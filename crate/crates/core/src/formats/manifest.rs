use std::collections::HashSet;
use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::geometry::ClassSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(FormatError::Manifest(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnotationSource {
    TeacherAuto,
    Human,
    Fixture,
    /// Extracted frames that no one has labelled yet.
    Unlabeled,
}

/// Trainer-side tensor normalization. Pixels on disk are never rescaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_id: String,
    /// Relative to the dataset root.
    pub path: String,
    pub width: u32,
    pub height: u32,
    pub split: Split,
    pub source: AnnotationSource,
}

impl ManifestRecord {
    pub fn new(
        image_id: impl Into<String>,
        path: impl Into<String>,
        width: u32,
        height: u32,
        split: Split,
        source: AnnotationSource,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            path: path.into(),
            width,
            height,
            split,
            source,
        }
    }

    /// `<split>/images/<image_id>.png`, the layout the pipeline writes.
    pub fn conventional_path(image_id: &str, split: Split) -> String {
        format!("{}/images/{image_id}.png", split.as_str())
    }
}

/// Index of a dataset: classes, per-image files and dimensions, split
/// membership and provenance. Stored as `manifest.json` at the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: ClassSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    pub records: Vec<ManifestRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Image ids double as file stems, so they are restricted to a portable set.
pub fn check_image_id(id: &str) -> Result<(), FormatError> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(FormatError::Manifest(format!(
            "image id `{id}` must be non-empty and use only [A-Za-z0-9._-]"
        )))
    }
}

pub fn check_relative_path(path: &str) -> Result<(), FormatError> {
    let p = Path::new(path);
    let escapes = p
        .components()
        .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir));
    if path.is_empty() || escapes {
        return Err(FormatError::Manifest(format!(
            "path `{path}` must be relative without parent-directory components"
        )));
    }
    Ok(())
}

impl DatasetManifest {
    pub fn new(classes: ClassSet) -> Self {
        Self {
            classes,
            normalization: None,
            records: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            check_image_id(&r.image_id)?;
            check_relative_path(&r.path)?;
            if r.width == 0 || r.height == 0 {
                return Err(FormatError::Manifest(format!("image `{}` has zero size", r.image_id)));
            }
            if !seen.insert(r.image_id.as_str()) {
                return Err(FormatError::Manifest(format!("duplicate image id `{}`", r.image_id)));
            }
        }
        Ok(())
    }

    pub fn record(&self, image_id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    pub fn split_records(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn split_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for r in &self.records {
            counts[r.split as usize] += 1;
        }
        counts
    }

    pub fn to_json(&self) -> Result<String, FormatError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        Self::from_json(&super::read_text(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        super::write_text(path, &self.to_json()?)
    }

    /// Where the YOLO label file for `record` lives under `root`.
    pub fn label_path(root: &Path, record: &ManifestRecord) -> PathBuf {
        root.join(record.split.as_str())
            .join("labels")
            .join(format!("{}.txt", record.image_id))
    }
}
