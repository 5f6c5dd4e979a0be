use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::check_fractions;
use super::{io_err, rng, PipelineError};
use crate::formats::{DatasetManifest, Split, MANIFEST_FILE};

/// Per-split sizes for `n` items.
///
/// Each split gets `floor(n * fraction)`. The (at most two) leftover items go
/// one each to test, then valid, then train, skipping splits with a zero
/// fraction. Every count therefore lies within one of `n * fraction`.
pub fn split_counts(n: usize, fractions: &[f64; 3]) -> Result<[usize; 3], PipelineError> {
    check_fractions(fractions)?;
    let mut counts = fractions.map(|f| (n as f64 * f + 1e-9).floor() as usize);
    let mut leftover = n - counts.iter().sum::<usize>().min(n);
    let receivers: Vec<usize> = [2, 1, 0].into_iter().filter(|&i| fractions[i] > 0.0).collect();
    for &i in receivers.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub fractions: [f64; 3],
    /// In the order the ids were given.
    pub assignments: Vec<(String, Split)>,
}

impl SplitAssignment {
    pub fn get(&self, id: &str) -> Option<Split> {
        self.assignments.iter().find(|(i, _)| i == id).map(|(_, s)| *s)
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for (_, s) in &self.assignments {
            c[*s as usize] += 1;
        }
        c
    }
}

/// Seeded shuffle, then contiguous train/valid/test runs of the shuffled order.
pub fn split(ids: &[String], fractions: [f64; 3], seed: u64) -> Result<SplitAssignment, PipelineError> {
    if ids.is_empty() {
        return Err(PipelineError::Contract("cannot split an empty id list".into()));
    }
    let mut seen = HashSet::with_capacity(ids.len());
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(PipelineError::Contract(format!("duplicate id `{dup}`")));
    }
    let counts = split_counts(ids.len(), &fractions)?;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut rng::stream(seed, rng::SPLIT_SHUFFLE, 0));
    let mut splits = vec![Split::Train; ids.len()];
    let mut pos = 0;
    for (split, &count) in Split::ALL.iter().zip(&counts) {
        for &i in &order[pos..pos + count] {
            splits[i] = *split;
        }
        pos += count;
    }
    Ok(SplitAssignment {
        seed,
        fractions,
        assignments: ids.iter().cloned().zip(splits).collect(),
    })
}

fn relocate(root: &Path, from: &Path, to: &Path) -> Result<bool, PipelineError> {
    let (src, dst) = (root.join(from), root.join(to));
    if src == dst || !src.exists() {
        return Ok(false);
    }
    if let Some(parent) = dst.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::rename(&src, &dst).map_err(io_err(&src))?;
    Ok(true)
}

/// Applies `assignment` to the dataset at `root`: records move to their new
/// split, image and label files move to `<split>/images` and `<split>/labels`,
/// and the manifest is rewritten. Returns the number of files moved.
pub fn apply_split(
    root: &Path,
    manifest: &mut DatasetManifest,
    assignment: &SplitAssignment,
) -> Result<usize, PipelineError> {
    if assignment.assignments.len() != manifest.records.len() {
        return Err(PipelineError::Contract(format!(
            "assignment covers {} ids, manifest has {} records",
            assignment.assignments.len(),
            manifest.records.len()
        )));
    }
    let mut moved = 0;
    for record in &mut manifest.records {
        let split = assignment
            .get(&record.image_id)
            .ok_or_else(|| PipelineError::Contract(format!("no split for `{}`", record.image_id)))?;
        let old_label = DatasetManifest::label_path(Path::new(""), record);
        let ext = Path::new(&record.path)
            .extension()
            .map(|e| e.to_string_lossy().into_owned())
            .unwrap_or_else(|| "png".into());
        let new_path = format!("{}/images/{}.{ext}", split.as_str(), record.image_id);
        moved += usize::from(relocate(root, Path::new(&record.path), Path::new(&new_path))?);
        record.path = new_path;
        record.split = split;
        let new_label = DatasetManifest::label_path(Path::new(""), record);
        moved += usize::from(relocate(root, &old_label, &new_label)?);
    }
    manifest.save(&root.join(MANIFEST_FILE))?;
    Ok(moved)
}
