//! Datasets: manifests, label schemes, splits, and the synthetic corpus.
//!
//! A dataset enters the system as an `id,image_path,grade` CSV manifest
//! ([`DatasetManifest::load`]). Severity grades stay untouched end to end;
//! task labels are derived views produced by [`apply_label_scheme`]. Splitting
//! ([`stratified_split`]) and label-fraction subsetting
//! ([`subset_by_fraction`]) operate on ids only, so the same split files can
//! drive any downstream task.

mod imageio;
mod manifest;
mod split;
mod synthetic;

pub use imageio::{load_image, save_image, to_rgb8, ImageTensor};
pub use manifest::{registered_num_grades, DatasetManifest, Sample, SplitAssignment};
pub use split::{assign_split, stratified_split, subset_by_fraction, SplitSpec};
pub use synthetic::{
    generate_synthetic_corpus, load_blob_geometry, BlobCircle, SyntheticCorpus,
    SyntheticImageMeta, SyntheticSpec,
};

use crate::error::{Error, Result};

/// How raw severity grades become task labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelScheme {
    /// Referable-vs-not screening: label 1 iff `grade >= threshold`.
    Binary { threshold: usize },
    /// Grades pass through unchanged; one class per grade.
    Multiclass,
}

impl Default for LabelScheme {
    /// Binary screening at the conventional referable threshold (grade ≥ 1).
    fn default() -> Self {
        LabelScheme::Binary { threshold: 1 }
    }
}

impl LabelScheme {
    /// Number of task classes for a dataset with `num_grades` grades.
    pub fn num_classes(&self, num_grades: usize) -> usize {
        match self {
            LabelScheme::Binary { .. } => 2,
            LabelScheme::Multiclass => num_grades,
        }
    }

    /// Map one grade to its task label.
    pub fn map(&self, grade: usize) -> usize {
        match self {
            LabelScheme::Binary { threshold } => usize::from(grade >= *threshold),
            LabelScheme::Multiclass => grade,
        }
    }

    /// Short name used in file names and reports.
    pub fn task_name(&self) -> &'static str {
        match self {
            LabelScheme::Binary { .. } => "binary",
            LabelScheme::Multiclass => "multiclass",
        }
    }

    fn validate(&self, num_grades: usize) -> Result<()> {
        if let LabelScheme::Binary { threshold } = self {
            if *threshold == 0 || *threshold >= num_grades {
                return Err(Error::InvalidTrainConfig(format!(
                    "binary threshold {threshold} must lie in 1..{num_grades}"
                )));
            }
        }
        Ok(())
    }
}

/// Return a copy of the manifest with task labels filled in.
///
/// Grades are kept verbatim; only the `label` field changes. A binary
/// threshold outside `1..num_grades` is rejected (it would collapse the task
/// to a single class).
pub fn apply_label_scheme(
    manifest: &DatasetManifest,
    scheme: LabelScheme,
) -> Result<DatasetManifest> {
    scheme.validate(manifest.num_grades)?;
    let mut out = manifest.clone();
    for sample in &mut out.samples {
        sample.label = Some(scheme.map(sample.grade));
    }
    Ok(out)
}
