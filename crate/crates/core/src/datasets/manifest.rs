//! Grading manifests: the `id,image_path,grade` CSV that names every sample
//! of a dataset.
//!
//! Image paths are stored relative to the manifest file so a corpus directory
//! can be moved wholesale. Row order is preserved exactly as read; nothing in
//! the crate ever re-sorts a manifest behind the caller's back.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Which split part a sample currently belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SplitAssignment {
    Train,
    Val,
    Test,
    Unassigned,
}

/// One graded image.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Sample {
    /// Unique sample id (unique within a manifest).
    pub id: String,
    /// Image location relative to the manifest's directory.
    pub image_path: PathBuf,
    /// Raw severity grade as recorded by the dataset.
    pub grade: usize,
    /// Task label after a label scheme has been applied; `None` until then.
    pub label: Option<usize>,
    /// Split membership; `Unassigned` until a split is applied.
    pub split: SplitAssignment,
}

/// A named dataset: its grading range plus the ordered sample list.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    /// Dataset name (used for grade-range lookup and reporting).
    pub name: String,
    /// Directory containing the manifest CSV; image paths resolve against it.
    pub root: PathBuf,
    /// Number of distinct grades (grades are `0..num_grades`).
    pub num_grades: usize,
    /// Samples in file order.
    pub samples: Vec<Sample>,
}

/// Grade count for the datasets whose grading ranges are known a priori.
///
/// Lookup is tolerant of case, spaces, hyphens, and a trailing year.
pub fn registered_num_grades(name: &str) -> Option<usize> {
    let key: String = name
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    match key.as_str() {
        "eyepacs" => Some(5),
        "aptos" | "aptos2019" => Some(5),
        "messidor" | "messidori" | "messidor1" => Some(4),
        "fundus" | "fundusimages" => Some(7),
        _ => None,
    }
}

impl DatasetManifest {
    /// Read a manifest CSV (`id,image_path,grade` with a header row).
    ///
    /// For registered dataset names the grade range is validated against the
    /// known scheme; otherwise it is inferred as `max(grade) + 1`. Every
    /// referenced image file must exist. Reported row numbers count data rows
    /// starting at 1.
    pub fn load(path: &Path, name: &str) -> Result<Self> {
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|source| match source.kind() {
                csv::ErrorKind::Io(_) => Error::Io {
                    path: path.to_path_buf(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, source.to_string()),
                },
                _ => Error::ManifestRead {
                    path: path.to_path_buf(),
                    source,
                },
            })?;

        let headers = reader.headers().map_err(|source| Error::ManifestRead {
            path: path.to_path_buf(),
            source,
        })?;
        let found: Vec<&str> = headers.iter().collect();
        if found != ["id", "image_path", "grade"] {
            return Err(Error::ManifestHeader {
                path: path.to_path_buf(),
                found: found.join(","),
            });
        }

        let mut samples = Vec::new();
        let mut seen = HashSet::new();
        for (idx, record) in reader.records().enumerate() {
            let row = idx + 1;
            let record = record.map_err(|source| Error::ManifestRow {
                path: path.to_path_buf(),
                row,
                message: source.to_string(),
            })?;
            if record.len() != 3 {
                return Err(Error::ManifestRow {
                    path: path.to_path_buf(),
                    row,
                    message: format!("expected 3 fields, found {}", record.len()),
                });
            }
            let id = record[0].to_string();
            if id.is_empty() {
                return Err(Error::ManifestRow {
                    path: path.to_path_buf(),
                    row,
                    message: "empty sample id".to_string(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateSampleId {
                    path: path.to_path_buf(),
                    row,
                    id,
                });
            }
            let grade: i64 = record[2].parse().map_err(|_| Error::ManifestRow {
                path: path.to_path_buf(),
                row,
                message: format!("grade `{}` is not an integer", &record[2]),
            })?;
            if grade < 0 {
                return Err(Error::GradeOutOfRange {
                    path: path.to_path_buf(),
                    row,
                    grade,
                    dataset: name.to_string(),
                    num_grades: registered_num_grades(name).unwrap_or(0),
                });
            }
            samples.push(Sample {
                id,
                image_path: PathBuf::from(&record[1]),
                grade: grade as usize,
                label: None,
                split: SplitAssignment::Unassigned,
            });
        }
        if samples.is_empty() {
            return Err(Error::ManifestRow {
                path: path.to_path_buf(),
                row: 0,
                message: "manifest contains no samples".to_string(),
            });
        }

        let num_grades = match registered_num_grades(name) {
            Some(n) => n,
            None => samples.iter().map(|s| s.grade).max().unwrap() + 1,
        };
        for (idx, sample) in samples.iter().enumerate() {
            if sample.grade >= num_grades {
                return Err(Error::GradeOutOfRange {
                    path: path.to_path_buf(),
                    row: idx + 1,
                    grade: sample.grade as i64,
                    dataset: name.to_string(),
                    num_grades,
                });
            }
        }
        for (idx, sample) in samples.iter().enumerate() {
            let resolved = root.join(&sample.image_path);
            if !resolved.is_file() {
                return Err(Error::ManifestRow {
                    path: path.to_path_buf(),
                    row: idx + 1,
                    message: format!("image file not found: {}", resolved.display()),
                });
            }
        }

        Ok(DatasetManifest {
            name: name.to_string(),
            root,
            num_grades,
            samples,
        })
    }

    /// Write the manifest back out as `id,image_path,grade` CSV.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|source| Error::ManifestRead {
            path: path.to_path_buf(),
            source,
        })?;
        writer
            .write_record(["id", "image_path", "grade"])
            .and_then(|_| {
                self.samples.iter().try_for_each(|s| {
                    writer.write_record([
                        s.id.as_str(),
                        &s.image_path.to_string_lossy(),
                        &s.grade.to_string(),
                    ])
                })
            })
            .map_err(|source| Error::ManifestRead {
                path: path.to_path_buf(),
                source,
            })?;
        writer.flush().map_err(|source| Error::io(path, source))?;
        Ok(())
    }

    /// Absolute (root-resolved) path of a sample's image.
    pub fn resolve_image(&self, sample: &Sample) -> PathBuf {
        self.root.join(&sample.image_path)
    }

    /// Index of a sample by id.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.samples.iter().position(|s| s.id == id)
    }

    /// Number of samples per grade, indexed by grade.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_grades];
        for s in &self.samples {
            counts[s.grade] += 1;
        }
        counts
    }
}
