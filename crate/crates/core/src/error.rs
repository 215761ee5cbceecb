//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Variants carry enough context
//! (row numbers, tensor names, file paths) that a message alone identifies the
//! offending input without re-running anything.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error for dataset handling, augmentation, modelling, training,
/// checkpointing, and explanation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Manifest file could not be read or parsed as CSV.
    #[error("manifest {path}: {source}")]
    ManifestRead {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    /// Manifest header does not match the expected `id,image_path,grade` layout.
    #[error("manifest {path}: expected header `id,image_path,grade`, found `{found}`")]
    ManifestHeader { path: PathBuf, found: String },

    /// A manifest row is malformed (missing field, unparsable grade, ...).
    #[error("manifest {path} row {row}: {message}")]
    ManifestRow {
        path: PathBuf,
        row: usize,
        message: String,
    },

    /// A grade value lies outside the declared grading scheme.
    #[error("manifest {path} row {row}: grade {grade} out of range for {dataset} (0..{num_grades})")]
    GradeOutOfRange {
        path: PathBuf,
        row: usize,
        grade: i64,
        dataset: String,
        num_grades: usize,
    },

    /// The same sample id appears more than once.
    #[error("manifest {path} row {row}: duplicate sample id `{id}`")]
    DuplicateSampleId {
        path: PathBuf,
        row: usize,
        id: String,
    },

    /// Generic I/O failure with the path that triggered it.
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// An image file could not be decoded.
    #[error("image {path}: {message}")]
    ImageDecode { path: PathBuf, message: String },

    /// Split ratios are rejected (non-positive part, or sum far from 1).
    #[error("invalid split ratios ({train}, {val}, {test}): {message}")]
    InvalidSplitRatios {
        train: f64,
        val: f64,
        test: f64,
        message: String,
    },

    /// A grade class has too few samples to appear in every split part.
    #[error("class {class} has {count} samples, fewer than the {parts} split parts")]
    ClassTooSmall {
        class: usize,
        count: usize,
        parts: usize,
    },

    /// Label fraction outside (0, 1].
    #[error("label fraction {fraction} outside (0, 1]")]
    InvalidFraction { fraction: f64 },

    /// Fraction subsetting left at least one class stratum empty.
    #[error("fraction {fraction} leaves class strata {classes:?} empty")]
    EmptyStratum { fraction: f64, classes: Vec<usize> },

    /// A split references sample ids missing from the manifest.
    #[error("split references unknown sample id `{id}`")]
    UnknownSampleId { id: String },

    /// An augmentation stage was configured with invalid parameters.
    #[error("augmentation stage {stage}: {message}")]
    InvalidStage { stage: String, message: String },

    /// A crop target exceeds the current image dimensions.
    #[error("crop target {target:?} exceeds image size {image:?}")]
    CropTooLarge {
        target: (usize, usize),
        image: (usize, usize),
    },

    /// Model configuration is structurally invalid.
    #[error("model config: {0}")]
    InvalidModelConfig(String),

    /// Tensor dimensions do not line up (e.g. head input vs encoder output).
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimMismatch {
        context: String,
        expected: String,
        found: String,
    },

    /// A parameter or activation became NaN or infinite.
    #[error("non-finite values in {context}")]
    NonFinite { context: String },

    /// An embedding row has zero norm and cannot be L2-normalized.
    #[error("embedding row {row} has zero norm")]
    ZeroNormRow { row: usize },

    /// The embedding batch cannot form (view_a, view_b) pairs.
    #[error("embedding batch has {rows} rows; contrastive pairing needs a positive even count")]
    OddEmbeddingBatch { rows: usize },

    /// Optimizer hyperparameters are invalid.
    #[error("optimizer config: {0}")]
    InvalidOptimizerConfig(String),

    /// Gradient passed to the optimizer does not match the parameter shape.
    #[error("gradient for `{name}` has {grad_len} elements, parameter has {param_len}")]
    GradientShape {
        name: String,
        grad_len: usize,
        param_len: usize,
    },

    /// No gradient was supplied for a trainable parameter.
    #[error("missing gradient for parameter `{name}`")]
    MissingGradient { name: String },

    /// Training configuration is invalid.
    #[error("trainer config: {0}")]
    InvalidTrainConfig(String),

    /// Checkpoint container is corrupt, truncated, or from an unknown format.
    #[error("checkpoint {path}: {message}")]
    CheckpointFormat { path: PathBuf, message: String },

    /// Checkpoint was written by an incompatible (newer) format version.
    #[error("checkpoint {path}: format version {found_major}.{found_minor} is newer than supported {supported_major}.x")]
    CheckpointVersion {
        path: PathBuf,
        found_major: u32,
        found_minor: u32,
        supported_major: u32,
    },

    /// Checkpoint encoder architecture does not match what the caller expects.
    #[error("architecture mismatch: {message}")]
    ArchitectureMismatch { message: String },

    /// A confusion matrix is empty or non-square.
    #[error("confusion matrix: {0}")]
    InvalidConfusion(String),

    /// Grad-CAM was asked about a class index the classifier does not have.
    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },

    /// Grad-CAM target layer name not present in the encoder.
    #[error("encoder has no activation named `{name}`")]
    UnknownLayer { name: String },

    /// Explanation parameters are invalid (bad alpha, wrong head kind, ...).
    #[error("explanation: {0}")]
    InvalidExplain(String),
}

impl Error {
    /// Build an [`Error::Io`] from a path and source error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
