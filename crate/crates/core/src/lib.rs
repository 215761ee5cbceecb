//! Self-supervised contrastive pretraining and cross-domain transfer for
//! retinal fundus images.
//!
//! The crate covers the full desk-to-cluster workflow:
//!
//! 1. [`datasets`] — grading manifests, stratified splits, nested label-fraction
//!    subsets, and a deterministic synthetic blob corpus for CPU-scale runs.
//! 2. [`augment`] — seeded augmentation pipelines producing the two views used
//!    by contrastive pretraining and the lighter fine-tuning transforms.
//! 3. [`model`] — CNN encoders (a reference ResNet-50-style network and a small
//!    CPU-friendly one) with projection and classifier heads, implemented with
//!    explicit forward/backward passes so every gradient is checkable.
//! 4. [`objective`] — the normalized temperature-scaled cross entropy (NT-Xent)
//!    contrastive loss, a brute-force oracle, and a finite-difference checker.
//! 5. [`optim`] — layer-wise adaptive rate scaling (LARS) and plain momentum SGD.
//! 6. [`trainer`] — label-blind pretraining, fraction-subsetted fine-tuning,
//!    evaluation, classification metrics, and a binary checkpoint format.
//! 7. [`explain`] — Grad-CAM heatmaps and overlay rendering.
//!
//! Every stochastic component takes an explicit seed; reruns with the same
//! configuration and seed reproduce checkpoints and reports byte for byte.

pub mod augment;
pub mod datasets;
pub mod error;
pub mod explain;
pub mod model;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
