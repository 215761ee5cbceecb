//! Training loops: contrastive pretraining, supervised fine-tuning, and
//! evaluation.
//!
//! Three entry points, mirroring the transfer recipe:
//!
//! 1. [`pretrain`] learns an encoder from *images alone* — the function never
//!    receives labels, so label leakage into pretraining is impossible by
//!    construction. Each image contributes two augmented views; the
//!    projection-head embeddings feed the contrastive loss.
//! 2. [`finetune`] attaches a classifier head, optionally seeds the encoder
//!    from a pretraining checkpoint, and trains on a labelled (possibly
//!    fraction-subset) split. [`FinetuneMode::Probe`] freezes the encoder and
//!    updates only the head; [`FinetuneMode::Full`] trains end to end.
//! 3. [`evaluate`] runs the deterministic inference pipeline over a held-out
//!    id list and produces a metrics report plus per-sample predictions.
//!
//! Every loop is fully determined by the config seed: epoch shuffles and
//! per-image augmentations draw from seeds derived with fixed stream tags,
//! so reruns reproduce losses bit for bit.

pub mod checkpoint;
pub mod metrics;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::augment::{
    build_eval_pipeline, build_finetune_pipeline, build_pretext_pipeline, make_view_pair,
    AugmentationPipeline, FinetuneAugmentConfig, PretextAugmentConfig,
};
use crate::datasets::{
    apply_label_scheme, load_image, subset_by_fraction, DatasetManifest, ImageTensor, LabelScheme,
    SplitSpec,
};
use crate::error::{Error, Result};
use crate::model::{
    build_model, batch_from_images, ClassifierHeadConfig, EncoderConfig, HeadConfig, ModelBundle,
    ProjectionHeadConfig,
};
use crate::objective::nt_xent_loss;
use crate::optim::{Optimizer, OptimizerConfig};
use crate::rng::{derive_seed, rng_from};
use checkpoint::Checkpoint;
use metrics::{
    compute_metrics, predictions_from_logits, softmax_cross_entropy, Averaging, ConfusionMatrix,
    MetricsReport,
};

/// Stream tag for per-epoch shuffling.
const TAG_EPOCH: u64 = 0x4550;
/// Stream tag for per-image augmentation randomness.
const TAG_AUG: u64 = 0x4155;

/// One logged optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainLogRow {
    /// Global step counter, starting at 1.
    pub step: usize,
    /// Zero-based epoch the step belongs to.
    pub epoch: usize,
    /// Batch loss before the update.
    pub loss: f64,
    pub learning_rate: f64,
    /// Median trust ratio applied this step (1.0 under plain SGD).
    pub trust_ratio_median: f64,
}

/// Contrastive pretraining configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Softmax temperature of the contrastive loss.
    pub temperature: f64,
    pub optimizer: OptimizerConfig,
    pub augment: PretextAugmentConfig,
    pub encoder: EncoderConfig,
    pub projection: ProjectionHeadConfig,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        let encoder = EncoderConfig::default();
        // Views must come out at the encoder's input resolution.
        let augment = PretextAugmentConfig {
            output_size: encoder.input_size,
            ..Default::default()
        };
        PretrainConfig {
            epochs: 1,
            batch_size: 128,
            temperature: 0.5,
            optimizer: OptimizerConfig::Lars(Default::default()),
            augment,
            encoder,
            projection: ProjectionHeadConfig::default(),
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidTrainConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidTrainConfig(format!(
                "contrastive batch_size must be >= 2 (got {})",
                self.batch_size
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidTrainConfig(format!(
                "temperature must be positive (got {})",
                self.temperature
            )));
        }
        if self.augment.output_size != self.encoder.input_size {
            return Err(Error::InvalidTrainConfig(format!(
                "augmentation output {:?} does not match encoder input {:?}",
                self.augment.output_size, self.encoder.input_size
            )));
        }
        self.optimizer.validate()?;
        self.encoder.validate()
    }
}

/// Result of a pretraining run.
#[derive(Debug)]
pub struct PretrainOutput {
    pub checkpoint: Checkpoint,
    pub log: Vec<TrainLogRow>,
    /// Mean contrastive loss over the final epoch.
    pub final_loss: f64,
}

/// Pretrain an encoder + projection head on raw images.
///
/// The signature takes images only — no manifest, no labels — which is the
/// whole point of the self-supervised phase. Batches are shuffled per epoch;
/// a trailing batch with fewer than two images is dropped because it cannot
/// form enough contrastive pairs to be informative.
pub fn pretrain(images: &[ImageTensor], cfg: &PretrainConfig) -> Result<PretrainOutput> {
    cfg.validate()?;
    if images.len() < 2 {
        return Err(Error::InvalidTrainConfig(format!(
            "pretraining needs at least 2 images (got {})",
            images.len()
        )));
    }
    let pipeline = build_pretext_pipeline(&cfg.augment)?;
    let mut model = build_model(
        cfg.encoder,
        HeadConfig::Projection(cfg.projection.clone()),
        cfg.seed,
    )?;
    let mut optimizer = Optimizer::new(cfg.optimizer)?;

    let mut log = Vec::new();
    let mut step = 0usize;
    let mut final_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(&mut rng_from(cfg.seed, &[TAG_EPOCH, epoch as u64]));

        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            // Interleave the two views of each image: rows (2k, 2k+1) are a
            // positive pair, which is the layout the loss expects.
            let mut views: Vec<ImageTensor> = Vec::with_capacity(2 * chunk.len());
            for &idx in chunk {
                let pair_seed = derive_seed(cfg.seed, &[TAG_AUG, epoch as u64, idx as u64]);
                let (a, b) = make_view_pair(&images[idx], &pipeline, pair_seed)?;
                views.push(a);
                views.push(b);
            }
            let refs: Vec<&ImageTensor> = views.iter().collect();
            let batch = batch_from_images(&refs);

            model.zero_grads();
            let embeddings = model.forward(&batch, true);
            let out = nt_xent_loss(&embeddings, cfg.temperature)?;
            model.backward(&out.grad);
            let stats = optimizer.step(&mut model)?;

            step += 1;
            epoch_loss += out.loss;
            epoch_batches += 1;
            log.push(TrainLogRow {
                step,
                epoch,
                loss: out.loss,
                learning_rate: cfg.optimizer.learning_rate(),
                trust_ratio_median: stats.trust_median,
            });
        }
        if epoch_batches == 0 {
            return Err(Error::InvalidTrainConfig(
                "no usable batches (all smaller than 2 images)".into(),
            ));
        }
        final_loss = epoch_loss / epoch_batches as f64;
    }

    let mut summary = BTreeMap::new();
    summary.insert("final_loss".to_string(), final_loss);
    summary.insert("steps".to_string(), step as f64);
    let checkpoint = Checkpoint::from_model(
        &mut model,
        "pretrain",
        cfg.epochs,
        cfg.seed,
        summary,
    );
    Ok(PretrainOutput {
        checkpoint,
        log,
        final_loss,
    })
}

/// Whether fine-tuning updates the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneMode {
    /// Freeze the encoder; train the classifier head only.
    Probe,
    /// Train encoder and head end to end.
    Full,
}

/// Where the fine-tuning encoder weights come from.
#[derive(Debug)]
pub enum EncoderInit<'a> {
    /// Copy encoder weights from a pretraining checkpoint.
    Pretrained(&'a Checkpoint),
    /// Keep the seeded random initialization (the from-scratch baseline).
    Random,
}

/// Supervised fine-tuning configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub label_scheme: LabelScheme,
    /// Fraction of the train split to keep (stratified, nested across runs
    /// that share a seed).
    pub label_fraction: f64,
    pub mode: FinetuneMode,
    pub optimizer: OptimizerConfig,
    pub augment: FinetuneAugmentConfig,
    pub encoder: EncoderConfig,
    /// Hidden width of the classifier head; 0 means a linear head.
    pub head_hidden_dim: usize,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        let encoder = EncoderConfig::default();
        // Views must come out at the encoder's input resolution.
        let augment = FinetuneAugmentConfig {
            output_size: encoder.input_size,
            ..Default::default()
        };
        FinetuneConfig {
            epochs: 1,
            batch_size: 128,
            label_scheme: LabelScheme::default(),
            label_fraction: 1.0,
            mode: FinetuneMode::Probe,
            optimizer: OptimizerConfig::Lars(Default::default()),
            augment,
            encoder,
            head_hidden_dim: 512,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidTrainConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidTrainConfig("batch_size must be >= 1".into()));
        }
        if self.augment.output_size != self.encoder.input_size {
            return Err(Error::InvalidTrainConfig(format!(
                "augmentation output {:?} does not match encoder input {:?}",
                self.augment.output_size, self.encoder.input_size
            )));
        }
        self.optimizer.validate()?;
        self.encoder.validate()
    }

    /// The classifier head this config builds for `num_grades` grades.
    pub fn head_config(&self, num_grades: usize) -> ClassifierHeadConfig {
        ClassifierHeadConfig {
            num_classes: self.label_scheme.num_classes(num_grades),
            hidden_dim: self.head_hidden_dim,
        }
    }
}

/// Result of a fine-tuning run.
#[derive(Debug)]
pub struct FinetuneOutput {
    pub checkpoint: Checkpoint,
    pub log: Vec<TrainLogRow>,
    /// Mean cross-entropy over the final epoch.
    pub final_loss: f64,
    /// Ids actually trained on after fraction subsetting.
    pub train_ids: Vec<String>,
}

/// Fine-tune a classifier on a labelled split.
///
/// Applies the label scheme, keeps `label_fraction` of the train ids
/// (stratified), builds the model, optionally loads pretrained encoder
/// weights, and runs the supervised loop. In probe mode the encoder stays in
/// inference mode (batch-norm running statistics frozen) and only `head.*`
/// parameters receive updates.
pub fn finetune(
    manifest: &DatasetManifest,
    split: &SplitSpec,
    init: EncoderInit<'_>,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutput> {
    cfg.validate()?;
    let labelled = apply_label_scheme(manifest, cfg.label_scheme)?;
    let subset = subset_by_fraction(split, &labelled, cfg.label_fraction, cfg.seed)?;
    if subset.train_ids.is_empty() {
        return Err(Error::InvalidTrainConfig("empty training split".into()));
    }

    let head = cfg.head_config(labelled.num_grades);
    let mut model = build_model(cfg.encoder, HeadConfig::Classifier(head), cfg.seed)?;
    if let EncoderInit::Pretrained(ck) = init {
        ck.load_encoder_into(&mut model)?;
    }
    let mut optimizer = Optimizer::new(cfg.optimizer)?;
    let pipeline = build_finetune_pipeline(&cfg.augment, &cfg.label_scheme)?;

    // Preload the subset once; indices below refer to this vector.
    let mut images = Vec::with_capacity(subset.train_ids.len());
    let mut labels = Vec::with_capacity(subset.train_ids.len());
    for id in &subset.train_ids {
        let sample_idx = labelled
            .index_of(id)
            .ok_or_else(|| Error::UnknownSampleId { id: id.clone() })?;
        let sample = &labelled.samples[sample_idx];
        images.push(load_image(&labelled.resolve_image(sample))?);
        labels.push(sample.label.expect("labels were just applied"));
    }

    let train_encoder = cfg.mode == FinetuneMode::Full;
    let mut log = Vec::new();
    let mut step = 0usize;
    let mut final_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(&mut rng_from(cfg.seed, &[TAG_EPOCH, epoch as u64]));

        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch_views: Vec<ImageTensor> = Vec::with_capacity(chunk.len());
            let mut batch_labels: Vec<usize> = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let aug_seed = derive_seed(cfg.seed, &[TAG_AUG, epoch as u64, idx as u64]);
                batch_views.push(pipeline.apply(&images[idx], aug_seed)?);
                batch_labels.push(labels[idx]);
            }
            let refs: Vec<&ImageTensor> = batch_views.iter().collect();
            let batch = batch_from_images(&refs);

            model.zero_grads();
            let logits = model.forward(&batch, train_encoder);
            let (loss, grad) = softmax_cross_entropy(&logits, &batch_labels)?;
            let stats = if train_encoder {
                model.backward(&grad);
                optimizer.step(&mut model)?
            } else {
                model.backward_head_only(&grad);
                optimizer.step_filtered(&mut model, &|name| name.starts_with("head."))?
            };

            step += 1;
            epoch_loss += loss;
            epoch_batches += 1;
            log.push(TrainLogRow {
                step,
                epoch,
                loss,
                learning_rate: cfg.optimizer.learning_rate(),
                trust_ratio_median: stats.trust_median,
            });
        }
        final_loss = epoch_loss / epoch_batches as f64;
    }

    let mut summary = BTreeMap::new();
    summary.insert("final_loss".to_string(), final_loss);
    summary.insert("label_fraction".to_string(), cfg.label_fraction);
    summary.insert("train_samples".to_string(), images.len() as f64);
    let checkpoint = Checkpoint::from_model(
        &mut model,
        "finetune",
        cfg.epochs,
        cfg.seed,
        summary,
    );
    Ok(FinetuneOutput {
        checkpoint,
        log,
        final_loss,
        train_ids: subset.train_ids,
    })
}

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PredictionRow {
    pub id: String,
    /// Original ordinal grade from the manifest.
    pub grade: usize,
    /// Task label after applying the scheme (the ground truth).
    pub label: usize,
    pub predicted: usize,
}

/// Result of [`evaluate`].
#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub report: MetricsReport,
    pub predictions: Vec<PredictionRow>,
    /// Mean cross-entropy over the evaluated ids.
    pub mean_loss: f64,
}

/// Deterministic inference pipeline matching a training augmentation config:
/// resize only for the binary task, resize + channel normalization for the
/// multiclass task (whose training pipeline normalizes).
pub fn eval_pipeline_for(
    augment: &FinetuneAugmentConfig,
    scheme: &LabelScheme,
) -> Result<AugmentationPipeline> {
    let normalize = match scheme {
        LabelScheme::Binary { .. } => None,
        LabelScheme::Multiclass => Some((augment.normalize_mean, augment.normalize_std)),
    };
    build_eval_pipeline(augment.output_size, normalize)
}

/// Run inference over `ids` and score predictions against scheme labels.
///
/// Averaging follows the task: positive-class metrics for binary, macro
/// averages for multiclass.
pub fn evaluate(
    model: &mut ModelBundle,
    manifest: &DatasetManifest,
    ids: &[String],
    scheme: &LabelScheme,
    augment: &FinetuneAugmentConfig,
    batch_size: usize,
) -> Result<EvalOutput> {
    if ids.is_empty() {
        return Err(Error::InvalidTrainConfig("no ids to evaluate".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidTrainConfig("batch_size must be >= 1".into()));
    }
    let labelled = apply_label_scheme(manifest, *scheme)?;
    let num_classes = scheme.num_classes(labelled.num_grades);
    let pipeline = eval_pipeline_for(augment, scheme)?;

    let mut cm = ConfusionMatrix::new(num_classes)?;
    let mut predictions = Vec::with_capacity(ids.len());
    let mut loss_sum = 0.0;
    let mut loss_batches = 0usize;
    for chunk in ids.chunks(batch_size) {
        let mut views = Vec::with_capacity(chunk.len());
        let mut chunk_labels = Vec::with_capacity(chunk.len());
        let mut chunk_grades = Vec::with_capacity(chunk.len());
        for id in chunk {
            let sample_idx = labelled
                .index_of(id)
                .ok_or_else(|| Error::UnknownSampleId { id: id.clone() })?;
            let sample = &labelled.samples[sample_idx];
            // The pipeline is deterministic, so the seed value is irrelevant.
            views.push(pipeline.apply(&load_image(&labelled.resolve_image(sample))?, 0)?);
            chunk_labels.push(sample.label.expect("labels were just applied"));
            chunk_grades.push(sample.grade);
        }
        let refs: Vec<&ImageTensor> = views.iter().collect();
        let logits = model.forward(&batch_from_images(&refs), false);
        let (loss, _) = softmax_cross_entropy(&logits, &chunk_labels)?;
        loss_sum += loss;
        loss_batches += 1;
        let preds = predictions_from_logits(&logits);
        for (((id, &label), &grade), &pred) in
            chunk.iter().zip(&chunk_labels).zip(&chunk_grades).zip(&preds)
        {
            cm.record(label, pred)?;
            predictions.push(PredictionRow {
                id: id.clone(),
                grade,
                label,
                predicted: pred,
            });
        }
    }

    let averaging = match scheme {
        LabelScheme::Binary { .. } => Averaging::BinaryPositive,
        LabelScheme::Multiclass => Averaging::Macro,
    };
    let report = compute_metrics(&cm, averaging)?;
    Ok(EvalOutput {
        report,
        predictions,
        mean_loss: loss_sum / loss_batches as f64,
    })
}

/// Rebuild the model a checkpoint describes and load every tensor into it.
pub fn model_from_checkpoint(ck: &Checkpoint) -> Result<ModelBundle> {
    let mut model = build_model(ck.meta.encoder, ck.meta.head.clone(), ck.meta.seed)?;
    ck.load_all_into(&mut model)?;
    Ok(model)
}

/// Load and batch the images behind `ids` in manifest resolution order.
/// Shared by pretraining callers that feed [`pretrain`] from a manifest while
/// keeping the training function itself label-free.
pub fn collect_images(manifest: &DatasetManifest, ids: &[String]) -> Result<Vec<ImageTensor>> {
    let mut images = Vec::with_capacity(ids.len());
    for id in ids {
        let idx = manifest
            .index_of(id)
            .ok_or_else(|| Error::UnknownSampleId { id: id.clone() })?;
        images.push(load_image(
            &manifest.resolve_image(&manifest.samples[idx]),
        )?);
    }
    Ok(images)
}

/// Mean embedding table used by tests and diagnostics: encoder features
/// (pre-head) for each id, in order.
pub fn encoder_features(
    model: &mut ModelBundle,
    images: &[ImageTensor],
    pipeline: &AugmentationPipeline,
    batch_size: usize,
) -> Result<Array2<f64>> {
    let feature_dim = model.encoder.feature_dim();
    let mut out = Array2::zeros((images.len(), feature_dim));
    for (chunk_idx, chunk) in images.chunks(batch_size.max(1)).enumerate() {
        let mut views = Vec::with_capacity(chunk.len());
        for img in chunk {
            views.push(pipeline.apply(img, 0)?);
        }
        let refs: Vec<&ImageTensor> = views.iter().collect();
        let feats = model.encoder.forward(&batch_from_images(&refs), false);
        for (row_in_chunk, feat) in feats.rows().into_iter().enumerate() {
            let row = chunk_idx * batch_size.max(1) + row_in_chunk;
            out.row_mut(row).assign(&feat);
        }
    }
    Ok(out)
}
