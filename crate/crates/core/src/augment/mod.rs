//! Seeded augmentation pipelines.
//!
//! A pipeline is an ordered list of [`TransformStage`]s, each firing with its
//! own probability. Applying a pipeline is a pure function of
//! `(pipeline, image, seed)`: one ChaCha stream drives both the fire/skip
//! decisions and any stage parameters (blur sigma, jitter factors, crop
//! window), so a run can be replayed exactly from its logged seeds.
//!
//! Contrastive pretraining consumes two independently seeded applications of
//! the same pipeline per image ([`make_view_pair`]); fine-tuning uses a single
//! application; evaluation uses a deterministic resize(+normalize) pipeline.

pub mod ops;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datasets::{ImageTensor, LabelScheme};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

const TAG_VIEW: u64 = 0x5649;

/// Per-channel statistics of the pooled fundus datasets, used by the default
/// multiclass normalization stage.
pub const FUNDUS_MEAN: [f64; 3] = [0.425, 0.297, 0.212];
pub const FUNDUS_STD: [f64; 3] = [0.276, 0.202, 0.168];

/// Color jitter strengths. Factors are sampled per application:
/// brightness/contrast/saturation from `[max(0, 1-x), 1+x]`, hue shift from
/// `[-hue, hue]` turns.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JitterParams {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl Default for JitterParams {
    fn default() -> Self {
        JitterParams {
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.4,
            hue: 0.1,
        }
    }
}

/// Random rotation + translation ranges. `degrees` is an inclusive interval;
/// `translate` gives the maximum shift as a fraction of width and height.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AffineParams {
    pub degrees: (f64, f64),
    pub translate: (f64, f64),
}

impl Default for AffineParams {
    fn default() -> Self {
        AffineParams {
            degrees: (-180.0, 180.0),
            translate: (0.2, 0.2),
        }
    }
}

/// What a stage does when it fires.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StageKind {
    Resize {
        height: usize,
        width: usize,
    },
    HorizontalFlip,
    VerticalFlip,
    Grayscale,
    GaussianBlur {
        kernel: (usize, usize),
        sigma: (f64, f64),
    },
    ColorJitter(JitterParams),
    RandomAffine(AffineParams),
    /// Crop a random window and resize back to the pipeline output size.
    /// `scale` bounds the retained area fraction. With an explicit `size`
    /// the window has exactly that size and is not resized afterwards.
    RandomResizedCrop {
        scale: (f64, f64),
        size: Option<(usize, usize)>,
    },
    Normalize {
        mean: [f64; 3],
        std: [f64; 3],
    },
}

impl StageKind {
    fn name(&self) -> &'static str {
        match self {
            StageKind::Resize { .. } => "resize",
            StageKind::HorizontalFlip => "horizontal_flip",
            StageKind::VerticalFlip => "vertical_flip",
            StageKind::Grayscale => "grayscale",
            StageKind::GaussianBlur { .. } => "gaussian_blur",
            StageKind::ColorJitter(_) => "color_jitter",
            StageKind::RandomAffine(_) => "random_affine",
            StageKind::RandomResizedCrop { .. } => "random_resized_crop",
            StageKind::Normalize { .. } => "normalize",
        }
    }
}

/// One pipeline entry: an operation plus its firing probability.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransformStage {
    pub kind: StageKind,
    pub probability: f64,
}

impl TransformStage {
    /// Stage firing on every application.
    pub fn always(kind: StageKind) -> Self {
        TransformStage {
            kind,
            probability: 1.0,
        }
    }

    /// Stage firing with probability `p`.
    pub fn with_probability(kind: StageKind, p: f64) -> Self {
        TransformStage {
            kind,
            probability: p,
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::InvalidStage {
                stage: self.kind.name().to_string(),
                message,
            })
        };
        if !(0.0..=1.0).contains(&self.probability) || !self.probability.is_finite() {
            return fail(format!(
                "probability {} outside [0, 1]",
                self.probability
            ));
        }
        match &self.kind {
            StageKind::Resize { height, width } => {
                if *height == 0 || *width == 0 {
                    return fail("resize target must be positive".to_string());
                }
            }
            StageKind::GaussianBlur { kernel, sigma } => {
                if kernel.0 == 0 || kernel.1 == 0 || kernel.0 % 2 == 0 || kernel.1 % 2 == 0 {
                    return fail(format!("kernel {kernel:?} must be odd and positive"));
                }
                if !(sigma.0 > 0.0 && sigma.1 >= sigma.0) {
                    return fail(format!("sigma range {sigma:?} must be 0 < lo <= hi"));
                }
            }
            StageKind::ColorJitter(j) => {
                for (value, name) in [
                    (j.brightness, "brightness"),
                    (j.contrast, "contrast"),
                    (j.saturation, "saturation"),
                ] {
                    if value < 0.0 {
                        return fail(format!("{name} strength {value} must be >= 0"));
                    }
                }
                if !(0.0..=0.5).contains(&j.hue) {
                    return fail(format!("hue strength {} outside [0, 0.5]", j.hue));
                }
            }
            StageKind::RandomAffine(a) => {
                if a.degrees.0 > a.degrees.1 {
                    return fail(format!("degree range {:?} is inverted", a.degrees));
                }
                if !(0.0..=1.0).contains(&a.translate.0) || !(0.0..=1.0).contains(&a.translate.1) {
                    return fail(format!("translate {:?} outside [0, 1]", a.translate));
                }
            }
            StageKind::RandomResizedCrop { scale, size } => {
                if !(scale.0 > 0.0 && scale.0 <= scale.1 && scale.1 <= 1.0) {
                    return fail(format!("scale range {scale:?} must satisfy 0 < lo <= hi <= 1"));
                }
                if let Some((h, w)) = size {
                    if *h == 0 || *w == 0 {
                        return fail("explicit crop size must be positive".to_string());
                    }
                }
            }
            StageKind::Normalize { std, .. }
                if std.iter().any(|&s| s <= 0.0) => {
                    return fail(format!("std {std:?} must be strictly positive"));
                }
            _ => {}
        }
        Ok(())
    }
}

/// An ordered, validated stage list with a guaranteed output size.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentationPipeline {
    stages: Vec<TransformStage>,
    output_size: (usize, usize),
}

impl AugmentationPipeline {
    /// Validate and build. Output shape is `(output_size.0, output_size.1, 3)`
    /// regardless of which stages fire.
    pub fn new(stages: Vec<TransformStage>, output_size: (usize, usize)) -> Result<Self> {
        if output_size.0 == 0 || output_size.1 == 0 {
            return Err(Error::InvalidStage {
                stage: "pipeline".to_string(),
                message: "output size must be positive".to_string(),
            });
        }
        for stage in &stages {
            stage.validate()?;
        }
        Ok(AugmentationPipeline {
            stages,
            output_size,
        })
    }

    pub fn stages(&self) -> &[TransformStage] {
        &self.stages
    }

    pub fn output_size(&self) -> (usize, usize) {
        self.output_size
    }

    /// True when no stage draws randomness or skips probabilistically (such a
    /// pipeline maps equal inputs to equal outputs with any seed).
    pub fn is_deterministic(&self) -> bool {
        self.stages.iter().all(|s| {
            (s.probability == 0.0 || s.probability == 1.0)
                && !matches!(
                    s.kind,
                    StageKind::GaussianBlur { .. }
                        | StageKind::ColorJitter(_)
                        | StageKind::RandomAffine(_)
                        | StageKind::RandomResizedCrop { .. }
                )
        })
    }

    /// Apply to one image under `seed`.
    pub fn apply(&self, image: &ImageTensor, seed: u64) -> Result<ImageTensor> {
        Ok(self.apply_traced(image, seed)?.0)
    }

    /// Apply and also report which stages fired (mainly for tests and
    /// frequency audits).
    pub fn apply_traced(
        &self,
        image: &ImageTensor,
        seed: u64,
    ) -> Result<(ImageTensor, Vec<bool>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = image.clone();
        let mut fired = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let fire = rng.random::<f64>() < stage.probability;
            fired.push(fire);
            if fire {
                img = self.apply_stage(&stage.kind, img, &mut rng)?;
            }
        }
        let (h, w, _) = img.dim();
        if (h, w) != self.output_size {
            img = ops::resize_bilinear(&img, self.output_size.0, self.output_size.1);
        }
        Ok((img, fired))
    }

    fn apply_stage(
        &self,
        kind: &StageKind,
        img: ImageTensor,
        rng: &mut ChaCha8Rng,
    ) -> Result<ImageTensor> {
        let out = match kind {
            StageKind::Resize { height, width } => ops::resize_bilinear(&img, *height, *width),
            StageKind::HorizontalFlip => ops::hflip(&img),
            StageKind::VerticalFlip => ops::vflip(&img),
            StageKind::Grayscale => ops::grayscale(&img),
            StageKind::GaussianBlur { kernel, sigma } => {
                let s = rng.random_range(sigma.0..=sigma.1);
                ops::gaussian_blur(&img, kernel.0, kernel.1, s)
            }
            StageKind::ColorJitter(j) => {
                let factor = |rng: &mut ChaCha8Rng, strength: f64| {
                    let lo = (1.0 - strength).max(0.0);
                    rng.random_range(lo..=1.0 + strength)
                };
                let fb = factor(rng, j.brightness);
                let fc = factor(rng, j.contrast);
                let fs = factor(rng, j.saturation);
                let dh = rng.random_range(-j.hue..=j.hue);
                let mut out = ops::adjust_brightness(&img, fb);
                out = ops::adjust_contrast(&out, fc);
                out = ops::adjust_saturation(&out, fs);
                if j.hue > 0.0 {
                    out = ops::adjust_hue(&out, dh);
                }
                out
            }
            StageKind::RandomAffine(a) => {
                let (h, w, _) = img.dim();
                let angle = rng.random_range(a.degrees.0..=a.degrees.1);
                let tx = rng.random_range(-a.translate.0 * w as f64..=a.translate.0 * w as f64);
                let ty = rng.random_range(-a.translate.1 * h as f64..=a.translate.1 * h as f64);
                ops::affine(&img, angle, tx, ty)
            }
            StageKind::RandomResizedCrop { scale, size } => {
                let (h, w, _) = img.dim();
                let (ch, cw) = match size {
                    Some((sh, sw)) => {
                        if *sh > h || *sw > w {
                            return Err(Error::CropTooLarge {
                                target: (*sh, *sw),
                                image: (h, w),
                            });
                        }
                        (*sh, *sw)
                    }
                    None => {
                        let side = rng.random_range(scale.0..=scale.1).sqrt();
                        (
                            ((h as f64 * side).round() as usize).clamp(1, h),
                            ((w as f64 * side).round() as usize).clamp(1, w),
                        )
                    }
                };
                let top = rng.random_range(0..=h - ch);
                let left = rng.random_range(0..=w - cw);
                if size.is_some() {
                    ops::crop_resize(&img, top, left, ch, cw, ch, cw)
                } else {
                    ops::crop_resize(
                        &img,
                        top,
                        left,
                        ch,
                        cw,
                        self.output_size.0,
                        self.output_size.1,
                    )
                }
            }
            StageKind::Normalize { mean, std } => ops::normalize(&img, *mean, *std),
        };
        Ok(out)
    }

    /// Canonical multi-line description (stage order, parameters,
    /// probabilities) for run logs.
    pub fn describe(&self) -> String {
        let mut out = format!(
            "output {}x{}\n",
            self.output_size.0, self.output_size.1
        );
        for (i, stage) in self.stages.iter().enumerate() {
            out.push_str(&format!(
                "{}. {} p={} {:?}\n",
                i + 1,
                stage.kind.name(),
                stage.probability,
                stage.kind
            ));
        }
        out
    }
}

/// Produce the two augmented views of one image used as a contrastive
/// positive pair. The views use sub-seeds derived from `seed`, so the pair is
/// reproducible while the two views draw independent randomness.
pub fn make_view_pair(
    image: &ImageTensor,
    pipeline: &AugmentationPipeline,
    seed: u64,
) -> Result<(ImageTensor, ImageTensor)> {
    let a = pipeline.apply(image, derive_seed(seed, &[TAG_VIEW, 0]))?;
    let b = pipeline.apply(image, derive_seed(seed, &[TAG_VIEW, 1]))?;
    Ok((a, b))
}

/// Configuration of the pretraining pipeline. Defaults follow the published
/// recipe: resize, horizontal/vertical flips at p=0.5, grayscale at p=0.2,
/// and a 21x21 Gaussian blur at p=0.5 with sigma drawn from [0.1, 2].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PretextAugmentConfig {
    pub output_size: (usize, usize),
    pub hflip_p: f64,
    pub vflip_p: f64,
    pub grayscale_p: f64,
    pub blur_p: f64,
    pub blur_kernel: (usize, usize),
    pub blur_sigma: (f64, f64),
    /// Optional random-resized-crop scale range, off by default.
    pub crop_scale: Option<(f64, f64)>,
    /// Optional color jitter, off by default.
    pub jitter: Option<JitterParams>,
    /// Optional random affine, off by default.
    pub affine: Option<AffineParams>,
}

impl Default for PretextAugmentConfig {
    fn default() -> Self {
        PretextAugmentConfig {
            output_size: (224, 224),
            hflip_p: 0.5,
            vflip_p: 0.5,
            grayscale_p: 0.2,
            blur_p: 0.5,
            blur_kernel: (21, 21),
            blur_sigma: (0.1, 2.0),
            crop_scale: None,
            jitter: None,
            affine: None,
        }
    }
}

/// Build the two-view pretraining pipeline.
pub fn build_pretext_pipeline(cfg: &PretextAugmentConfig) -> Result<AugmentationPipeline> {
    let mut stages = vec![TransformStage::always(StageKind::Resize {
        height: cfg.output_size.0,
        width: cfg.output_size.1,
    })];
    if let Some(scale) = cfg.crop_scale {
        stages.push(TransformStage::always(StageKind::RandomResizedCrop {
            scale,
            size: None,
        }));
    }
    stages.push(TransformStage::with_probability(
        StageKind::HorizontalFlip,
        cfg.hflip_p,
    ));
    stages.push(TransformStage::with_probability(
        StageKind::VerticalFlip,
        cfg.vflip_p,
    ));
    if let Some(jitter) = cfg.jitter {
        stages.push(TransformStage::always(StageKind::ColorJitter(jitter)));
    }
    if let Some(affine) = cfg.affine {
        stages.push(TransformStage::always(StageKind::RandomAffine(affine)));
    }
    stages.push(TransformStage::with_probability(
        StageKind::Grayscale,
        cfg.grayscale_p,
    ));
    stages.push(TransformStage::with_probability(
        StageKind::GaussianBlur {
            kernel: cfg.blur_kernel,
            sigma: cfg.blur_sigma,
        },
        cfg.blur_p,
    ));
    AugmentationPipeline::new(stages, cfg.output_size)
}

/// Configuration of the fine-tuning pipelines. The binary task uses resize +
/// random crop only; the multiclass task adds flips, jitter, affine,
/// grayscale, and channel normalization.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FinetuneAugmentConfig {
    pub output_size: (usize, usize),
    pub crop_scale: (f64, f64),
    pub hflip_p: f64,
    pub jitter: JitterParams,
    pub affine: AffineParams,
    pub grayscale_p: f64,
    pub normalize_mean: [f64; 3],
    pub normalize_std: [f64; 3],
}

impl Default for FinetuneAugmentConfig {
    fn default() -> Self {
        FinetuneAugmentConfig {
            output_size: (224, 224),
            crop_scale: (0.8, 1.0),
            hflip_p: 0.5,
            jitter: JitterParams::default(),
            affine: AffineParams::default(),
            grayscale_p: 0.2,
            normalize_mean: FUNDUS_MEAN,
            normalize_std: FUNDUS_STD,
        }
    }
}

/// Build the fine-tuning pipeline for the given task.
pub fn build_finetune_pipeline(
    cfg: &FinetuneAugmentConfig,
    scheme: &LabelScheme,
) -> Result<AugmentationPipeline> {
    let resize = TransformStage::always(StageKind::Resize {
        height: cfg.output_size.0,
        width: cfg.output_size.1,
    });
    let stages = match scheme {
        LabelScheme::Binary { .. } => vec![
            resize,
            TransformStage::always(StageKind::RandomResizedCrop {
                scale: cfg.crop_scale,
                size: None,
            }),
        ],
        LabelScheme::Multiclass => vec![
            resize,
            TransformStage::with_probability(StageKind::HorizontalFlip, cfg.hflip_p),
            TransformStage::always(StageKind::ColorJitter(cfg.jitter)),
            TransformStage::always(StageKind::RandomAffine(cfg.affine)),
            TransformStage::with_probability(StageKind::Grayscale, cfg.grayscale_p),
            TransformStage::always(StageKind::Normalize {
                mean: cfg.normalize_mean,
                std: cfg.normalize_std,
            }),
        ],
    };
    AugmentationPipeline::new(stages, cfg.output_size)
}

/// Deterministic evaluation pipeline: resize, plus the normalization stage
/// when the training pipeline used one.
pub fn build_eval_pipeline(
    output_size: (usize, usize),
    normalize: Option<([f64; 3], [f64; 3])>,
) -> Result<AugmentationPipeline> {
    let mut stages = vec![TransformStage::always(StageKind::Resize {
        height: output_size.0,
        width: output_size.1,
    })];
    if let Some((mean, std)) = normalize {
        stages.push(TransformStage::always(StageKind::Normalize { mean, std }));
    }
    AugmentationPipeline::new(stages, output_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array3;

    fn test_image(h: usize, w: usize) -> ImageTensor {
        Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
            ((y * 131 + x * 17 + c * 47) % 251) as f64 / 250.0
        })
    }

    #[test]
    fn default_pretext_pipeline_has_five_stages() {
        let p = build_pretext_pipeline(&PretextAugmentConfig::default()).unwrap();
        assert_eq!(p.stages().len(), 5);
        assert!(matches!(
            p.stages()[0].kind,
            StageKind::Resize { height: 224, width: 224 }
        ));
        match &p.stages()[4].kind {
            StageKind::GaussianBlur { kernel, sigma } => {
                assert_eq!(*kernel, (21, 21));
                assert_eq!(*sigma, (0.1, 2.0));
            }
            other => panic!("expected blur last, found {other:?}"),
        }
        assert_eq!(p.stages()[4].probability, 0.5);
    }

    #[test]
    fn binary_finetune_pipeline_is_resize_plus_crop() {
        let p = build_finetune_pipeline(
            &FinetuneAugmentConfig::default(),
            &LabelScheme::Binary { threshold: 1 },
        )
        .unwrap();
        assert_eq!(p.stages().len(), 2);
        assert!(matches!(p.stages()[1].kind, StageKind::RandomResizedCrop { .. }));
        assert!(!p
            .stages()
            .iter()
            .any(|s| matches!(s.kind, StageKind::Normalize { .. })));
    }

    #[test]
    fn multiclass_finetune_pipeline_has_jitter_and_normalize() {
        let p =
            build_finetune_pipeline(&FinetuneAugmentConfig::default(), &LabelScheme::Multiclass)
                .unwrap();
        match &p.stages()[2].kind {
            StageKind::ColorJitter(j) => assert_eq!(j.brightness, 0.4),
            other => panic!("expected jitter third, found {other:?}"),
        }
        match &p.stages().last().unwrap().kind {
            StageKind::Normalize { mean, .. } => {
                assert_abs_diff_eq!(mean[0], 0.425, epsilon = 1e-12)
            }
            other => panic!("expected normalize last, found {other:?}"),
        }
    }

    #[test]
    fn same_seed_same_output_bitwise() {
        let p = build_pretext_pipeline(&PretextAugmentConfig {
            output_size: (32, 32),
            ..Default::default()
        })
        .unwrap();
        let img = test_image(48, 40);
        let a = p.apply(&img, 1234).unwrap();
        let b = p.apply(&img, 1234).unwrap();
        assert_eq!(a, b);
        let c = p.apply(&img, 1235).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_probability_pipeline_at_input_size_is_identity() {
        let img = test_image(40, 40);
        let stages = vec![
            TransformStage::with_probability(
                StageKind::Resize { height: 40, width: 40 },
                0.0,
            ),
            TransformStage::with_probability(StageKind::HorizontalFlip, 0.0),
            TransformStage::with_probability(StageKind::Grayscale, 0.0),
            TransformStage::with_probability(
                StageKind::GaussianBlur { kernel: (21, 21), sigma: (0.1, 2.0) },
                0.0,
            ),
        ];
        let p = AugmentationPipeline::new(stages, (40, 40)).unwrap();
        assert_eq!(p.apply(&img, 7).unwrap(), img);
    }

    #[test]
    fn certain_hflip_applied_twice_restores_input() {
        let img = test_image(24, 24);
        let p = AugmentationPipeline::new(
            vec![TransformStage::always(StageKind::HorizontalFlip)],
            (24, 24),
        )
        .unwrap();
        let once = p.apply(&img, 0).unwrap();
        let twice = p.apply(&once, 1).unwrap();
        assert_ne!(once, img);
        assert_eq!(twice, img);
    }

    #[test]
    fn output_shape_matches_regardless_of_firing() {
        let p = build_pretext_pipeline(&PretextAugmentConfig {
            output_size: (36, 28),
            crop_scale: Some((0.8, 1.0)),
            ..Default::default()
        })
        .unwrap();
        for (h, w) in [(36, 28), (64, 64), (33, 57)] {
            for seed in 0..8 {
                let out = p.apply(&test_image(h, w), seed).unwrap();
                assert_eq!(out.dim(), (36, 28, 3));
            }
        }
    }

    #[test]
    fn firing_frequency_tracks_probability() {
        // 1000 independently seeded applications; each stage's firing rate
        // must sit within 4 * sqrt(p(1-p)/N) of its probability.
        let p = build_pretext_pipeline(&PretextAugmentConfig {
            output_size: (16, 16),
            ..Default::default()
        })
        .unwrap();
        let img = test_image(16, 16);
        let n = 1000;
        let mut fire_counts = vec![0usize; p.stages().len()];
        for seed in 0..n {
            let (_, fired) = p.apply_traced(&img, seed as u64).unwrap();
            for (count, f) in fire_counts.iter_mut().zip(fired) {
                *count += usize::from(f);
            }
        }
        for (stage, &count) in p.stages().iter().zip(&fire_counts) {
            let prob = stage.probability;
            let freq = count as f64 / n as f64;
            let tol = 4.0 * (prob * (1.0 - prob) / n as f64).sqrt();
            assert!(
                (freq - prob).abs() <= tol,
                "{}: frequency {freq} vs p={prob} (tol {tol})",
                stage.kind.name()
            );
        }
        // The p=0.5 horizontal flip specifically lands in [0.45, 0.55].
        let hflip_freq = fire_counts[1] as f64 / n as f64;
        assert!((0.45..=0.55).contains(&hflip_freq));
    }

    #[test]
    fn view_pairs_are_reproducible_and_distinct() {
        let p = build_pretext_pipeline(&PretextAugmentConfig {
            output_size: (24, 24),
            ..Default::default()
        })
        .unwrap();
        let img = test_image(32, 32);
        let (a1, b1) = make_view_pair(&img, &p, 42).unwrap();
        let (a2, b2) = make_view_pair(&img, &p, 42).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_ne!(a1, b1, "the two views must draw independent randomness");
    }

    #[test]
    fn explicit_crop_larger_than_image_errors() {
        let p = AugmentationPipeline::new(
            vec![TransformStage::always(StageKind::RandomResizedCrop {
                scale: (0.8, 1.0),
                size: Some((64, 64)),
            })],
            (64, 64),
        )
        .unwrap();
        let err = p.apply(&test_image(32, 32), 0).unwrap_err();
        assert!(matches!(err, Error::CropTooLarge { .. }));
    }

    #[test]
    fn invalid_stage_configs_are_rejected() {
        let bad = [
            TransformStage::with_probability(StageKind::HorizontalFlip, 1.5),
            TransformStage::always(StageKind::GaussianBlur {
                kernel: (20, 21),
                sigma: (0.1, 2.0),
            }),
            TransformStage::always(StageKind::GaussianBlur {
                kernel: (21, 21),
                sigma: (2.0, 0.1),
            }),
            TransformStage::always(StageKind::Normalize {
                mean: [0.5; 3],
                std: [0.5, 0.0, 0.5],
            }),
            TransformStage::always(StageKind::RandomResizedCrop {
                scale: (0.0, 1.0),
                size: None,
            }),
            TransformStage::always(StageKind::ColorJitter(JitterParams {
                hue: 0.7,
                ..Default::default()
            })),
        ];
        for stage in bad {
            assert!(
                AugmentationPipeline::new(vec![stage.clone()], (8, 8)).is_err(),
                "accepted invalid stage {stage:?}"
            );
        }
    }

    #[test]
    fn eval_pipeline_is_deterministic() {
        let with_norm = build_eval_pipeline((16, 16), Some((FUNDUS_MEAN, FUNDUS_STD))).unwrap();
        let without = build_eval_pipeline((16, 16), None).unwrap();
        assert!(with_norm.is_deterministic());
        assert!(without.is_deterministic());
        let img = test_image(20, 20);
        assert_eq!(
            with_norm.apply(&img, 1).unwrap(),
            with_norm.apply(&img, 999).unwrap()
        );
        let multiclass =
            build_finetune_pipeline(&FinetuneAugmentConfig::default(), &LabelScheme::Multiclass)
                .unwrap();
        assert!(!multiclass.is_deterministic());
    }

    #[test]
    fn pipeline_serde_round_trip() {
        let p = build_finetune_pipeline(&FinetuneAugmentConfig::default(), &LabelScheme::Multiclass)
            .unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: AugmentationPipeline = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn describe_lists_stages_in_order() {
        let p = build_pretext_pipeline(&PretextAugmentConfig::default()).unwrap();
        let text = p.describe();
        let resize_pos = text.find("resize").unwrap();
        let blur_pos = text.find("gaussian_blur").unwrap();
        assert!(resize_pos < blur_pos);
        assert!(text.contains("p=0.5"));
    }
}
