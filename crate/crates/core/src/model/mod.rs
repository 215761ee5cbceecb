//! Encoders, heads, and the bundle tying them together.
//!
//! An [`Encoder`] is a flat list of named ops (convolutions, batch norms,
//! rectifiers, pools, and skip-connection markers) ending in a global average
//! pool, so the same machinery drives both the small CPU-friendly CNN and the
//! 2048-feature residual reference network. Heads are dense stacks: a
//! projection head for contrastive pretraining, a classifier head for
//! fine-tuning. Parameters are reachable by name through visitors, which is
//! what the optimizer, the checkpoint format, and encoder transfer all build
//! on.

pub mod layers;

use std::collections::BTreeMap;

use ndarray::{s, Array2, Array4};
use rand_chacha::ChaCha8Rng;

use crate::datasets::ImageTensor;
use crate::error::{Error, Result};
use crate::rng::rng_from;
use layers::{AvgPool2, BatchNorm2d, Conv2d, GlobalAvgPool, MaxPool3, Mlp, ParamView, Relu};

const TAG_MODEL: u64 = 0x4d44;

/// Which encoder body to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Four conv–bn–relu blocks with 2x2 average pools, sized for CPU runs.
    SmallCnn,
    /// Bottleneck residual network with a [3, 4, 6, 3] block layout and a
    /// 2048-dimensional output, matching the standard 50-layer design.
    Resnet50,
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Architecture::SmallCnn => write!(f, "small_cnn"),
            Architecture::Resnet50 => write!(f, "resnet50"),
        }
    }
}

/// Encoder body configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub architecture: Architecture,
    /// Expected input image size `(height, width)`.
    pub input_size: (usize, usize),
    /// Encoder output width. Free (multiple of 8) for the small CNN; must be
    /// 2048 for the residual reference network.
    pub feature_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            architecture: Architecture::SmallCnn,
            input_size: (64, 64),
            feature_dim: 128,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.input_size;
        match self.architecture {
            Architecture::SmallCnn => {
                if self.feature_dim < 8 || !self.feature_dim.is_multiple_of(8) {
                    return Err(Error::InvalidModelConfig(format!(
                        "small_cnn feature_dim {} must be a multiple of 8 (channels double per block)",
                        self.feature_dim
                    )));
                }
                if h < 16 || w < 16 || h % 8 != 0 || w % 8 != 0 {
                    return Err(Error::InvalidModelConfig(format!(
                        "small_cnn input size ({h}, {w}) must be >= 16 and divisible by 8"
                    )));
                }
            }
            Architecture::Resnet50 => {
                if self.feature_dim != 2048 {
                    return Err(Error::InvalidModelConfig(format!(
                        "resnet50 always produces 2048 features, got feature_dim {}",
                        self.feature_dim
                    )));
                }
                if h < 32 || w < 32 {
                    return Err(Error::InvalidModelConfig(format!(
                        "resnet50 input size ({h}, {w}) must be at least 32"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Projection head (contrastive pretraining): a dense stack with rectifiers
/// between layers. `layer_dims` lists each layer's output width; when empty,
/// the head defaults to `[feature_dim, feature_dim / 2]` — the shape used by
/// the published recipe (2048 to 2048 to 1024 on the reference encoder).
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ProjectionHeadConfig {
    pub layer_dims: Vec<usize>,
}

impl ProjectionHeadConfig {
    fn resolved_dims(&self, feature_dim: usize) -> Vec<usize> {
        if self.layer_dims.is_empty() {
            vec![feature_dim, (feature_dim / 2).max(1)]
        } else {
            self.layer_dims.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.contains(&0) {
            return Err(Error::InvalidModelConfig(format!(
                "projection head dims {:?} contain a zero width",
                self.layer_dims
            )));
        }
        Ok(())
    }
}

fn default_hidden_dim() -> usize {
    512
}

/// Classifier head (fine-tuning): `feature_dim -> hidden_dim -> num_classes`
/// with a rectifier in between. `hidden_dim = 0` drops the hidden layer,
/// giving a purely linear probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ClassifierHeadConfig {
    pub num_classes: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
}

impl ClassifierHeadConfig {
    pub fn new(num_classes: usize) -> Self {
        ClassifierHeadConfig {
            num_classes,
            hidden_dim: default_hidden_dim(),
        }
    }

    /// A single linear layer from features to class scores.
    pub fn linear(num_classes: usize) -> Self {
        ClassifierHeadConfig {
            num_classes,
            hidden_dim: 0,
        }
    }

    fn resolved_dims(&self) -> Vec<usize> {
        if self.hidden_dim == 0 {
            vec![self.num_classes]
        } else {
            vec![self.hidden_dim, self.num_classes]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidModelConfig(format!(
                "classifier needs at least 2 classes, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }
}

/// Which head sits on the encoder.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadConfig {
    Projection(ProjectionHeadConfig),
    Classifier(ClassifierHeadConfig),
}

impl HeadConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            HeadConfig::Projection(_) => "projection",
            HeadConfig::Classifier(_) => "classifier",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            HeadConfig::Projection(c) => c.validate(),
            HeadConfig::Classifier(c) => c.validate(),
        }
    }
}

/// One encoder op. Skip connections are expressed with a stack: `SaveSkip`
/// pushes the current activation, `AddSkip` pops it (optionally through a
/// 1x1 conv + batch-norm projection) and adds it back in.
enum Op {
    Conv(Conv2d),
    Bn(BatchNorm2d),
    Relu(Relu),
    AvgPool(AvgPool2),
    MaxPool(MaxPool3),
    SaveSkip,
    AddSkip {
        name: String,
        down: Option<Box<(Conv2d, BatchNorm2d)>>,
    },
}

impl Op {
    fn name(&self) -> Option<&str> {
        match self {
            Op::Conv(c) => Some(&c.name),
            Op::Bn(b) => Some(&b.name),
            Op::Relu(r) => Some(&r.name),
            Op::AvgPool(p) => Some(&p.name),
            Op::MaxPool(p) => Some(&p.name),
            Op::SaveSkip => None,
            Op::AddSkip { name, .. } => Some(name),
        }
    }
}

/// A named-op encoder ending in a global average pool.
pub struct Encoder {
    pub config: EncoderConfig,
    ops: Vec<Op>,
    gap: GlobalAvgPool,
}

impl Encoder {
    /// Build with zeroed parameters (callers normally go through
    /// [`build_model`], which also initializes them).
    pub fn build(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let ops = match config.architecture {
            Architecture::SmallCnn => build_small_cnn_ops(config.feature_dim),
            Architecture::Resnet50 => build_resnet50_ops(),
        };
        Ok(Encoder {
            config,
            ops,
            gap: GlobalAvgPool::new(),
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        for op in &mut self.ops {
            match op {
                Op::Conv(c) => c.init(rng),
                Op::Bn(b) => b.init(rng),
                Op::AddSkip { down: Some(pair), .. } => {
                    let (c, b) = pair.as_mut();
                    c.init(rng);
                    b.init(rng);
                }
                _ => {}
            }
        }
    }

    /// Names of activations that can be captured for explanation heatmaps
    /// (the rectifier outputs, shallow to deep).
    pub fn capturable_layers(&self) -> Vec<String> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                Op::Relu(r) => Some(r.name.clone()),
                _ => None,
            })
            .collect()
    }

    /// The deepest rectifier — the conventional explanation target.
    pub fn default_capture_layer(&self) -> String {
        self.capturable_layers()
            .last()
            .cloned()
            .expect("encoders always contain rectifiers")
    }

    fn has_layer(&self, name: &str) -> bool {
        self.ops.iter().any(|op| op.name() == Some(name))
    }

    /// Forward to pooled features. `train` selects batch-norm statistics
    /// (batch in training, running otherwise); every op caches what its
    /// backward pass needs.
    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array2<f64> {
        self.forward_captured(x, train, None)
            .expect("capture disabled")
            .0
    }

    /// Forward, additionally returning the activation at `capture` (an op
    /// name from [`Encoder::capturable_layers`]).
    pub fn forward_captured(
        &mut self,
        x: &Array4<f64>,
        train: bool,
        capture: Option<&str>,
    ) -> Result<(Array2<f64>, Option<Array4<f64>>)> {
        if let Some(name) = capture {
            if !self.has_layer(name) {
                return Err(Error::UnknownLayer {
                    name: name.to_string(),
                });
            }
        }
        let mut cur = x.clone();
        let mut skips: Vec<Array4<f64>> = Vec::new();
        let mut captured = None;
        for op in &mut self.ops {
            cur = match op {
                Op::Conv(c) => c.forward(&cur),
                Op::Bn(b) => b.forward(&cur, train),
                Op::Relu(r) => r.forward(&cur),
                Op::AvgPool(p) => p.forward(&cur),
                Op::MaxPool(p) => p.forward(&cur),
                Op::SaveSkip => {
                    skips.push(cur.clone());
                    cur
                }
                Op::AddSkip { down, .. } => {
                    let skip = skips.pop().expect("unbalanced skip markers");
                    let skip = match down {
                        Some(pair) => {
                            let (c, b) = pair.as_mut();
                            b.forward(&c.forward(&skip), train)
                        }
                        None => skip,
                    };
                    cur + skip
                }
            };
            if capture.is_some() && op.name() == capture {
                captured = Some(cur.clone());
            }
        }
        debug_assert!(skips.is_empty(), "unbalanced skip markers");
        Ok((self.gap.forward(&cur), captured))
    }

    /// Backward from feature gradients to the input gradient, accumulating
    /// parameter gradients along the way.
    pub fn backward(&mut self, gfeat: &Array2<f64>) -> Array4<f64> {
        self.backward_captured(gfeat, None)
            .expect("capture disabled")
            .0
    }

    /// Backward, additionally returning the gradient flowing into the output
    /// of the op named `capture`.
    pub fn backward_captured(
        &mut self,
        gfeat: &Array2<f64>,
        capture: Option<&str>,
    ) -> Result<(Array4<f64>, Option<Array4<f64>>)> {
        if let Some(name) = capture {
            if !self.has_layer(name) {
                return Err(Error::UnknownLayer {
                    name: name.to_string(),
                });
            }
        }
        let mut g = self.gap.backward(gfeat);
        let mut skip_grads: Vec<Array4<f64>> = Vec::new();
        let mut captured = None;
        for op in self.ops.iter_mut().rev() {
            // `g` here is dL/d(op output): capture before stepping through.
            if capture.is_some() && op.name() == capture {
                captured = Some(g.clone());
            }
            g = match op {
                Op::Conv(c) => c.backward(&g),
                Op::Bn(b) => b.backward(&g),
                Op::Relu(r) => r.backward(&g),
                Op::AvgPool(p) => p.backward(&g),
                Op::MaxPool(p) => p.backward(&g),
                Op::SaveSkip => {
                    let sg = skip_grads.pop().expect("unbalanced skip markers");
                    g + sg
                }
                Op::AddSkip { down, .. } => {
                    let sg = match down {
                        Some(pair) => {
                            let (c, b) = pair.as_mut();
                            c.backward(&b.backward(&g))
                        }
                        None => g.clone(),
                    };
                    skip_grads.push(sg);
                    g
                }
            };
        }
        debug_assert!(skip_grads.is_empty(), "unbalanced skip markers");
        Ok((g, captured))
    }

    pub fn for_each_param(&mut self, f: &mut dyn FnMut(ParamView)) {
        for op in &mut self.ops {
            match op {
                Op::Conv(c) => c.visit(f),
                Op::Bn(b) => b.visit(f),
                Op::AddSkip { down: Some(pair), .. } => {
                    let (c, b) = pair.as_mut();
                    c.visit(f);
                    b.visit(f);
                }
                _ => {}
            }
        }
    }
}

fn build_small_cnn_ops(feature_dim: usize) -> Vec<Op> {
    let channels = [
        feature_dim / 8,
        feature_dim / 4,
        feature_dim / 2,
        feature_dim,
    ];
    let mut ops = Vec::new();
    let mut in_c = 3;
    for (i, &out_c) in channels.iter().enumerate() {
        let b = i + 1;
        ops.push(Op::Conv(Conv2d::new(
            format!("encoder.b{b}.conv"),
            in_c,
            out_c,
            3,
            1,
            1,
            false,
        )));
        ops.push(Op::Bn(BatchNorm2d::new(format!("encoder.b{b}.bn"), out_c)));
        ops.push(Op::Relu(Relu::new(format!("encoder.b{b}.relu"))));
        if b < channels.len() {
            ops.push(Op::AvgPool(AvgPool2::new(format!("encoder.b{b}.pool"))));
        }
        in_c = out_c;
    }
    ops
}

fn build_resnet50_ops() -> Vec<Op> {
    let mut ops = vec![
        Op::Conv(Conv2d::new("encoder.stem.conv", 3, 64, 7, 2, 3, false)),
        Op::Bn(BatchNorm2d::new("encoder.stem.bn", 64)),
        Op::Relu(Relu::new("encoder.stem.relu")),
        Op::MaxPool(MaxPool3::new("encoder.stem.pool")),
    ];
    let widths = [64usize, 128, 256, 512];
    let blocks = [3usize, 4, 6, 3];
    let mut in_c = 64;
    for (li, (&w, &n)) in widths.iter().zip(&blocks).enumerate() {
        for bi in 0..n {
            let stride = if li > 0 && bi == 0 { 2 } else { 1 };
            let out_c = 4 * w;
            let name = format!("encoder.layer{}.{bi}", li + 1);
            ops.push(Op::SaveSkip);
            ops.push(Op::Conv(Conv2d::new(
                format!("{name}.conv1"),
                in_c,
                w,
                1,
                1,
                0,
                false,
            )));
            ops.push(Op::Bn(BatchNorm2d::new(format!("{name}.bn1"), w)));
            ops.push(Op::Relu(Relu::new(format!("{name}.relu1"))));
            ops.push(Op::Conv(Conv2d::new(
                format!("{name}.conv2"),
                w,
                w,
                3,
                stride,
                1,
                false,
            )));
            ops.push(Op::Bn(BatchNorm2d::new(format!("{name}.bn2"), w)));
            ops.push(Op::Relu(Relu::new(format!("{name}.relu2"))));
            ops.push(Op::Conv(Conv2d::new(
                format!("{name}.conv3"),
                w,
                out_c,
                1,
                1,
                0,
                false,
            )));
            ops.push(Op::Bn(BatchNorm2d::new(format!("{name}.bn3"), out_c)));
            let down = (bi == 0).then(|| {
                Box::new((
                    Conv2d::new(format!("{name}.downsample.conv"), in_c, out_c, 1, stride, 0, false),
                    BatchNorm2d::new(format!("{name}.downsample.bn"), out_c),
                ))
            });
            ops.push(Op::AddSkip {
                name: format!("{name}.add"),
                down,
            });
            ops.push(Op::Relu(Relu::new(format!("{name}.relu"))));
            in_c = out_c;
        }
    }
    ops
}

/// Encoder plus head, with the configs that built them.
pub struct ModelBundle {
    pub encoder_config: EncoderConfig,
    pub head_config: HeadConfig,
    pub encoder: Encoder,
    pub head: Mlp,
}

/// Build and He-initialize a full model. Initialization order is fixed
/// (encoder ops in sequence, then the head), so a given seed always produces
/// the same parameters.
pub fn build_model(
    encoder_config: EncoderConfig,
    head_config: HeadConfig,
    seed: u64,
) -> Result<ModelBundle> {
    head_config.validate()?;
    let mut encoder = Encoder::build(encoder_config)?;
    let dims = match &head_config {
        HeadConfig::Projection(c) => c.resolved_dims(encoder.feature_dim()),
        HeadConfig::Classifier(c) => c.resolved_dims(),
    };
    let mut head = Mlp::new("head", encoder.feature_dim(), &dims);
    let mut rng = rng_from(seed, &[TAG_MODEL]);
    encoder.init(&mut rng);
    head.init(&mut rng);
    Ok(ModelBundle {
        encoder_config,
        head_config,
        encoder,
        head,
    })
}

impl ModelBundle {
    /// Encoder then head.
    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array2<f64> {
        let features = self.encoder.forward(x, train);
        self.head.forward(&features)
    }

    /// Backward through head and encoder; returns the input-image gradient.
    pub fn backward(&mut self, gout: &Array2<f64>) -> Array4<f64> {
        let gfeat = self.head.backward(gout);
        self.encoder.backward(&gfeat)
    }

    /// Backward through the head only (frozen-encoder training); returns the
    /// feature gradient.
    pub fn backward_head_only(&mut self, gout: &Array2<f64>) -> Array2<f64> {
        self.head.backward(gout)
    }

    pub fn for_each_param(&mut self, f: &mut dyn FnMut(ParamView)) {
        self.encoder.for_each_param(f);
        self.head.visit(f);
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param(&mut |p| {
            if let Some(g) = p.grad {
                g.fill(0.0);
            }
        });
    }

    /// Copy every parameter and state tensor out by name.
    pub fn param_map(&mut self) -> BTreeMap<String, (Vec<usize>, Vec<f64>)> {
        let mut map = BTreeMap::new();
        self.for_each_param(&mut |p| {
            map.insert(p.name.clone(), (p.shape.clone(), p.value.to_vec()));
        });
        map
    }

    /// Load tensors from `map` into parameters whose name starts with
    /// `prefix`. Every matching target must be present with the right shape;
    /// returns the number of tensors loaded.
    pub fn load_param_map(
        &mut self,
        map: &BTreeMap<String, (Vec<usize>, Vec<f64>)>,
        prefix: &str,
    ) -> Result<usize> {
        let mut loaded = 0usize;
        let mut problem: Option<String> = None;
        self.for_each_param(&mut |p| {
            if problem.is_some() || !p.name.starts_with(prefix) {
                return;
            }
            match map.get(&p.name) {
                None => problem = Some(format!("missing tensor {}", p.name)),
                Some((shape, data)) => {
                    if *shape != p.shape {
                        problem = Some(format!(
                            "tensor {} has shape {:?}, expected {:?}",
                            p.name, shape, p.shape
                        ));
                    } else {
                        p.value.copy_from_slice(data);
                        loaded += 1;
                    }
                }
            }
        });
        match problem {
            Some(message) => Err(Error::ArchitectureMismatch { message }),
            None => Ok(loaded),
        }
    }

    /// Count of trainable scalar parameters.
    pub fn trainable_param_count(&mut self) -> usize {
        let mut count = 0;
        self.for_each_param(&mut |p| {
            if p.trainable {
                count += p.value.len();
            }
        });
        count
    }
}

/// Copy encoder weights (including batch-norm running statistics) from a
/// source bundle into a target with the same encoder architecture. Heads are
/// untouched — this is the transfer step between pretraining and fine-tuning.
pub fn transfer_encoder(target: &mut ModelBundle, source: &mut ModelBundle) -> Result<usize> {
    if target.encoder_config != source.encoder_config {
        return Err(Error::ArchitectureMismatch {
            message: format!(
                "encoder configs differ: target {:?} vs source {:?}",
                target.encoder_config, source.encoder_config
            ),
        });
    }
    let map = source.param_map();
    target.load_param_map(&map, "encoder.")
}

/// Stack `(H, W, 3)` images in [0, 1] into the `(N, 3, H, W)` batch layout
/// encoders consume.
pub fn batch_from_images(images: &[&ImageTensor]) -> Array4<f64> {
    assert!(!images.is_empty(), "empty batch");
    let (h, w, _) = images[0].dim();
    let mut batch = Array4::zeros((images.len(), 3, h, w));
    for (i, img) in images.iter().enumerate() {
        assert_eq!(img.dim(), (h, w, 3), "inconsistent image sizes in batch");
        for c in 0..3 {
            batch
                .slice_mut(s![i, c, .., ..])
                .assign(&img.slice(s![.., .., c]));
        }
    }
    batch
}
