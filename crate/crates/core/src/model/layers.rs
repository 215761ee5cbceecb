//! Layer primitives with explicit forward and backward passes.
//!
//! All activations are `f64`; spatial tensors are `(N, C, H, W)`, dense
//! tensors `(N, D)`. Each layer caches whatever its backward pass needs
//! during forward, and accumulates parameter gradients into its own `*grad`
//! buffers (callers zero them between steps). No autodiff framework is
//! involved, so every gradient here is checkable against finite differences.

use ndarray::{s, Array1, Array2, Array4, ArrayView3, Axis};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// A named view of one parameter (or state) tensor, yielded by the
/// `for_each_param` visitors. State tensors (batch-norm running statistics)
/// carry no gradient and are not trainable, but still serialize.
pub struct ParamView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: &'a mut [f64],
    pub grad: Option<&'a mut [f64]>,
    pub trainable: bool,
}

/// 2-D convolution, `weight` laid out `(out_c, in_c, kh, kw)`, symmetric
/// zero padding. Bias is optional (omitted when batch norm follows).
pub struct Conv2d {
    pub name: String,
    pub weight: Array4<f64>,
    pub bias: Option<Array1<f64>>,
    pub wgrad: Array4<f64>,
    pub bgrad: Option<Array1<f64>>,
    pub stride: usize,
    pub pad: usize,
    cached_input: Option<Array4<f64>>,
}

impl Conv2d {
    pub fn new(
        name: impl Into<String>,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Self {
        Conv2d {
            name: name.into(),
            weight: Array4::zeros((out_c, in_c, kernel, kernel)),
            bias: bias.then(|| Array1::zeros(out_c)),
            wgrad: Array4::zeros((out_c, in_c, kernel, kernel)),
            bgrad: bias.then(|| Array1::zeros(out_c)),
            stride,
            pad,
            cached_input: None,
        }
    }

    /// He-normal initialization: `N(0, sqrt(2 / fan_in))`, zero bias.
    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        let (_, ic, kh, kw) = self.weight.dim();
        let std = (2.0 / (ic * kh * kw) as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("valid normal");
        for v in self.weight.iter_mut() {
            *v = dist.sample(rng);
        }
        if let Some(b) = &mut self.bias {
            b.fill(0.0);
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.weight.dim().2;
        (
            (h + 2 * self.pad - k) / self.stride + 1,
            (w + 2 * self.pad - k) / self.stride + 1,
        )
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let (oc, ic, kh, kw) = self.weight.dim();
        assert_eq!(c, ic, "{}: channel mismatch", self.name);
        let (ho, wo) = self.output_hw(h, w);
        let wmat = self
            .weight
            .to_shape((oc, ic * kh * kw))
            .expect("contiguous weight");
        let mut out = Array4::zeros((n, oc, ho, wo));
        for i in 0..n {
            let col = im2col(x.slice(s![i, .., .., ..]), kh, kw, self.stride, self.pad, ho, wo);
            let o = wmat.dot(&col);
            let o = o.to_shape((oc, ho, wo)).expect("contiguous gemm output");
            out.slice_mut(s![i, .., .., ..]).assign(&o);
        }
        if let Some(b) = &self.bias {
            for i in 0..n {
                for o in 0..oc {
                    out.slice_mut(s![i, o, .., ..]).mapv_inplace(|v| v + b[o]);
                }
            }
        }
        self.cached_input = Some(x.clone());
        out
    }

    pub fn backward(&mut self, gy: &Array4<f64>) -> Array4<f64> {
        let x = self
            .cached_input
            .as_ref()
            .unwrap_or_else(|| panic!("{}: backward before forward", self.name));
        let n = x.dim().0;
        let (oc, ic, kh, kw) = self.weight.dim();
        let (_, _, ho, wo) = gy.dim();
        let k = ic * kh * kw;
        let wmat = self.weight.to_shape((oc, k)).expect("contiguous weight");
        let mut dx = Array4::zeros(x.dim());
        let mut dw_acc = Array2::<f64>::zeros((oc, k));
        for i in 0..n {
            let col = im2col(x.slice(s![i, .., .., ..]), kh, kw, self.stride, self.pad, ho, wo);
            let gy_i = gy.slice(s![i, .., .., ..]);
            let gy_mat = gy_i.to_shape((oc, ho * wo)).expect("contiguous grad");
            dw_acc = dw_acc + gy_mat.dot(&col.t());
            let dcol = wmat.t().dot(&gy_mat);
            col2im(
                &dcol,
                dx.slice_mut(s![i, .., .., ..]),
                kh,
                kw,
                self.stride,
                self.pad,
                ho,
                wo,
            );
        }
        let dw4 = dw_acc
            .to_shape((oc, ic, kh, kw))
            .expect("contiguous weight grad");
        self.wgrad += &dw4;
        if let Some(bg) = &mut self.bgrad {
            for o in 0..oc {
                *bg.get_mut(o).unwrap() += gy.slice(s![.., o, .., ..]).sum();
            }
        }
        dx
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(ParamView)) {
        f(ParamView {
            name: format!("{}.weight", self.name),
            shape: self.weight.shape().to_vec(),
            value: self.weight.as_slice_mut().expect("standard layout"),
            grad: Some(self.wgrad.as_slice_mut().expect("standard layout")),
            trainable: true,
        });
        if let (Some(b), Some(bg)) = (&mut self.bias, &mut self.bgrad) {
            f(ParamView {
                name: format!("{}.bias", self.name),
                shape: b.shape().to_vec(),
                value: b.as_slice_mut().expect("standard layout"),
                grad: Some(bg.as_slice_mut().expect("standard layout")),
                trainable: true,
            });
        }
    }
}

/// Unfold one image into the `(in_c * kh * kw, ho * wo)` patch matrix used by
/// the GEMM-based convolution. Out-of-bounds taps stay zero.
fn im2col(
    x: ArrayView3<f64>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let mut col = Array2::zeros((c * kh * kw, ho * wo));
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        col[[row, oy * wo + ox]] = x[[ci, iy as usize, ix as usize]];
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter-add patch-matrix gradients back onto the
/// image gradient.
#[allow(clippy::too_many_arguments)]
fn col2im(
    dcol: &Array2<f64>,
    mut dx: ndarray::ArrayViewMut3<f64>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) {
    let (c, h, w) = dx.dim();
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dx[[ci, iy as usize, ix as usize]] += dcol[[row, oy * wo + ox]];
                    }
                }
            }
        }
    }
}

struct BnCache {
    xhat: Array4<f64>,
    inv_std: Array1<f64>,
    train: bool,
}

/// Batch normalization over `(N, H, W)` per channel. Training mode uses
/// batch statistics and updates the running ones; evaluation mode uses the
/// running statistics and still supports backward (needed for explanation
/// gradients through frozen encoders).
pub struct BatchNorm2d {
    pub name: String,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub ggrad: Array1<f64>,
    pub bgrad: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

impl BatchNorm2d {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        BatchNorm2d {
            name: name.into(),
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            ggrad: Array1::zeros(channels),
            bgrad: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn init(&mut self, _rng: &mut ChaCha8Rng) {
        self.gamma.fill(1.0);
        self.beta.fill(0.0);
        self.running_mean.fill(0.0);
        self.running_var.fill(1.0);
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let m = (n * h * w) as f64;
        let (mean, var) = if train {
            assert!(
                n * h * w > 1,
                "{}: batch statistics need more than one element",
                self.name
            );
            let mean = x
                .mean_axis(Axis(0))
                .unwrap()
                .mean_axis(Axis(1))
                .unwrap()
                .mean_axis(Axis(1))
                .unwrap();
            let mut var = Array1::zeros(c);
            for ch in 0..c {
                let centered = x.slice(s![.., ch, .., ..]).mapv(|v| (v - mean[ch]).powi(2));
                var[ch] = centered.sum() / m;
            }
            // Running variance tracks the unbiased estimate, as is
            // conventional, while normalization uses the biased one.
            let unbiased = m / (m - 1.0);
            for ch in 0..c {
                self.running_mean[ch] =
                    (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean[ch];
                self.running_var[ch] = (1.0 - self.momentum) * self.running_var[ch]
                    + self.momentum * var[ch] * unbiased;
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let mut xhat = x.clone();
        for ch in 0..c {
            let mu = mean[ch];
            let is = inv_std[ch];
            xhat.slice_mut(s![.., ch, .., ..])
                .mapv_inplace(|v| (v - mu) * is);
        }
        let mut out = xhat.clone();
        for ch in 0..c {
            let g = self.gamma[ch];
            let b = self.beta[ch];
            out.slice_mut(s![.., ch, .., ..])
                .mapv_inplace(|v| g * v + b);
        }
        self.cache = Some(BnCache { xhat, inv_std, train });
        out
    }

    pub fn backward(&mut self, gy: &Array4<f64>) -> Array4<f64> {
        let cache = self
            .cache
            .as_ref()
            .unwrap_or_else(|| panic!("{}: backward before forward", self.name));
        let (n, c, h, w) = gy.dim();
        let m = (n * h * w) as f64;
        let mut dx = Array4::zeros(gy.dim());
        for ch in 0..c {
            let gy_c = gy.slice(s![.., ch, .., ..]);
            let xhat_c = cache.xhat.slice(s![.., ch, .., ..]);
            let sum_gy = gy_c.sum();
            let sum_gy_xhat = (&gy_c * &xhat_c).sum();
            self.ggrad[ch] += sum_gy_xhat;
            self.bgrad[ch] += sum_gy;
            let scale = self.gamma[ch] * cache.inv_std[ch];
            let mut dx_c = dx.slice_mut(s![.., ch, .., ..]);
            if cache.train {
                // dx = gamma * inv_std * (gy - mean(gy) - xhat * mean(gy*xhat))
                ndarray::Zip::from(&mut dx_c)
                    .and(&gy_c)
                    .and(&xhat_c)
                    .for_each(|d, &g, &xh| {
                        *d = scale * (g - sum_gy / m - xh * sum_gy_xhat / m);
                    });
            } else {
                // Running statistics are constants: the map is affine.
                ndarray::Zip::from(&mut dx_c).and(&gy_c).for_each(|d, &g| {
                    *d = scale * g;
                });
            }
        }
        dx
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(ParamView)) {
        f(ParamView {
            name: format!("{}.weight", self.name),
            shape: self.gamma.shape().to_vec(),
            value: self.gamma.as_slice_mut().expect("standard layout"),
            grad: Some(self.ggrad.as_slice_mut().expect("standard layout")),
            trainable: true,
        });
        f(ParamView {
            name: format!("{}.bias", self.name),
            shape: self.beta.shape().to_vec(),
            value: self.beta.as_slice_mut().expect("standard layout"),
            grad: Some(self.bgrad.as_slice_mut().expect("standard layout")),
            trainable: true,
        });
        f(ParamView {
            name: format!("{}.running_mean", self.name),
            shape: self.running_mean.shape().to_vec(),
            value: self.running_mean.as_slice_mut().expect("standard layout"),
            grad: None,
            trainable: false,
        });
        f(ParamView {
            name: format!("{}.running_var", self.name),
            shape: self.running_var.shape().to_vec(),
            value: self.running_var.as_slice_mut().expect("standard layout"),
            grad: None,
            trainable: false,
        });
    }
}

/// Elementwise rectifier; caches the pass-through mask.
pub struct Relu {
    pub name: String,
    mask: Option<Array4<f64>>,
}

impl Relu {
    pub fn new(name: impl Into<String>) -> Self {
        Relu {
            name: name.into(),
            mask: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        self.mask = Some(x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
        x.mapv(|v| v.max(0.0))
    }

    pub fn backward(&mut self, gy: &Array4<f64>) -> Array4<f64> {
        let mask = self
            .mask
            .as_ref()
            .unwrap_or_else(|| panic!("{}: backward before forward", self.name));
        gy * mask
    }
}

/// 2x2 average pooling with stride 2; requires even spatial dimensions.
pub struct AvgPool2 {
    pub name: String,
    cached_hw: Option<(usize, usize)>,
}

impl AvgPool2 {
    pub fn new(name: impl Into<String>) -> Self {
        AvgPool2 {
            name: name.into(),
            cached_hw: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        assert!(
            h % 2 == 0 && w % 2 == 0,
            "{}: spatial dims ({h}, {w}) must be even",
            self.name
        );
        self.cached_hw = Some((h, w));
        let mut out = Array4::zeros((n, c, h / 2, w / 2));
        for i in 0..n {
            for ch in 0..c {
                for oy in 0..h / 2 {
                    for ox in 0..w / 2 {
                        let s = x[[i, ch, 2 * oy, 2 * ox]]
                            + x[[i, ch, 2 * oy, 2 * ox + 1]]
                            + x[[i, ch, 2 * oy + 1, 2 * ox]]
                            + x[[i, ch, 2 * oy + 1, 2 * ox + 1]];
                        out[[i, ch, oy, ox]] = s / 4.0;
                    }
                }
            }
        }
        out
    }

    pub fn backward(&mut self, gy: &Array4<f64>) -> Array4<f64> {
        let (h, w) = self
            .cached_hw
            .unwrap_or_else(|| panic!("{}: backward before forward", self.name));
        let (n, c, ho, wo) = gy.dim();
        let mut dx = Array4::zeros((n, c, h, w));
        for i in 0..n {
            for ch in 0..c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let g = gy[[i, ch, oy, ox]] / 4.0;
                        dx[[i, ch, 2 * oy, 2 * ox]] = g;
                        dx[[i, ch, 2 * oy, 2 * ox + 1]] = g;
                        dx[[i, ch, 2 * oy + 1, 2 * ox]] = g;
                        dx[[i, ch, 2 * oy + 1, 2 * ox + 1]] = g;
                    }
                }
            }
        }
        dx
    }
}

/// 3x3 max pooling, stride 2, padding 1 (the classic residual-network stem
/// pool). Caches the argmax of each window.
pub struct MaxPool3 {
    pub name: String,
    cached: Option<(Array4<usize>, (usize, usize))>,
}

impl MaxPool3 {
    pub fn new(name: impl Into<String>) -> Self {
        MaxPool3 {
            name: name.into(),
            cached: None,
        }
    }

    pub fn output_hw(h: usize, w: usize) -> (usize, usize) {
        ((h + 2 - 3) / 2 + 1, (w + 2 - 3) / 2 + 1)
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let (ho, wo) = Self::output_hw(h, w);
        let mut out = Array4::zeros((n, c, ho, wo));
        let mut arg = Array4::zeros((n, c, ho, wo));
        for i in 0..n {
            for ch in 0..c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for ky in 0..3 {
                            let iy = (oy * 2 + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..3 {
                                let ix = (ox * 2 + kx) as isize - 1;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let v = x[[i, ch, iy as usize, ix as usize]];
                                if v > best {
                                    best = v;
                                    best_idx = iy as usize * w + ix as usize;
                                }
                            }
                        }
                        out[[i, ch, oy, ox]] = best;
                        arg[[i, ch, oy, ox]] = best_idx;
                    }
                }
            }
        }
        self.cached = Some((arg, (h, w)));
        out
    }

    pub fn backward(&mut self, gy: &Array4<f64>) -> Array4<f64> {
        let (arg, (h, w)) = self
            .cached
            .as_ref()
            .unwrap_or_else(|| panic!("{}: backward before forward", self.name));
        let (n, c, ho, wo) = gy.dim();
        let mut dx = Array4::zeros((n, c, *h, *w));
        for i in 0..n {
            for ch in 0..c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let idx = arg[[i, ch, oy, ox]];
                        dx[[i, ch, idx / w, idx % w]] += gy[[i, ch, oy, ox]];
                    }
                }
            }
        }
        dx
    }
}

/// Spatial mean per channel: `(N, C, H, W)` to `(N, C)`.
pub struct GlobalAvgPool {
    cached_hw: Option<(usize, usize)>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool { cached_hw: None }
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array2<f64> {
        let (n, c, h, w) = x.dim();
        self.cached_hw = Some((h, w));
        let mut out = Array2::zeros((n, c));
        for i in 0..n {
            for ch in 0..c {
                out[[i, ch]] = x.slice(s![i, ch, .., ..]).sum() / (h * w) as f64;
            }
        }
        out
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array4<f64> {
        let (h, w) = self.cached_hw.expect("global pool backward before forward");
        let (n, c) = gy.dim();
        let mut dx = Array4::zeros((n, c, h, w));
        for i in 0..n {
            for ch in 0..c {
                dx.slice_mut(s![i, ch, .., ..]).fill(gy[[i, ch]] / (h * w) as f64);
            }
        }
        dx
    }
}

impl Default for GlobalAvgPool {
    fn default() -> Self {
        Self::new()
    }
}

/// Fully connected layer, `weight` laid out `(out, in)`, `y = x Wᵀ + b`.
pub struct Dense {
    pub name: String,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub wgrad: Array2<f64>,
    pub bgrad: Array1<f64>,
    cached_input: Option<Array2<f64>>,
}

impl Dense {
    pub fn new(name: impl Into<String>, in_dim: usize, out_dim: usize) -> Self {
        Dense {
            name: name.into(),
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
            wgrad: Array2::zeros((out_dim, in_dim)),
            bgrad: Array1::zeros(out_dim),
            cached_input: None,
        }
    }

    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        let in_dim = self.weight.dim().1;
        let std = (2.0 / in_dim as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("valid normal");
        for v in self.weight.iter_mut() {
            *v = dist.sample(rng);
        }
        self.bias.fill(0.0);
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let out = x.dot(&self.weight.t()) + &self.bias;
        self.cached_input = Some(x.clone());
        out
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let x = self
            .cached_input
            .as_ref()
            .unwrap_or_else(|| panic!("{}: backward before forward", self.name));
        self.wgrad += &gy.t().dot(x);
        self.bgrad += &gy.sum_axis(Axis(0));
        gy.dot(&self.weight)
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(ParamView)) {
        f(ParamView {
            name: format!("{}.weight", self.name),
            shape: self.weight.shape().to_vec(),
            value: self.weight.as_slice_mut().expect("standard layout"),
            grad: Some(self.wgrad.as_slice_mut().expect("standard layout")),
            trainable: true,
        });
        f(ParamView {
            name: format!("{}.bias", self.name),
            shape: self.bias.shape().to_vec(),
            value: self.bias.as_slice_mut().expect("standard layout"),
            grad: Some(self.bgrad.as_slice_mut().expect("standard layout")),
            trainable: true,
        });
    }
}

/// A dense stack with rectifiers between layers (never after the last):
/// the shape shared by projection and classifier heads.
pub struct Mlp {
    layers: Vec<Dense>,
    masks: Vec<Option<Array2<f64>>>,
}

impl Mlp {
    /// `dims` lists the output width of each layer; `prefix` seeds the
    /// parameter names (`{prefix}.{index}.weight` / `.bias`).
    pub fn new(prefix: &str, in_dim: usize, dims: &[usize]) -> Self {
        assert!(!dims.is_empty(), "head needs at least one layer");
        let mut layers = Vec::with_capacity(dims.len());
        let mut cur = in_dim;
        for (i, &d) in dims.iter().enumerate() {
            layers.push(Dense::new(format!("{prefix}.{i}"), cur, d));
            cur = d;
        }
        let masks = (0..dims.len()).map(|_| None).collect();
        Mlp { layers, masks }
    }

    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        for l in &mut self.layers {
            l.init(rng);
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.dim().1
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.dim().0
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            cur = layer.forward(&cur);
            if i < last {
                self.masks[i] = Some(cur.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
                cur.mapv_inplace(|v| v.max(0.0));
            }
        }
        cur
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut cur = gy.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            if i < last {
                let mask = self.masks[i]
                    .as_ref()
                    .unwrap_or_else(|| panic!("{}: backward before forward", layer.name));
                cur *= mask;
            }
            cur = layer.backward(&cur);
        }
        cur
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(ParamView)) {
        for l in &mut self.layers {
            l.visit(f);
        }
    }
}
