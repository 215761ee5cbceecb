//! Gradient-weighted class activation maps.
//!
//! [`grad_cam`] answers "where did the classifier look?": it weights the
//! activation channels of a chosen encoder layer by the spatial mean of the
//! class-score gradient flowing into them, sums the weighted channels,
//! rectifies, and upsamples the result to input resolution. The map is
//! min-max normalized to `[0, 1]` (an all-zero map stays zero rather than
//! dividing by nothing).
//!
//! [`overlay`] blends a heatmap onto the source image with a jet palette for
//! side-by-side inspection; `alpha = 0` returns the input untouched.

use ndarray::{Array2, Array4};

use crate::datasets::ImageTensor;
use crate::error::{Error, Result};
use crate::model::{batch_from_images, HeadConfig, ModelBundle};

/// Result of [`grad_cam`] for one image and one class.
#[derive(Debug, Clone)]
pub struct CamOutput {
    /// Encoder layer the map was computed at.
    pub layer: String,
    /// Class index the map explains.
    pub class: usize,
    /// Classifier logits for the image (useful to report the predicted
    /// class alongside the explained one).
    pub logits: Vec<f64>,
    /// Rectified map at the layer's spatial resolution, before upsampling.
    pub raw: Array2<f64>,
    /// Upsampled map at input resolution, normalized into `[0, 1]`.
    pub heatmap: Array2<f64>,
}

/// Compute a class activation map for `image` at `layer` (default: the last
/// rectified activation of the encoder).
///
/// The model must carry a classifier head; the image must match the
/// encoder's input size. Parameter gradients are zeroed before and after, so
/// the call leaves the model ready for unrelated training steps.
pub fn grad_cam(
    model: &mut ModelBundle,
    image: &ImageTensor,
    class: usize,
    layer: Option<&str>,
) -> Result<CamOutput> {
    let num_classes = match &model.head_config {
        HeadConfig::Classifier(c) => c.num_classes,
        HeadConfig::Projection(_) => {
            return Err(Error::InvalidExplain(
                "class activation maps need a classifier head, found a projection head".into(),
            ));
        }
    };
    if class >= num_classes {
        return Err(Error::ClassOutOfRange {
            class,
            num_classes,
        });
    }
    let layer = layer
        .map(str::to_string)
        .unwrap_or_else(|| model.encoder.default_capture_layer());
    let (expect_h, expect_w) = model.encoder_config.input_size;
    let (h, w, c) = image.dim();
    if (h, w, c) != (expect_h, expect_w, 3) {
        return Err(Error::DimMismatch {
            context: "class activation map input".to_string(),
            expected: format!("({expect_h}, {expect_w}, 3)"),
            found: format!("({h}, {w}, {c})"),
        });
    }

    let batch = batch_from_images(&[image]);
    let (features, activation) = model
        .encoder
        .forward_captured(&batch, false, Some(&layer))?;
    let activation = activation.expect("capture layer was validated");
    let logits = model.head.forward(&features);

    // Backprop the bare class score: d(logit_class)/d(everything).
    model.zero_grads();
    let mut gout = Array2::zeros(logits.raw_dim());
    gout[[0, class]] = 1.0;
    let gfeat = model.head.backward(&gout);
    let (_, grad) = model.encoder.backward_captured(&gfeat, Some(&layer))?;
    let grad = grad.expect("capture layer was validated");
    model.zero_grads();

    let raw = weighted_channel_sum(&activation, &grad);
    let heatmap = normalize_unit(&bilinear_upsample(&raw, expect_h, expect_w));
    Ok(CamOutput {
        layer,
        class,
        logits: logits.row(0).to_vec(),
        raw,
        heatmap,
    })
}

/// Channel weights are the spatial means of the gradient; the map is the
/// rectified weighted sum of activation channels.
fn weighted_channel_sum(activation: &Array4<f64>, grad: &Array4<f64>) -> Array2<f64> {
    let (_, channels, h, w) = activation.dim();
    let mut out = Array2::<f64>::zeros((h, w));
    let area = (h * w) as f64;
    for ch in 0..channels {
        let alpha: f64 = grad
            .index_axis(ndarray::Axis(0), 0)
            .index_axis(ndarray::Axis(0), ch)
            .sum()
            / area;
        for y in 0..h {
            for x in 0..w {
                out[[y, x]] += alpha * activation[[0, ch, y, x]];
            }
        }
    }
    out.mapv_inplace(|v| v.max(0.0));
    out
}

/// Bilinear upsampling with half-pixel centers (the convention that keeps a
/// constant image constant and is symmetric under flips).
fn bilinear_upsample(src: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (in_h, in_w) = src.dim();
    let mut out = Array2::zeros((out_h, out_w));
    let sy = in_h as f64 / out_h as f64;
    let sx = in_w as f64 / out_w as f64;
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let tx = fx - x0 as f64;
            let top = src[[y0, x0]] * (1.0 - tx) + src[[y0, x1]] * tx;
            let bot = src[[y1, x0]] * (1.0 - tx) + src[[y1, x1]] * tx;
            out[[oy, ox]] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

/// Min-max normalize into `[0, 1]`; a (near-)constant map becomes all zeros.
fn normalize_unit(map: &Array2<f64>) -> Array2<f64> {
    let min = map.iter().copied().fold(f64::INFINITY, f64::min);
    let max = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range.is_finite() && range > 1e-12) {
        return Array2::zeros(map.raw_dim());
    }
    map.mapv(|v| (v - min) / range)
}

/// Classic jet palette: dark blue through cyan, green, yellow to dark red.
/// Input is clamped to `[0, 1]`.
pub fn jet_colormap(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    let seg = |center: f64| (1.5 - (4.0 * t - center).abs()).clamp(0.0, 1.0);
    [seg(3.0), seg(2.0), seg(1.0)]
}

/// Render a heatmap as a jet-colored image.
pub fn heatmap_to_image(heat: &Array2<f64>) -> ImageTensor {
    let (h, w) = heat.dim();
    let mut out = ImageTensor::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let rgb = jet_colormap(heat[[y, x]]);
            for c in 0..3 {
                out[[y, x, c]] = rgb[c];
            }
        }
    }
    out
}

/// Blend a jet-rendered heatmap onto the image: `(1 - alpha) * image +
/// alpha * jet(heat)`. The heatmap must match the image's spatial size and
/// `alpha` must lie in `[0, 1]`.
pub fn overlay(image: &ImageTensor, heat: &Array2<f64>, alpha: f64) -> Result<ImageTensor> {
    if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
        return Err(Error::InvalidExplain(format!(
            "overlay alpha must lie in [0, 1] (got {alpha})"
        )));
    }
    let (h, w, _) = image.dim();
    if heat.dim() != (h, w) {
        return Err(Error::DimMismatch {
            context: "overlay heatmap".to_string(),
            expected: format!("({h}, {w})"),
            found: format!("{:?}", heat.dim()),
        });
    }
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let rgb = jet_colormap(heat[[y, x]]);
            for c in 0..3 {
                out[[y, x, c]] = (1.0 - alpha) * image[[y, x, c]] + alpha * rgb[c];
            }
        }
    }
    Ok(out)
}
