//! Pixel-level image operations backing the augmentation stages.
//!
//! All operations are pure functions on `(H, W, 3)` float tensors. Geometric
//! resampling is bilinear; photometric ops clamp back into `[0, 1]` (except
//! [`normalize`], whose output is intentionally unbounded).

use ndarray::Array3;

use crate::datasets::ImageTensor;

/// ITU-R BT.601 luma weights used for grayscale and saturation.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Bilinear sample with coordinates clamped to the image border.
fn sample_clamped(img: &ImageTensor, y: f64, x: f64, c: usize) -> f64 {
    let (h, w, _) = img.dim();
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let clamp_y = |v: f64| (v.max(0.0) as usize).min(h - 1);
    let clamp_x = |v: f64| (v.max(0.0) as usize).min(w - 1);
    let (y0i, y1i) = (clamp_y(y0), clamp_y(y0 + 1.0));
    let (x0i, x1i) = (clamp_x(x0), clamp_x(x0 + 1.0));
    (1.0 - fy) * ((1.0 - fx) * img[[y0i, x0i, c]] + fx * img[[y0i, x1i, c]])
        + fy * ((1.0 - fx) * img[[y1i, x0i, c]] + fx * img[[y1i, x1i, c]])
}

/// Bilinear sample treating everything outside the image as zero.
fn sample_zero(img: &ImageTensor, y: f64, x: f64, c: usize) -> f64 {
    let (h, w, _) = img.dim();
    let y0 = y.floor() as isize;
    let x0 = x.floor() as isize;
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let at = |yy: isize, xx: isize| {
        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
            0.0
        } else {
            img[[yy as usize, xx as usize, c]]
        }
    };
    (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
        + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1))
}

/// Bilinear resize. Resizing to the current size returns the input verbatim.
pub fn resize_bilinear(img: &ImageTensor, out_h: usize, out_w: usize) -> ImageTensor {
    let (h, w, _) = img.dim();
    if (h, w) == (out_h, out_w) {
        return img.clone();
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    Array3::from_shape_fn((out_h, out_w, 3), |(y, x, c)| {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        let src_x = (x as f64 + 0.5) * sx - 0.5;
        sample_clamped(img, src_y, src_x, c)
    })
}

/// Mirror left-right.
pub fn hflip(img: &ImageTensor) -> ImageTensor {
    let mut out = img.clone();
    out.invert_axis(ndarray::Axis(1));
    out
}

/// Mirror top-bottom.
pub fn vflip(img: &ImageTensor) -> ImageTensor {
    let mut out = img.clone();
    out.invert_axis(ndarray::Axis(0));
    out
}

/// Luma grayscale, replicated over all three channels.
pub fn grayscale(img: &ImageTensor) -> ImageTensor {
    let (h, w, _) = img.dim();
    Array3::from_shape_fn((h, w, 3), |(y, x, _)| {
        LUMA[0] * img[[y, x, 0]] + LUMA[1] * img[[y, x, 1]] + LUMA[2] * img[[y, x, 2]]
    })
}

/// Normalized 1-D Gaussian kernel of the given (odd) length.
fn gaussian_kernel(len: usize, sigma: f64) -> Vec<f64> {
    let center = (len - 1) as f64 / 2.0;
    let mut kernel: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    kernel
}

/// Separable Gaussian blur with kernel `(kh, kw)` and a shared sigma.
/// Borders clamp to the edge pixel, so constant images stay constant.
pub fn gaussian_blur(img: &ImageTensor, kh: usize, kw: usize, sigma: f64) -> ImageTensor {
    let (h, w, _) = img.dim();
    let kv = gaussian_kernel(kh, sigma);
    let khoriz = gaussian_kernel(kw, sigma);
    let rv = (kh / 2) as isize;
    let rh = (kw / 2) as isize;

    // Vertical pass.
    let mut tmp = Array3::zeros((h, w, 3));
    for y in 0..h as isize {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (i, &kw_) in kv.iter().enumerate() {
                    let yy = (y + i as isize - rv).clamp(0, h as isize - 1) as usize;
                    acc += kw_ * img[[yy, x, c]];
                }
                tmp[[y as usize, x, c]] = acc;
            }
        }
    }
    // Horizontal pass.
    let mut out = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w as isize {
            for c in 0..3 {
                let mut acc = 0.0;
                for (i, &kw_) in khoriz.iter().enumerate() {
                    let xx = (x + i as isize - rh).clamp(0, w as isize - 1) as usize;
                    acc += kw_ * tmp[[y, xx, c]];
                }
                out[[y, x as usize, c]] = acc;
            }
        }
    }
    out
}

/// Scale all channels by `factor`, clamped to `[0, 1]`.
pub fn adjust_brightness(img: &ImageTensor, factor: f64) -> ImageTensor {
    img.mapv(|v| (v * factor).clamp(0.0, 1.0))
}

/// Blend with the image's mean luma: `factor = 1` is identity, `0` flattens
/// the image to its mean gray.
pub fn adjust_contrast(img: &ImageTensor, factor: f64) -> ImageTensor {
    let (h, w, _) = img.dim();
    let mut mean = 0.0;
    for y in 0..h {
        for x in 0..w {
            mean += LUMA[0] * img[[y, x, 0]] + LUMA[1] * img[[y, x, 1]] + LUMA[2] * img[[y, x, 2]];
        }
    }
    mean /= (h * w) as f64;
    img.mapv(|v| (factor * v + (1.0 - factor) * mean).clamp(0.0, 1.0))
}

/// Blend with the per-pixel grayscale: `factor = 1` is identity, `0` fully
/// desaturates.
pub fn adjust_saturation(img: &ImageTensor, factor: f64) -> ImageTensor {
    let (h, w, _) = img.dim();
    Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
        let gray =
            LUMA[0] * img[[y, x, 0]] + LUMA[1] * img[[y, x, 1]] + LUMA[2] * img[[y, x, 2]];
        (factor * img[[y, x, c]] + (1.0 - factor) * gray).clamp(0.0, 1.0)
    })
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let i = h6.floor() as i64 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Rotate every pixel's hue by `delta` turns (`delta` in `[-0.5, 0.5]`).
pub fn adjust_hue(img: &ImageTensor, delta: f64) -> ImageTensor {
    let (h, w, _) = img.dim();
    let mut out = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let (hue, s, v) = rgb_to_hsv(img[[y, x, 0]], img[[y, x, 1]], img[[y, x, 2]]);
            let (r, g, b) = hsv_to_rgb(hue + delta, s, v);
            out[[y, x, 0]] = r;
            out[[y, x, 1]] = g;
            out[[y, x, 2]] = b;
        }
    }
    out
}

/// Rotate by `angle_deg` about the image center, then translate by
/// `(tx, ty)` pixels. Exposed regions fill with zero (black).
pub fn affine(img: &ImageTensor, angle_deg: f64, tx: f64, ty: f64) -> ImageTensor {
    let (h, w, _) = img.dim();
    let theta = angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
        // Inverse map: undo translation, then rotate backwards around center.
        let u = x as f64 - tx - cx;
        let v = y as f64 - ty - cy;
        let src_x = cos * u + sin * v + cx;
        let src_y = -sin * u + cos * v + cy;
        sample_zero(img, src_y, src_x, c)
    })
}

/// Crop the `ch x cw` window at `(top, left)` and resize it to
/// `(out_h, out_w)`.
pub fn crop_resize(
    img: &ImageTensor,
    top: usize,
    left: usize,
    ch: usize,
    cw: usize,
    out_h: usize,
    out_w: usize,
) -> ImageTensor {
    let window = img
        .slice(ndarray::s![top..top + ch, left..left + cw, ..])
        .to_owned();
    resize_bilinear(&window, out_h, out_w)
}

/// Per-channel standardization `(v - mean) / std`. Output is unbounded.
pub fn normalize(img: &ImageTensor, mean: [f64; 3], std: [f64; 3]) -> ImageTensor {
    let (h, w, _) = img.dim();
    Array3::from_shape_fn((h, w, 3), |(y, x, c)| (img[[y, x, c]] - mean[c]) / std[c])
}

/// Inverse of [`normalize`].
pub fn denormalize(img: &ImageTensor, mean: [f64; 3], std: [f64; 3]) -> ImageTensor {
    let (h, w, _) = img.dim();
    Array3::from_shape_fn((h, w, 3), |(y, x, c)| img[[y, x, c]] * std[c] + mean[c])
}
