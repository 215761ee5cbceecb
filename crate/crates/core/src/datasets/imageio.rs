//! Image decoding into the crate's working representation.
//!
//! Images are handled as `(height, width, 3)` arrays of `f64` RGB values in
//! `[0, 1]`. Decoding divides 8-bit channels by 255; encoding rounds back, so
//! a load/save round trip of an 8-bit PNG is lossless.

use std::path::Path;

use image::{ImageBuffer, Rgb};
use ndarray::Array3;

use crate::error::{Error, Result};

/// RGB image as `(H, W, 3)` values in `[0, 1]`.
pub type ImageTensor = Array3<f64>;

/// Decode an image file into an [`ImageTensor`].
///
/// Any color layout the underlying decoder understands is converted to RGB;
/// grayscale sources are replicated across the three channels.
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let decoded = image::open(path).map_err(|e| Error::ImageDecode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    let mut out = Array3::zeros((h as usize, w as usize, 3));
    for (x, y, pixel) in rgb.enumerate_pixels() {
        for c in 0..3 {
            out[[y as usize, x as usize, c]] = f64::from(pixel[c]) / 255.0;
        }
    }
    Ok(out)
}

/// Encode an [`ImageTensor`] as an 8-bit PNG, clamping values into `[0, 1]`.
pub fn save_image(img: &ImageTensor, path: &Path) -> Result<()> {
    let buffer = to_rgb8(img);
    buffer.save(path).map_err(|e| Error::ImageDecode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Convert to an 8-bit RGB buffer (clamping, round-to-nearest).
pub fn to_rgb8(img: &ImageTensor) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
    let (h, w, _) = img.dim();
    ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let px = |c: usize| {
            let v = img[[y as usize, x as usize, c]].clamp(0.0, 1.0);
            (v * 255.0).round() as u8
        };
        Rgb([px(0), px(1), px(2)])
    })
}
