//! Deterministic synthetic fundus-like corpus for CPU-scale runs.
//!
//! Each image is a dark circular disc (the "fundus") with thin darker vessel
//! streaks as label-independent clutter. Class identity is carried by bright
//! circular blobs: class 0 has none, class `c > 0` has at least `3c`. Blob
//! count and size grow with the class, so a plain pixel-sum threshold already
//! separates classes — the corpus tests whether a pipeline can learn that
//! structure, not whether the structure exists.
//!
//! Generation is keyed entirely by `(spec, seed)`: regenerating into a fresh
//! directory reproduces every PNG, the manifest, and the geometry sidecar
//! byte for byte.

use std::path::{Path, PathBuf};

use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::datasets::imageio::{save_image, ImageTensor};
use crate::datasets::manifest::{DatasetManifest, Sample, SplitAssignment};
use crate::error::{Error, Result};
use crate::rng::rng_from;

const TAG_SYNTH: u64 = 0x5359;

/// Base disc color (dark reddish, fundus-like).
const BASE_COLOR: [f64; 3] = [0.42, 0.26, 0.14];
/// Additive blob color (bright, yellowish lesion).
const BLOB_COLOR: [f64; 3] = [0.45, 0.42, 0.10];
/// How strongly vessels darken the disc where they pass.
const VESSEL_DARKEN: f64 = 0.45;

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    /// Number of classes (≥ 2).
    pub classes: usize,
    /// Images generated per class (≥ 1).
    pub per_class: usize,
    /// Square image side in pixels (≥ 32).
    pub size: usize,
    /// Master seed; every image derives its own stream from it.
    pub seed: u64,
}

/// One bright blob, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlobCircle {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

/// Geometry record for one generated image (used by localization checks).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticImageMeta {
    pub id: String,
    pub class: usize,
    pub blobs: Vec<BlobCircle>,
}

/// A generated corpus: the manifest plus per-image blob geometry.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub manifest: DatasetManifest,
    pub meta: Vec<SyntheticImageMeta>,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidTrainConfig(format!(
                "synthetic corpus needs at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.per_class == 0 {
            return Err(Error::InvalidTrainConfig(
                "synthetic corpus needs at least 1 image per class".to_string(),
            ));
        }
        if self.size < 32 {
            return Err(Error::InvalidTrainConfig(format!(
                "synthetic image side must be ≥ 32, got {}",
                self.size
            )));
        }
        Ok(())
    }
}

/// Generate a corpus under `out_dir`: `images/*.png`, `manifest.csv`, and a
/// `blobs.json` geometry sidecar.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, out_dir: &Path) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let mut samples = Vec::new();
    let mut meta = Vec::new();
    for class in 0..spec.classes {
        for i in 0..spec.per_class {
            let id = format!("syn{class}-{i:04}");
            let mut rng = rng_from(spec.seed, &[TAG_SYNTH, class as u64, i as u64]);
            let (img, blobs) = render_image(spec.size, class, &mut rng);
            let rel = PathBuf::from("images").join(format!("{id}.png"));
            save_image(&img, &out_dir.join(&rel))?;
            samples.push(Sample {
                id: id.clone(),
                image_path: rel,
                grade: class,
                label: None,
                split: SplitAssignment::Unassigned,
            });
            meta.push(SyntheticImageMeta { id, class, blobs });
        }
    }

    let manifest = DatasetManifest {
        name: "synthetic".to_string(),
        root: out_dir.to_path_buf(),
        num_grades: spec.classes,
        samples,
    };
    manifest.save(&out_dir.join("manifest.csv"))?;

    let geometry = serde_json::to_string_pretty(&meta).expect("geometry serialization");
    let geo_path = out_dir.join("blobs.json");
    std::fs::write(&geo_path, geometry).map_err(|e| Error::io(&geo_path, e))?;

    Ok(SyntheticCorpus { manifest, meta })
}

/// Load the geometry sidecar written by [`generate_synthetic_corpus`].
pub fn load_blob_geometry(path: &Path) -> Result<Vec<SyntheticImageMeta>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::CheckpointFormat {
        path: path.to_path_buf(),
        message: format!("blob geometry JSON: {e}"),
    })
}

/// Render one image. Draw order: disc, vessels, blobs, clamp.
fn render_image(size: usize, class: usize, rng: &mut ChaCha8Rng) -> (ImageTensor, Vec<BlobCircle>) {
    let s = size as f64;
    let center = s / 2.0;
    let disc_r = 0.45 * s;

    // Small label-independent brightness jitter on the disc. Kept well below
    // the pixel budget of the class blobs so sums still separate classes.
    let base_jitter: f64 = 1.0 + rng.random_range(-0.015..0.015);

    // Vessels: fixed count and length so their pixel budget is constant.
    let vessel_mask = render_vessels(size, center, disc_r, rng);

    // Blobs: none for class 0, at least 3c afterwards.
    let count = if class == 0 {
        0
    } else {
        3 * class + rng.random_range(0..=1)
    };
    let mut blobs: Vec<BlobCircle> = Vec::with_capacity(count);
    for _ in 0..count {
        // Rejection-sample centers so blobs stay disjoint and their combined
        // pixel budget does not collapse when two land on the same spot. If
        // the disc is too crowded after 64 tries, accept the overlap rather
        // than drop the blob (the per-class count is a contract).
        let mut chosen = BlobCircle { cx: center, cy: center, radius: 0.065 * s };
        for _attempt in 0..64 {
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let u: f64 = rng.random_range(0.0..1.0);
            let rho = 0.72 * disc_r * u.sqrt();
            let radius = rng.random_range(0.065 * s..0.095 * s);
            chosen = BlobCircle {
                cx: center + rho * phi.cos(),
                cy: center + rho * phi.sin(),
                radius,
            };
            let clear = blobs.iter().all(|b| {
                let dx = b.cx - chosen.cx;
                let dy = b.cy - chosen.cy;
                dx.hypot(dy) >= b.radius + chosen.radius
            });
            if clear {
                break;
            }
        }
        blobs.push(chosen);
    }

    let mut img = Array3::zeros((size, size, 3));
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 + 0.5 - center;
            let dy = y as f64 + 0.5 - center;
            let d = (dx * dx + dy * dy).sqrt();
            let disc_w = (disc_r - d).clamp(0.0, 1.0);
            if disc_w == 0.0 {
                continue;
            }
            let dark = 1.0 - VESSEL_DARKEN * vessel_mask[y * size + x];
            let mut blob_w = 0.0;
            for b in &blobs {
                let bdx = x as f64 + 0.5 - b.cx;
                let bdy = y as f64 + 0.5 - b.cy;
                let bd = (bdx * bdx + bdy * bdy).sqrt();
                blob_w += (b.radius - bd).clamp(0.0, 1.0);
            }
            blob_w = blob_w.min(1.0);
            for c in 0..3 {
                let v = disc_w * (BASE_COLOR[c] * base_jitter * dark + BLOB_COLOR[c] * blob_w);
                img[[y, x, c]] = v.clamp(0.0, 1.0);
            }
        }
    }
    (img, blobs)
}

/// Stamp four wandering vessel streaks into a soft coverage mask.
fn render_vessels(size: usize, center: f64, disc_r: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut mask = vec![0.0f64; size * size];
    let steps = (0.7 * disc_r).round() as usize;
    for _ in 0..4 {
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let rho = rng.random_range(0.0..0.2 * disc_r);
        let mut x = center + rho * phi.cos();
        let mut y = center + rho * phi.sin();
        let mut angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        for _ in 0..steps {
            angle += rng.random_range(-0.25..0.25);
            x += angle.cos();
            y += angle.sin();
            stamp(&mut mask, size, x, y);
        }
    }
    mask
}

/// Soft 1-pixel-radius stamp: `w = clamp(1.1 - d, 0, 1)`, combined by max.
fn stamp(mask: &mut [f64], size: usize, cx: f64, cy: f64) {
    let x0 = (cx - 2.0).floor().max(0.0) as usize;
    let x1 = ((cx + 2.0).ceil() as usize).min(size - 1);
    let y0 = (cy - 2.0).floor().max(0.0) as usize;
    let y1 = ((cy + 2.0).ceil() as usize).min(size - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let w = (1.1 - (dx * dx + dy * dy).sqrt()).clamp(0.0, 1.0);
            let cell = &mut mask[y * size + x];
            *cell = cell.max(w);
        }
    }
}
