//! Binary checkpoint files.
//!
//! Layout: an 8-byte magic (`FUNDUSCK`), a little-endian `u32` metadata
//! length, a JSON metadata block, then every tensor as little-endian `f32`
//! in metadata manifest order. Training runs in `f64` but checkpoints narrow
//! to `f32` — loading a file and saving it again reproduces it byte for
//! byte, and the metadata carries a SHA-256 fingerprint of the payload that
//! is verified on load.
//!
//! The metadata also records the encoder/head configs that produced the
//! tensors, so a checkpoint can refuse to load into a mismatched
//! architecture instead of silently scrambling weights.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{EncoderConfig, HeadConfig, ModelBundle};

const MAGIC: &[u8; 8] = b"FUNDUSCK";
pub const FORMAT_MAJOR: u32 = 1;
pub const FORMAT_MINOR: u32 = 0;

/// One tensor's slot in the payload, in `f32` element units.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Everything the JSON block records.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CheckpointMeta {
    pub format_major: u32,
    pub format_minor: u32,
    /// Hex SHA-256 of the raw payload bytes.
    pub fingerprint: String,
    /// Which phase produced this file: `pretrain` or `finetune`.
    pub phase: String,
    pub epoch: usize,
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
    /// Free-form scalar summary (final loss, accuracy, ...).
    pub metrics: BTreeMap<String, f64>,
    pub tensors: Vec<TensorEntry>,
    /// Total payload length in `f32` elements.
    pub payload_len: usize,
}

/// An in-memory checkpoint: metadata plus named `f32` tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    /// Snapshot a model (parameters and batch-norm running statistics),
    /// narrowing to `f32`.
    pub fn from_model(
        model: &mut ModelBundle,
        phase: &str,
        epoch: usize,
        seed: u64,
        metrics: BTreeMap<String, f64>,
    ) -> Self {
        let mut tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)> = BTreeMap::new();
        model.for_each_param(&mut |p| {
            let data: Vec<f32> = p.value.iter().map(|&v| v as f32).collect();
            tensors.insert(p.name.clone(), (p.shape.clone(), data));
        });
        let mut entries = Vec::with_capacity(tensors.len());
        let mut offset = 0usize;
        for (name, (shape, data)) in &tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
                offset,
                len: data.len(),
            });
            offset += data.len();
        }
        let meta = CheckpointMeta {
            format_major: FORMAT_MAJOR,
            format_minor: FORMAT_MINOR,
            fingerprint: String::new(), // filled on save
            phase: phase.to_string(),
            epoch,
            seed,
            encoder: model.encoder_config,
            head: model.head_config.clone(),
            metrics,
            tensors: entries,
            payload_len: offset,
        };
        Checkpoint { meta, tensors }
    }

    fn payload_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.meta.payload_len * 4);
        for entry in &self.meta.tensors {
            let (_, data) = &self.tensors[&entry.name];
            for v in data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    }

    /// Serialize to the binary format (computing the fingerprint).
    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.payload_bytes();
        let mut meta = self.meta.clone();
        meta.fingerprint = hex::encode(Sha256::digest(&payload));
        let meta_json = serde_json::to_vec(&meta).expect("metadata serialization");
        let mut out = Vec::with_capacity(8 + 4 + meta_json.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta_json);
        out.extend_from_slice(&payload);
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let fail = |message: String| Error::CheckpointFormat {
            path: path.to_path_buf(),
            message,
        };
        if bytes.len() < 12 {
            return Err(fail(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(fail("bad magic (not a checkpoint file)".to_string()));
        }
        let meta_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        if bytes.len() < 12 + meta_len {
            return Err(fail(format!(
                "metadata truncated: header says {meta_len} bytes, {} available",
                bytes.len() - 12
            )));
        }
        let meta: CheckpointMeta = serde_json::from_slice(&bytes[12..12 + meta_len])
            .map_err(|e| fail(format!("metadata JSON: {e}")))?;
        if meta.format_major != FORMAT_MAJOR {
            return Err(Error::CheckpointVersion {
                path: path.to_path_buf(),
                found_major: meta.format_major,
                found_minor: meta.format_minor,
                supported_major: FORMAT_MAJOR,
            });
        }
        let payload = &bytes[12 + meta_len..];
        if payload.len() != meta.payload_len * 4 {
            return Err(fail(format!(
                "payload is {} bytes, metadata promises {}",
                payload.len(),
                meta.payload_len * 4
            )));
        }
        let fingerprint = hex::encode(Sha256::digest(payload));
        if fingerprint != meta.fingerprint {
            return Err(fail(format!(
                "payload fingerprint {fingerprint} does not match metadata {}",
                meta.fingerprint
            )));
        }
        let mut tensors = BTreeMap::new();
        for entry in &meta.tensors {
            let numel: usize = entry.shape.iter().product();
            if numel != entry.len {
                return Err(fail(format!(
                    "tensor {} shape {:?} disagrees with length {}",
                    entry.name, entry.shape, entry.len
                )));
            }
            let start = entry.offset * 4;
            let end = start + entry.len * 4;
            if end > payload.len() {
                return Err(fail(format!(
                    "tensor {} extends past the payload",
                    entry.name
                )));
            }
            let data: Vec<f32> = payload[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.insert(entry.name.clone(), (entry.shape.clone(), data));
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(path, &bytes)
    }

    /// All tensors widened back to `f64`, keyed by name.
    pub fn to_param_map(&self) -> BTreeMap<String, (Vec<usize>, Vec<f64>)> {
        self.tensors
            .iter()
            .map(|(name, (shape, data))| {
                (
                    name.clone(),
                    (shape.clone(), data.iter().map(|&v| v as f64).collect()),
                )
            })
            .collect()
    }

    /// Load every tensor into a model with matching encoder and head
    /// configs.
    pub fn load_all_into(&self, model: &mut ModelBundle) -> Result<usize> {
        if self.meta.encoder != model.encoder_config {
            return Err(Error::ArchitectureMismatch {
                message: format!(
                    "checkpoint encoder {:?} vs model {:?}",
                    self.meta.encoder, model.encoder_config
                ),
            });
        }
        if self.meta.head != model.head_config {
            return Err(Error::ArchitectureMismatch {
                message: format!(
                    "checkpoint head {:?} vs model {:?}",
                    self.meta.head, model.head_config
                ),
            });
        }
        model.load_param_map(&self.to_param_map(), "")
    }

    /// Load only `encoder.*` tensors — the transfer step. The target's head
    /// may differ; its encoder config must match.
    pub fn load_encoder_into(&self, model: &mut ModelBundle) -> Result<usize> {
        if self.meta.encoder != model.encoder_config {
            return Err(Error::ArchitectureMismatch {
                message: format!(
                    "checkpoint encoder {:?} vs model {:?}",
                    self.meta.encoder, model.encoder_config
                ),
            });
        }
        model.load_param_map(&self.to_param_map(), "encoder.")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_model, Architecture, ClassifierHeadConfig, ProjectionHeadConfig,
    };

    fn cfg() -> EncoderConfig {
        EncoderConfig {
            architecture: Architecture::SmallCnn,
            input_size: (16, 16),
            feature_dim: 16,
        }
    }

    fn sample_checkpoint() -> Checkpoint {
        let mut model = build_model(
            cfg(),
            HeadConfig::Projection(ProjectionHeadConfig::default()),
            77,
        )
        .unwrap();
        let mut metrics = BTreeMap::new();
        metrics.insert("final_loss".to_string(), 1.234);
        Checkpoint::from_model(&mut model, "pretrain", 3, 77, metrics)
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = sample_checkpoint();
        ck.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.tensors, ck.tensors);
        assert_eq!(loaded.meta.phase, "pretrain");
        assert_eq!(loaded.meta.epoch, 3);
        assert_eq!(loaded.meta.metrics["final_loss"], 1.234);
        // Saving the loaded checkpoint reproduces the file exactly.
        let path2 = dir.path().join("model2.ckpt");
        loaded.save(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn loading_restores_model_parameters_to_f32_precision() {
        let mut model = build_model(
            cfg(),
            HeadConfig::Projection(ProjectionHeadConfig::default()),
            77,
        )
        .unwrap();
        let before = model.param_map();
        let ck = Checkpoint::from_model(&mut model, "pretrain", 0, 77, BTreeMap::new());

        let mut other = build_model(
            cfg(),
            HeadConfig::Projection(ProjectionHeadConfig::default()),
            99,
        )
        .unwrap();
        ck.load_all_into(&mut other).unwrap();
        let after = other.param_map();
        for (name, (shape, values)) in &before {
            let (shape2, loaded) = &after[name];
            assert_eq!(shape, shape2);
            for (a, b) in values.iter().zip(loaded) {
                assert_eq!(*a as f32, *b as f32, "{name} drifted past f32");
            }
        }
    }

    #[test]
    fn corrupted_files_are_rejected_with_reasons() {
        let ck = sample_checkpoint();
        let good = ck.to_bytes();
        let path = Path::new("test.ckpt");

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        let err = Checkpoint::from_bytes(path, &bad_magic).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");

        let truncated = &good[..good.len() - 5];
        assert!(Checkpoint::from_bytes(path, truncated).is_err());

        let mut flipped = good.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 0x55;
        let err = Checkpoint::from_bytes(path, &flipped).unwrap_err();
        assert!(err.to_string().contains("fingerprint"), "{err}");

        assert!(Checkpoint::from_bytes(path, b"short").is_err());
    }

    #[test]
    fn future_major_version_is_refused() {
        let ck = sample_checkpoint();
        let mut meta = ck.meta.clone();
        meta.format_major = FORMAT_MAJOR + 1;
        let altered = Checkpoint {
            meta,
            tensors: ck.tensors.clone(),
        };
        let bytes = altered.to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(Path::new("v.ckpt"), &bytes),
            Err(Error::CheckpointVersion { .. })
        ));
    }

    #[test]
    fn encoder_transfer_crosses_heads_but_not_architectures() {
        let ck = sample_checkpoint();
        let mut classifier = build_model(
            cfg(),
            HeadConfig::Classifier(ClassifierHeadConfig::new(4)),
            5,
        )
        .unwrap();
        let loaded = ck.load_encoder_into(&mut classifier).unwrap();
        assert!(loaded > 0);
        // Full load refuses the head mismatch.
        assert!(matches!(
            ck.load_all_into(&mut classifier),
            Err(Error::ArchitectureMismatch { .. })
        ));
        // Encoder load refuses a different encoder.
        let mut wider = build_model(
            EncoderConfig { feature_dim: 32, ..cfg() },
            HeadConfig::Classifier(ClassifierHeadConfig::new(4)),
            5,
        )
        .unwrap();
        assert!(matches!(
            ck.load_encoder_into(&mut wider),
            Err(Error::ArchitectureMismatch { .. })
        ));
    }

    #[test]
    fn tensor_manifest_is_contiguous_and_sorted() {
        let ck = sample_checkpoint();
        let mut expected_offset = 0;
        let mut names = Vec::new();
        for entry in &ck.meta.tensors {
            assert_eq!(entry.offset, expected_offset);
            expected_offset += entry.len;
            names.push(entry.name.clone());
        }
        assert_eq!(expected_offset, ck.meta.payload_len);
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        // Running statistics ride along with trainable parameters.
        assert!(names.iter().any(|n| n.ends_with("running_mean")));
    }
}
