//! The experiment configuration file.
//!
//! One TOML document drives every subcommand. The experiment `seed` is the
//! single source of randomness: the per-phase seeds inside the nested
//! pretraining/fine-tuning configs are *derived* from it on load (any value
//! written in the file for those nested seeds is overwritten), so changing
//! one top-level number reseeds the whole pipeline coherently.
//!
//! A SHA-256 fingerprint of the canonicalized config is stamped into every
//! artifact's provenance sidecar, which ties results back to the exact
//! settings that produced them.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use fundus_core::rng::derive_seed;
use fundus_core::trainer::{FinetuneConfig, PretrainConfig};

use crate::{validation, CliResult};

/// Environment variable that rebases relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "FUNDUS_OUTPUT_ROOT";

const TAG_PRETRAIN_PHASE: u64 = 0x5052;
const TAG_FINETUNE_PHASE: u64 = 0x4654;
const TAG_SPLIT: u64 = 0x5350;

/// A dataset the experiment reads: a registered name and its manifest file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DatasetRef {
    /// Dataset name; decides the grade range the manifest loader enforces.
    pub name: String,
    /// Path to the `id,image_path,grade` manifest CSV.
    pub manifest: PathBuf,
}

impl Default for DatasetRef {
    fn default() -> Self {
        DatasetRef {
            name: "synthetic".to_string(),
            manifest: PathBuf::new(),
        }
    }
}

/// Train/val/test ratios for the stratified split.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn as_tuple(&self) -> (f64, f64, f64) {
        (self.train, self.val, self.test)
    }
}

/// Label-efficiency sweep settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    /// Label fractions to fine-tune at; sorted and deduplicated on load.
    pub fractions: Vec<f64>,
    /// Tasks to run: any of `binary`, `multiclass`.
    pub tasks: Vec<String>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            fractions: vec![0.1, 0.2, 0.5, 1.0],
            tasks: vec!["binary".to_string()],
        }
    }
}

/// Everything one experiment needs, in file order.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; all phase seeds derive from it.
    pub seed: u64,
    /// Where artifacts go (checkpoints, logs, CSVs, reports, plots).
    pub output_dir: PathBuf,
    /// The labelled target dataset (fine-tuning and evaluation).
    pub dataset: DatasetRef,
    /// Optional separate pretraining corpus (cross-domain transfer). When
    /// absent, pretraining uses `dataset`.
    pub pretrain_dataset: Option<DatasetRef>,
    pub split: SplitRatios,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub sweep: SweepSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: PathBuf::from("runs/experiment"),
            dataset: DatasetRef::default(),
            pretrain_dataset: None,
            split: SplitRatios::default(),
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
            sweep: SweepSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parse, normalize, and structurally validate a config file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| validation(format!("config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| validation(format!("config {}: {e}", path.display())))?;
        cfg.normalize();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Stamp derived phase seeds and canonicalize the sweep fraction list.
    pub fn normalize(&mut self) {
        self.pretrain.seed = derive_seed(self.seed, &[TAG_PRETRAIN_PHASE]);
        self.finetune.seed = derive_seed(self.seed, &[TAG_FINETUNE_PHASE]);
        self.sweep
            .fractions
            .sort_by(|a, b| a.partial_cmp(b).expect("finite fractions"));
        self.sweep.fractions.dedup();
    }

    /// Seed for the stratified split of any dataset in this experiment.
    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, &[TAG_SPLIT])
    }

    /// Structural checks that need no filesystem access. Field names appear
    /// in the messages so a bad file is fixable from the error alone.
    pub fn validate(&self) -> CliResult<()> {
        if self.output_dir.as_os_str().is_empty() {
            return Err(validation("output_dir: must not be empty"));
        }
        if self.dataset.name.is_empty() {
            return Err(validation("dataset.name: must not be empty"));
        }
        for f in &self.sweep.fractions {
            if !(f.is_finite() && *f > 0.0 && *f <= 1.0) {
                return Err(validation(format!(
                    "sweep.fractions: {f} outside (0, 1]"
                )));
            }
        }
        if self.sweep.fractions.is_empty() {
            return Err(validation("sweep.fractions: must not be empty"));
        }
        if self.sweep.tasks.is_empty() {
            return Err(validation("sweep.tasks: must not be empty"));
        }
        for t in &self.sweep.tasks {
            if t != "binary" && t != "multiclass" {
                return Err(validation(format!(
                    "sweep.tasks: unknown task `{t}` (expected binary or multiclass)"
                )));
            }
        }
        let (rt, rv, rs) = self.split.as_tuple();
        if !(rt > 0.0 && rv > 0.0 && rs > 0.0) || (rt + rv + rs - 1.0).abs() > 1e-9 {
            return Err(validation(format!(
                "split: ratios ({rt}, {rv}, {rs}) must be positive and sum to 1"
            )));
        }
        self.pretrain
            .validate()
            .map_err(|e| validation(format!("pretrain: {e}")))?;
        self.finetune
            .validate()
            .map_err(|e| validation(format!("finetune: {e}")))?;
        Ok(())
    }

    /// The dataset used for pretraining.
    pub fn pretrain_dataset(&self) -> &DatasetRef {
        self.pretrain_dataset.as_ref().unwrap_or(&self.dataset)
    }

    /// Output directory after applying the root override: a relative
    /// `output_dir` is rebased under `root` when one is given.
    pub fn output_dir_under(&self, root: Option<&Path>) -> PathBuf {
        match root {
            Some(r) if self.output_dir.is_relative() => r.join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    /// Output directory honoring the `FUNDUS_OUTPUT_ROOT` environment
    /// variable.
    pub fn resolved_output_dir(&self) -> PathBuf {
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
        self.output_dir_under(root.as_deref())
    }

    /// Hex SHA-256 of the canonical (normalized, JSON-serialized) config.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialization");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// First 12 hex characters of [`Self::fingerprint`], for filenames and
    /// log lines.
    pub fn short_fingerprint(&self) -> String {
        self.fingerprint()[..12].to_string()
    }

    /// Canonical TOML rendering (what `--dry-run` prints).
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fundus_core::datasets::LabelScheme;

    fn write_config(dir: &Path, text: &str) -> PathBuf {
        let path = dir.join("exp.toml");
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn minimal_file_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(
            dir.path(),
            r#"
seed = 42
output_dir = "runs/demo"

[dataset]
name = "synthetic"
manifest = "data/manifest.csv"
"#,
        );
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.sweep.fractions, [0.1, 0.2, 0.5, 1.0]);
        assert_eq!(cfg.split.train, 0.7);
        assert_eq!(cfg.pretrain.temperature, 0.5);
        assert_eq!(cfg.finetune.label_scheme, LabelScheme::Binary { threshold: 1 });
    }

    #[test]
    fn phase_seeds_derive_from_experiment_seed() {
        let mut a = ExperimentConfig { seed: 1, ..Default::default() };
        let mut b = ExperimentConfig { seed: 1, ..Default::default() };
        // Whatever the nested files said, normalize overrides.
        a.pretrain.seed = 999;
        b.pretrain.seed = 123;
        a.normalize();
        b.normalize();
        assert_eq!(a.pretrain.seed, b.pretrain.seed);
        assert_ne!(a.pretrain.seed, a.finetune.seed);

        let mut c = ExperimentConfig { seed: 2, ..Default::default() };
        c.normalize();
        assert_ne!(a.pretrain.seed, c.pretrain.seed);
    }

    #[test]
    fn unknown_top_level_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), "seed = 1\nsurprise = true\n");
        let err = ExperimentConfig::load(&path).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("surprise"), "{err}");
    }

    #[test]
    fn invalid_fields_name_themselves() {
        let cases: &[(&str, &str)] = &[
            ("[sweep]\nfractions = [0.5, 1.5]\n", "sweep.fractions"),
            ("[sweep]\nfractions = []\n", "sweep.fractions"),
            ("[sweep]\ntasks = [\"ternary\"]\n", "sweep.tasks"),
            ("[split]\ntrain = 0.9\nval = 0.3\ntest = 0.1\n", "split"),
            ("output_dir = \"\"\n", "output_dir"),
            ("[pretrain]\ntemperature = -1.0\n", "pretrain"),
        ];
        let dir = tempfile::tempdir().unwrap();
        for (body, field) in cases {
            let path = write_config(dir.path(), body);
            let err = ExperimentConfig::load(&path).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{body}");
            assert!(
                err.to_string().contains(field),
                "error for `{body}` does not name `{field}`: {err}"
            );
        }
    }

    #[test]
    fn fraction_list_is_sorted_and_deduplicated() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.fractions = vec![1.0, 0.1, 0.5, 0.1];
        cfg.normalize();
        assert_eq!(cfg.sweep.fractions, [0.1, 0.5, 1.0]);
    }

    #[test]
    fn fingerprint_tracks_content_not_identity() {
        let a = ExperimentConfig { seed: 7, ..Default::default() };
        let b = ExperimentConfig { seed: 7, ..Default::default() };
        let c = ExperimentConfig { seed: 8, ..Default::default() };
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.short_fingerprint().len(), 12);
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn output_root_rebases_relative_dirs_only() {
        let cfg = ExperimentConfig {
            output_dir: PathBuf::from("runs/a"),
            ..Default::default()
        };
        assert_eq!(
            cfg.output_dir_under(Some(Path::new("/scratch"))),
            Path::new("/scratch/runs/a")
        );
        assert_eq!(cfg.output_dir_under(None), Path::new("runs/a"));
        let abs = ExperimentConfig {
            output_dir: PathBuf::from("/fixed/out"),
            ..Default::default()
        };
        assert_eq!(
            abs.output_dir_under(Some(Path::new("/scratch"))),
            Path::new("/fixed/out")
        );
    }

    #[test]
    fn toml_round_trip_preserves_the_config() {
        let mut cfg = ExperimentConfig {
            seed: 5,
            ..Default::default()
        };
        cfg.normalize();
        let text = cfg.to_toml();
        let mut back: ExperimentConfig = toml::from_str(&text).unwrap();
        back.normalize();
        assert_eq!(cfg, back);
    }
}
