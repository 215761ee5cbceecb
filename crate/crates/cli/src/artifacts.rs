//! Artifact plumbing shared by the subcommands: provenance sidecars,
//! training-log CSVs, and the results CSV schema.
//!
//! Every file a command emits gets a `<name>.provenance.json` sidecar tying
//! it to the config fingerprint and seed that produced it. Sidecars contain
//! nothing volatile (no timestamps, no absolute paths), so reruns are
//! byte-identical — which is also what makes the determinism tests able to
//! compare whole output directories.

use std::path::{Path, PathBuf};

use fundus_core::trainer::TrainLogRow;

use crate::config::ExperimentConfig;
use crate::{runtime, validation, CliResult};

/// Columns of the results CSV, in order.
pub const RESULTS_HEADER: [&str; 7] = [
    "dataset",
    "task",
    "fraction",
    "accuracy",
    "precision",
    "recall",
    "f1",
];

/// One sweep cell: metrics are percentages in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub task: String,
    pub fraction: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// What a provenance sidecar records.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    /// Subcommand that produced the artifact.
    pub command: String,
    /// Full SHA-256 fingerprint of the experiment config.
    pub config_fingerprint: String,
    /// Experiment master seed.
    pub seed: u64,
    /// File name of the artifact the sidecar describes.
    pub artifact: String,
}

/// Sidecar path for an artifact: `<artifact>.provenance.json`.
pub fn provenance_path(artifact: &Path) -> PathBuf {
    let mut name = artifact
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".provenance.json");
    artifact.with_file_name(name)
}

/// Write the sidecar for `artifact`.
pub fn write_provenance(
    artifact: &Path,
    command: &str,
    cfg: &ExperimentConfig,
) -> CliResult<()> {
    let record = Provenance {
        command: command.to_string(),
        config_fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
        artifact: artifact
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let path = provenance_path(artifact);
    let json = serde_json::to_string_pretty(&record).expect("provenance serialization");
    std::fs::write(&path, json.as_bytes())
        .map_err(|e| runtime(format!("write {}: {e}", path.display())))?;
    Ok(())
}

/// Write an optimizer-step log: `step,epoch,loss,learning_rate,trust_ratio_median`.
pub fn write_train_log(path: &Path, rows: &[TrainLogRow]) -> CliResult<()> {
    let mut out = String::from("step,epoch,loss,learning_rate,trust_ratio_median\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{},{:.6}\n",
            r.step, r.epoch, r.loss, r.learning_rate, r.trust_ratio_median
        ));
    }
    std::fs::write(path, out).map_err(|e| runtime(format!("write {}: {e}", path.display())))
}

/// Write the results CSV with the pinned header and fixed number formatting
/// (four decimals for metrics), so identical results give identical bytes.
pub fn write_results_csv(path: &Path, rows: &[SweepRow]) -> CliResult<()> {
    let mut out = String::from("dataset,task,fraction,accuracy,precision,recall,f1\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4}\n",
            r.dataset, r.task, r.fraction, r.accuracy, r.precision, r.recall, r.f1
        ));
    }
    std::fs::write(path, out).map_err(|e| runtime(format!("write {}: {e}", path.display())))
}

/// Read a results CSV, verifying the exact header. Malformed input is a
/// validation failure naming the offending line.
pub fn read_results_csv(path: &Path) -> CliResult<Vec<SweepRow>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("results csv {}: {e}", path.display())))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| validation(format!("results csv {}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != RESULTS_HEADER {
        return Err(validation(format!(
            "results csv {}: header `{}` does not match `{}`",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(","),
            RESULTS_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| validation(format!("results csv {}: {e}", path.display())))?;
        let field = |j: usize| record.get(j).unwrap_or_default();
        let num = |j: usize| -> CliResult<f64> {
            field(j).parse::<f64>().map_err(|_| {
                validation(format!(
                    "results csv {} row {}: `{}` is not a number in column {}",
                    path.display(),
                    i + 1,
                    field(j),
                    RESULTS_HEADER[j]
                ))
            })
        };
        rows.push(SweepRow {
            dataset: field(0).to_string(),
            task: field(1).to_string(),
            fraction: num(2)?,
            accuracy: num(3)?,
            precision: num(4)?,
            recall: num(5)?,
            f1: num(6)?,
        });
    }
    Ok(rows)
}

/// `0.1 → "10%"`, `1.0 → "100%"`, `0.125 → "12.5%"`.
pub fn fraction_percent(f: f64) -> String {
    let pct = f * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}%", pct.round() as i64)
    } else {
        format!("{pct}%")
    }
}

/// File-name-safe fraction tag: `0.1 → "10"`, `0.125 → "12p5"`.
pub fn fraction_tag(f: f64) -> String {
    fraction_percent(f)
        .trim_end_matches('%')
        .replace('.', "p")
}
