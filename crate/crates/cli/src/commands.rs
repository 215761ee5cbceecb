//! Subcommand implementations.
//!
//! Every command follows the same shape: load and validate inputs (failures
//! exit 1), take the output lock if it mutates the output directory, do the
//! work (failures exit 2), then write artifacts with provenance sidecars.
//! The functions are plain library calls so tests can run whole pipelines
//! in-process.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fundus_core::datasets::{
    generate_synthetic_corpus, load_image, stratified_split, DatasetManifest, LabelScheme,
    SplitSpec, SyntheticSpec,
};
use fundus_core::explain::{grad_cam, overlay};
use fundus_core::model::HeadConfig;
use fundus_core::trainer::checkpoint::Checkpoint;
use fundus_core::trainer::{
    collect_images, eval_pipeline_for, evaluate, finetune, model_from_checkpoint, pretrain,
    EncoderInit, EvalOutput, FinetuneConfig,
};

use crate::artifacts::{
    fraction_tag, write_provenance, write_results_csv, write_train_log, SweepRow,
};
use crate::config::{DatasetRef, ExperimentConfig};
use crate::lock::OutputLock;
use crate::plot::Series;
use crate::report::render_report;
use crate::{runtime, validation, CliResult};

/// Default pretext checkpoint location inside the output directory.
pub fn pretext_checkpoint_path(out_dir: &Path) -> PathBuf {
    out_dir.join("pretext.ckpt")
}

/// Generate a synthetic corpus.
pub fn cmd_synth(
    out: &Path,
    classes: usize,
    per_class: usize,
    size: usize,
    seed: u64,
) -> CliResult<()> {
    let spec = SyntheticSpec {
        classes,
        per_class,
        size,
        seed,
    };
    let _lock = OutputLock::acquire(out)?;
    let corpus = generate_synthetic_corpus(&spec, out).map_err(validation)?;
    println!(
        "synth: wrote {} images under {} (classes {classes}, per-class {per_class}, size {size}, seed {seed})",
        corpus.manifest.samples.len(),
        out.display()
    );
    println!("synth: manifest {}", out.join("manifest.csv").display());
    Ok(())
}

/// Load a manifest, mapping failures to validation errors that name the
/// config field.
fn load_manifest(ds: &DatasetRef, field: &str) -> CliResult<DatasetManifest> {
    if ds.manifest.as_os_str().is_empty() {
        return Err(validation(format!("{field}.manifest: no path configured")));
    }
    DatasetManifest::load(&ds.manifest, &ds.name)
        .map_err(|e| validation(format!("{field}.manifest: {e}")))
}

/// Load (or create and persist) the stratified split for a dataset. The
/// split file keeps every command of an experiment on identical ids.
/// Callers hold the output lock before creating a missing split.
fn ensure_split(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    manifest: &DatasetManifest,
    dataset_name: &str,
    field: &str,
    command: &str,
) -> CliResult<SplitSpec> {
    let path = out_dir.join(format!("split_{dataset_name}.json"));
    if path.exists() {
        return SplitSpec::load(&path)
            .map_err(|e| validation(format!("split file {}: {e}", path.display())));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| runtime(format!("create {}: {e}", out_dir.display())))?;
    let split = stratified_split(manifest, cfg.split.as_tuple(), cfg.split_seed())
        .map_err(|e| validation(format!("{field}: {e}")))?;
    split
        .save(&path)
        .map_err(|e| runtime(format!("write {}: {e}", path.display())))?;
    write_provenance(&path, command, cfg)?;
    Ok(split)
}

/// Contrastive pretraining on the (label-free) train split of the
/// pretraining dataset.
pub fn cmd_pretrain(config_path: &Path, dry_run: bool) -> CliResult<()> {
    let cfg = ExperimentConfig::load(config_path)?;
    if dry_run {
        print!("{}", cfg.to_toml());
        println!("# dry run: config valid, fingerprint {}", cfg.short_fingerprint());
        return Ok(());
    }
    let out_dir = cfg.resolved_output_dir();
    let ds = cfg.pretrain_dataset().clone();
    let manifest = load_manifest(&ds, "pretrain_dataset")?;
    let _lock = OutputLock::acquire(&out_dir)?;
    let split = ensure_split(&cfg, &out_dir, &manifest, &ds.name, "pretrain_dataset", "pretrain")?;

    println!(
        "pretrain: {} images from {} ({} epochs, batch {})",
        split.train_ids.len(),
        ds.name,
        cfg.pretrain.epochs,
        cfg.pretrain.batch_size
    );
    let images = collect_images(&manifest, &split.train_ids)?;
    let output = pretrain(&images, &cfg.pretrain)?;
    for epoch in 0..cfg.pretrain.epochs {
        let losses: Vec<f64> = output
            .log
            .iter()
            .filter(|r| r.epoch == epoch)
            .map(|r| r.loss)
            .collect();
        let mean: f64 = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
        println!("pretrain: epoch {}/{} mean loss {mean:.4}", epoch + 1, cfg.pretrain.epochs);
    }

    let ckpt_path = pretext_checkpoint_path(&out_dir);
    output.checkpoint.save(&ckpt_path)?;
    write_provenance(&ckpt_path, "pretrain", &cfg)?;
    let log_path = out_dir.join("pretrain_log.csv");
    write_train_log(&log_path, &output.log)?;
    write_provenance(&log_path, "pretrain", &cfg)?;
    println!(
        "pretrain: checkpoint {} (final loss {:.4})",
        ckpt_path.display(),
        output.final_loss
    );
    Ok(())
}

/// Load a checkpoint given on the command line (validation failure: the
/// file is an input precondition).
fn load_checkpoint_input(path: &Path) -> CliResult<Checkpoint> {
    Checkpoint::load(path).map_err(validation)
}

/// Fine-tune once at the configured (or overridden) label fraction and
/// report validation-split metrics. The test split stays untouched for
/// `evaluate` and `sweep`.
pub fn cmd_finetune(
    config_path: &Path,
    fraction: Option<f64>,
    checkpoint: Option<PathBuf>,
    from_scratch: bool,
) -> CliResult<()> {
    let cfg = ExperimentConfig::load(config_path)?;
    let out_dir = cfg.resolved_output_dir();
    let mut ft = cfg.finetune.clone();
    if let Some(f) = fraction {
        if !(f.is_finite() && f > 0.0 && f <= 1.0) {
            return Err(validation(format!("--fraction {f} outside (0, 1]")));
        }
        ft.label_fraction = f;
    }
    if from_scratch && checkpoint.is_some() {
        return Err(validation(
            "--from-scratch and --checkpoint are mutually exclusive",
        ));
    }
    let pretext = if from_scratch {
        None
    } else {
        let path = checkpoint.unwrap_or_else(|| pretext_checkpoint_path(&out_dir));
        if !path.exists() {
            return Err(validation(format!(
                "checkpoint {} not found (run `fundus pretrain` first or pass --from-scratch)",
                path.display()
            )));
        }
        Some(load_checkpoint_input(&path)?)
    };

    let manifest = load_manifest(&cfg.dataset, "dataset")?;
    let _lock = OutputLock::acquire(&out_dir)?;
    let split = ensure_split(&cfg, &out_dir, &manifest, &cfg.dataset.name, "dataset", "finetune")?;

    let task = ft.label_scheme.task_name().to_string();
    let tag = fraction_tag(ft.label_fraction);
    println!(
        "finetune[{task} f={}]: {} candidate ids, {} epochs, {:?} mode",
        ft.label_fraction,
        split.train_ids.len(),
        ft.epochs,
        ft.mode
    );
    let init = match &pretext {
        Some(ck) => EncoderInit::Pretrained(ck),
        None => EncoderInit::Random,
    };
    let output = finetune(&manifest, &split, init, &ft)?;

    let ckpt_path = out_dir.join(format!("finetune_{task}_f{tag}.ckpt"));
    output.checkpoint.save(&ckpt_path)?;
    write_provenance(&ckpt_path, "finetune", &cfg)?;
    let log_path = out_dir.join(format!("finetune_{task}_f{tag}_log.csv"));
    write_train_log(&log_path, &output.log)?;
    write_provenance(&log_path, "finetune", &cfg)?;

    let mut model = model_from_checkpoint(&output.checkpoint)?;
    let eval = evaluate(
        &mut model,
        &manifest,
        &split.val_ids,
        &ft.label_scheme,
        &ft.augment,
        ft.batch_size,
    )?;
    println!(
        "finetune: checkpoint {} (final loss {:.4}, trained on {} ids)",
        ckpt_path.display(),
        output.final_loss,
        output.train_ids.len()
    );
    print_report("val", &eval);
    Ok(())
}

fn print_report(split: &str, eval: &EvalOutput) {
    let r = &eval.report;
    println!(
        "{split}: accuracy {:.2} precision {:.2} recall {:.2} f1 {:.2} ({} samples, loss {:.4})",
        100.0 * r.accuracy,
        100.0 * r.precision,
        100.0 * r.recall,
        100.0 * r.f1,
        r.total,
        eval.mean_loss
    );
}

/// Score a checkpoint on one split of the target dataset.
pub fn cmd_evaluate(config_path: &Path, checkpoint: &Path, split_name: &str) -> CliResult<()> {
    if !matches!(split_name, "train" | "val" | "test") {
        return Err(validation(format!(
            "--split {split_name}: expected train, val, or test"
        )));
    }
    let cfg = ExperimentConfig::load(config_path)?;
    let out_dir = cfg.resolved_output_dir();
    let ck = load_checkpoint_input(checkpoint)?;
    let manifest = load_manifest(&cfg.dataset, "dataset")?;
    let _lock = OutputLock::acquire(&out_dir)?;
    let split = ensure_split(&cfg, &out_dir, &manifest, &cfg.dataset.name, "dataset", "evaluate")?;
    let ids = match split_name {
        "train" => &split.train_ids,
        "val" => &split.val_ids,
        _ => &split.test_ids,
    };

    let scheme = cfg.finetune.label_scheme;
    let expected = scheme.num_classes(manifest.num_grades);
    match &ck.meta.head {
        HeadConfig::Classifier(c) if c.num_classes == expected => {}
        HeadConfig::Classifier(c) => {
            return Err(validation(format!(
                "checkpoint head has {} classes but the {} task needs {expected}",
                c.num_classes,
                scheme.task_name()
            )));
        }
        HeadConfig::Projection(_) => {
            return Err(validation(
                "checkpoint carries a projection head; evaluation needs a fine-tuned classifier",
            ));
        }
    }

    let mut model = model_from_checkpoint(&ck)?;
    let eval = evaluate(
        &mut model,
        &manifest,
        ids,
        &scheme,
        &cfg.finetune.augment,
        cfg.finetune.batch_size,
    )?;
    print_report(split_name, &eval);

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| runtime(format!("create {}: {e}", out_dir.display())))?;
    let pred_path = out_dir.join(format!("predictions_{split_name}.csv"));
    let mut text = String::from("id,grade,label,predicted\n");
    for p in &eval.predictions {
        text.push_str(&format!("{},{},{},{}\n", p.id, p.grade, p.label, p.predicted));
    }
    std::fs::write(&pred_path, text)
        .map_err(|e| runtime(format!("write {}: {e}", pred_path.display())))?;
    write_provenance(&pred_path, "evaluate", &cfg)?;

    let report_path = out_dir.join(format!("eval_{split_name}.json"));
    let json = serde_json::to_string_pretty(&eval.report).expect("report serialization");
    std::fs::write(&report_path, json)
        .map_err(|e| runtime(format!("write {}: {e}", report_path.display())))?;
    write_provenance(&report_path, "evaluate", &cfg)?;
    println!("evaluate: wrote {} and {}", pred_path.display(), report_path.display());
    Ok(())
}

/// The label scheme a sweep task name stands for. Binary keeps the
/// configured threshold when the base scheme is already binary.
fn scheme_for_task(task: &str, base: &LabelScheme) -> LabelScheme {
    match task {
        "multiclass" => LabelScheme::Multiclass,
        _ => match base {
            LabelScheme::Binary { threshold } => LabelScheme::Binary {
                threshold: *threshold,
            },
            LabelScheme::Multiclass => LabelScheme::default(),
        },
    }
}

/// Sweep ledger cell: either metrics or the error that stopped the cell.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum CellState {
    Done { row: SweepRow },
    Failed { error: String },
}

type SweepLedger = BTreeMap<String, CellState>;

fn ledger_path(out_dir: &Path) -> PathBuf {
    out_dir.join("sweep_state.json")
}

fn load_ledger(path: &Path) -> CliResult<SweepLedger> {
    if !path.exists() {
        return Ok(SweepLedger::new());
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| runtime(format!("read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn save_ledger(path: &Path, ledger: &SweepLedger) -> CliResult<()> {
    let json = serde_json::to_string_pretty(ledger).expect("ledger serialization");
    std::fs::write(path, json).map_err(|e| runtime(format!("write {}: {e}", path.display())))
}

/// Label-efficiency sweep: fine-tune + test-evaluate every configured
/// (task, fraction) cell, then emit `results.csv`.
///
/// Cells already recorded as done in the ledger are skipped, so an
/// interrupted sweep resumes where it stopped. A failing cell is recorded
/// with its error string and the sweep continues; any failed cell makes the
/// final exit code 2.
pub fn cmd_sweep(config_path: &Path, run_pretrain: bool) -> CliResult<()> {
    let cfg = ExperimentConfig::load(config_path)?;
    let out_dir = cfg.resolved_output_dir();
    let ckpt_path = pretext_checkpoint_path(&out_dir);
    if !ckpt_path.exists() {
        if run_pretrain {
            cmd_pretrain(config_path, false)?;
        } else {
            return Err(validation(format!(
                "pretext checkpoint {} not found (run `fundus pretrain` or pass --pretrain)",
                ckpt_path.display()
            )));
        }
    }
    let pretext = load_checkpoint_input(&ckpt_path)?;
    let manifest = load_manifest(&cfg.dataset, "dataset")?;
    let _lock = OutputLock::acquire(&out_dir)?;
    let split = ensure_split(&cfg, &out_dir, &manifest, &cfg.dataset.name, "dataset", "sweep")?;

    let ledger_file = ledger_path(&out_dir);
    let mut ledger = load_ledger(&ledger_file)?;
    let mut failures = 0usize;
    for task in &cfg.sweep.tasks {
        for &fraction in &cfg.sweep.fractions {
            let key = format!("{task}@{}", fraction_tag(fraction));
            if matches!(ledger.get(&key), Some(CellState::Done { .. })) {
                println!("sweep[{key}]: already done, skipping");
                continue;
            }
            let mut ft = cfg.finetune.clone();
            ft.label_scheme = scheme_for_task(task, &cfg.finetune.label_scheme);
            ft.label_fraction = fraction;
            match sweep_cell(&cfg, &manifest, &split, &pretext, &ft, task, fraction) {
                Ok(row) => {
                    println!(
                        "sweep[{key}]: accuracy {:.2} precision {:.2} recall {:.2} f1 {:.2}",
                        row.accuracy, row.precision, row.recall, row.f1
                    );
                    ledger.insert(key, CellState::Done { row });
                }
                Err(e) => {
                    failures += 1;
                    eprintln!("sweep[{key}]: FAILED: {e}");
                    ledger.insert(
                        key,
                        CellState::Failed {
                            error: e.to_string(),
                        },
                    );
                }
            }
            save_ledger(&ledger_file, &ledger)?;
        }
    }
    write_provenance(&ledger_file, "sweep", &cfg)?;

    // Emit rows in deterministic order: config task order, fractions
    // ascending (the config normalizes them).
    let mut rows = Vec::new();
    for task in &cfg.sweep.tasks {
        for &fraction in &cfg.sweep.fractions {
            let key = format!("{task}@{}", fraction_tag(fraction));
            if let Some(CellState::Done { row }) = ledger.get(&key) {
                rows.push(row.clone());
            }
        }
    }
    let csv_path = out_dir.join("results.csv");
    write_results_csv(&csv_path, &rows)?;
    write_provenance(&csv_path, "sweep", &cfg)?;
    println!(
        "sweep: {} of {} cells done, results {}",
        rows.len(),
        cfg.sweep.tasks.len() * cfg.sweep.fractions.len(),
        csv_path.display()
    );
    if failures > 0 {
        return Err(runtime(format!(
            "{failures} sweep cell(s) failed; see sweep_state.json"
        )));
    }
    Ok(())
}

/// One sweep cell: fine-tune from the pretext encoder, evaluate on test.
fn sweep_cell(
    cfg: &ExperimentConfig,
    manifest: &DatasetManifest,
    split: &SplitSpec,
    pretext: &Checkpoint,
    ft: &FinetuneConfig,
    task: &str,
    fraction: f64,
) -> CliResult<SweepRow> {
    let out_dir = cfg.resolved_output_dir();
    let tag = fraction_tag(fraction);
    let output = finetune(manifest, split, EncoderInit::Pretrained(pretext), ft)?;

    let ckpt_path = out_dir.join(format!("finetune_{task}_f{tag}.ckpt"));
    output.checkpoint.save(&ckpt_path)?;
    write_provenance(&ckpt_path, "sweep", cfg)?;
    let log_path = out_dir.join(format!("finetune_{task}_f{tag}_log.csv"));
    write_train_log(&log_path, &output.log)?;
    write_provenance(&log_path, "sweep", cfg)?;

    let mut model = model_from_checkpoint(&output.checkpoint)?;
    let eval = evaluate(
        &mut model,
        manifest,
        &split.test_ids,
        &ft.label_scheme,
        &ft.augment,
        ft.batch_size,
    )?;
    Ok(SweepRow {
        dataset: cfg.dataset.name.clone(),
        task: task.to_string(),
        fraction,
        accuracy: 100.0 * eval.report.accuracy,
        precision: 100.0 * eval.report.precision,
        recall: 100.0 * eval.report.recall,
        f1: 100.0 * eval.report.f1,
    })
}

/// Render the markdown report from a results CSV.
pub fn cmd_report(csv: &Path, out: Option<&Path>) -> CliResult<()> {
    let rows = crate::artifacts::read_results_csv(csv)?;
    let md = render_report(&rows);
    match out {
        Some(path) => {
            std::fs::write(path, &md)
                .map_err(|e| runtime(format!("write {}: {e}", path.display())))?;
            println!("report: wrote {}", path.display());
        }
        None => print!("{md}"),
    }
    Ok(())
}

/// Render one label-efficiency chart per task from a results CSV.
pub fn cmd_plot(csv: &Path, out_dir: Option<&Path>) -> CliResult<()> {
    let rows = crate::artifacts::read_results_csv(csv)?;
    if rows.is_empty() {
        return Err(validation(format!(
            "plot: {} has no result rows",
            csv.display()
        )));
    }
    let out_dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => csv
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| runtime(format!("create {}: {e}", out_dir.display())))?;

    // task -> dataset -> points
    let mut by_task: BTreeMap<String, BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    for row in &rows {
        by_task
            .entry(row.task.clone())
            .or_default()
            .entry(row.dataset.clone())
            .or_default()
            .push((row.fraction, row.accuracy));
    }
    for (task, datasets) in by_task {
        let series: Vec<Series> = datasets
            .into_iter()
            .map(|(name, points)| Series { name, points })
            .collect();
        let svg = crate::plot::render_chart(&format!("label efficiency — {task}"), &series)?;
        let path = out_dir.join(format!("label_efficiency_{task}.svg"));
        std::fs::write(&path, svg)
            .map_err(|e| runtime(format!("write {}: {e}", path.display())))?;
        println!("plot: wrote {}", path.display());
    }
    Ok(())
}

/// Render class activation map overlays for a list of sample ids.
pub fn cmd_cam(
    config_path: &Path,
    checkpoint: &Path,
    ids: &[String],
    class: Option<usize>,
    layer: Option<&str>,
    alpha: f64,
) -> CliResult<()> {
    if ids.is_empty() {
        return Err(validation("--ids: at least one sample id required"));
    }
    if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
        return Err(validation(format!("--alpha {alpha} outside [0, 1]")));
    }
    let cfg = ExperimentConfig::load(config_path)?;
    let out_dir = cfg.resolved_output_dir();
    let ck = load_checkpoint_input(checkpoint)?;
    if matches!(ck.meta.head, HeadConfig::Projection(_)) {
        return Err(validation(
            "checkpoint carries a projection head; CAM rendering needs a fine-tuned classifier",
        ));
    }
    let manifest = load_manifest(&cfg.dataset, "dataset")?;
    // Validate every id before rendering anything.
    for id in ids {
        if manifest.index_of(id).is_none() {
            return Err(validation(format!(
                "unknown sample id `{id}` in dataset {}",
                cfg.dataset.name
            )));
        }
    }
    let mut model = model_from_checkpoint(&ck)?;
    if let Some(name) = layer {
        let known = model.encoder.capturable_layers();
        if !known.iter().any(|l| l == name) {
            return Err(validation(format!(
                "--layer {name}: encoder has no such activation (available: {})",
                known.join(", ")
            )));
        }
    }

    let scheme = cfg.finetune.label_scheme;
    let pipeline = eval_pipeline_for(&cfg.finetune.augment, &scheme).map_err(validation)?;
    let _lock = OutputLock::acquire(&out_dir)?;
    let cam_dir = out_dir.join("cam");
    std::fs::create_dir_all(&cam_dir)
        .map_err(|e| runtime(format!("create {}: {e}", cam_dir.display())))?;

    for id in ids {
        let idx = manifest.index_of(id).expect("ids validated above");
        let image = load_image(&manifest.resolve_image(&manifest.samples[idx]))?;
        let view = pipeline.apply(&image, 0)?;
        // Default to explaining the model's own prediction.
        let target = match class {
            Some(c) => c,
            None => {
                let cam0 = grad_cam(&mut model, &view, 0, layer)?;
                let (best, _) = cam0
                    .logits
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                    .expect("non-empty logits");
                best
            }
        };
        let cam = grad_cam(&mut model, &view, target, layer).map_err(|e| match e {
            fundus_core::Error::ClassOutOfRange { .. } => validation(e),
            other => runtime(other),
        })?;
        let blended = overlay(&view, &cam.heatmap, alpha)?;
        let path = cam_dir.join(format!("{id}_cam_{target}.png"));
        fundus_core::datasets::save_image(&blended, &path)?;
        write_provenance(&path, "cam", &cfg)?;
        println!("cam: wrote {} (layer {})", path.display(), cam.layer);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_task_keeps_the_configured_threshold() {
        let base = LabelScheme::Binary { threshold: 2 };
        assert_eq!(
            scheme_for_task("binary", &base),
            LabelScheme::Binary { threshold: 2 }
        );
        assert_eq!(scheme_for_task("multiclass", &base), LabelScheme::Multiclass);
        // A multiclass base still yields a sane binary scheme for the
        // binary sweep task.
        assert_eq!(
            scheme_for_task("binary", &LabelScheme::Multiclass),
            LabelScheme::default()
        );
    }

    #[test]
    fn ledger_round_trips_through_json() {
        let mut ledger = SweepLedger::new();
        ledger.insert(
            "binary@10".into(),
            CellState::Done {
                row: SweepRow {
                    dataset: "synthetic".into(),
                    task: "binary".into(),
                    fraction: 0.1,
                    accuracy: 91.25,
                    precision: 90.0,
                    recall: 92.5,
                    f1: 91.22,
                },
            },
        );
        ledger.insert(
            "binary@50".into(),
            CellState::Failed {
                error: "boom".into(),
            },
        );
        let dir = tempfile::tempdir().expect("tempdir");
        let path = ledger_path(dir.path());
        save_ledger(&path, &ledger).expect("save");
        let back = load_ledger(&path).expect("load");
        assert_eq!(back, ledger);
        // A missing ledger reads as empty, so fresh sweeps start clean.
        let missing = load_ledger(&dir.path().join("nope.json")).expect("missing ok");
        assert!(missing.is_empty());
    }

    #[test]
    fn checkpoint_path_lives_inside_the_output_dir() {
        let p = pretext_checkpoint_path(Path::new("runs/x"));
        assert_eq!(p, Path::new("runs/x/pretext.ckpt"));
    }
}
