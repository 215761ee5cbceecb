//! End-to-end tests of the `fundus` binary: exit codes, artifact layout,
//! and cross-run determinism.
//!
//! Exit-code contract under test: 0 success, 1 invalid input, 2 runtime
//! failure (including a held output lock).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use once_cell::sync::Lazy;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_fundus");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn fundus")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Shared read-only corpus: 2 classes x 12 images at 32x32.
struct Fixture {
    _root: TempDir,
    corpus: PathBuf,
}

static CORPUS: Lazy<Fixture> = Lazy::new(|| {
    let root = TempDir::new().expect("tempdir");
    let corpus = root.path().join("corpus");
    let out = run(&[
        "synth",
        "--out",
        corpus.to_str().expect("utf-8 path"),
        "--classes",
        "2",
        "--per-class",
        "12",
        "--size",
        "32",
        "--seed",
        "5",
    ]);
    assert_eq!(code(&out), 0, "synth failed: {}", stderr(&out));
    Fixture {
        _root: root,
        corpus,
    }
});

/// Write a small experiment config wired to the shared corpus.
fn write_config(path: &Path, out_dir: &Path) {
    let manifest = CORPUS.corpus.join("manifest.csv");
    let text = format!(
        r#"seed = 11
output_dir = "{out}"

[dataset]
name = "synthetic"
manifest = "{man}"

[pretrain]
epochs = 1
batch_size = 8

[pretrain.encoder]
input_size = [32, 32]
feature_dim = 16

[pretrain.augment]
output_size = [32, 32]

[finetune]
epochs = 2
batch_size = 8

[finetune.encoder]
input_size = [32, 32]
feature_dim = 16

[finetune.augment]
output_size = [32, 32]

[sweep]
fractions = [0.5, 1.0]
tasks = ["binary"]
"#,
        out = out_dir.display(),
        man = manifest.display(),
    );
    std::fs::write(path, text).expect("write config");
}

#[test]
fn synth_writes_manifest_and_images() {
    let dir = TempDir::new().expect("tempdir");
    let corpus = dir.path().join("c");
    let out = run(&[
        "synth",
        "--out",
        corpus.to_str().unwrap(),
        "--classes",
        "2",
        "--per-class",
        "3",
        "--size",
        "32",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(corpus.join("manifest.csv").exists());
    let images = std::fs::read_dir(corpus.join("images")).expect("images dir");
    assert_eq!(images.count(), 6);
    // The lock is released once generation finishes.
    assert!(!corpus.join(".lock").exists());
}

#[test]
fn help_version_and_flag_errors_use_the_exit_contract() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["pretrain", "--help"])), 0);
    // Unknown subcommand and missing required flags are invalid input.
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["pretrain"])), 1);
    assert_eq!(code(&run(&["synth", "--bogus-flag"])), 1);
}

#[test]
fn dry_run_validates_without_touching_the_output_dir() {
    let dir = TempDir::new().expect("tempdir");
    let out_dir = dir.path().join("run");
    let config = dir.path().join("config.toml");
    write_config(&config, &out_dir);
    let out = run(&["pretrain", "--config", config.to_str().unwrap(), "--dry-run"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("dry run"));
    assert!(stdout(&out).contains("fingerprint"));
    assert!(!out_dir.exists(), "dry run must not create artifacts");
}

#[test]
fn missing_and_invalid_configs_are_validation_errors() {
    let dir = TempDir::new().expect("tempdir");
    let out = run(&["pretrain", "--config", "/definitely/not/here.toml"]);
    assert_eq!(code(&out), 1);

    // Unknown keys are rejected so typos cannot silently change a run.
    let bad = dir.path().join("unknown.toml");
    std::fs::write(&bad, "seed = 1\nbogus_key = true\n").unwrap();
    let out = run(&["pretrain", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("bogus_key"), "{}", stderr(&out));

    // Out-of-range values are named by field.
    let bad = dir.path().join("fraction.toml");
    std::fs::write(&bad, "[sweep]\nfractions = [0.0]\n").unwrap();
    let out = run(&["pretrain", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("sweep.fractions"), "{}", stderr(&out));
}

#[test]
fn finetune_and_sweep_require_a_pretext_checkpoint() {
    let dir = TempDir::new().expect("tempdir");
    let out_dir = dir.path().join("run");
    let config = dir.path().join("config.toml");
    write_config(&config, &out_dir);

    let out = run(&["finetune", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("from-scratch"), "{}", stderr(&out));

    let out = run(&["sweep", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("--pretrain"), "{}", stderr(&out));
}

#[test]
fn locked_output_dir_is_a_runtime_failure() {
    let dir = TempDir::new().expect("tempdir");
    let out_dir = dir.path().join("run");
    let config = dir.path().join("config.toml");
    write_config(&config, &out_dir);
    std::fs::create_dir_all(&out_dir).unwrap();
    std::fs::write(out_dir.join(".lock"), "held\n").unwrap();

    let out = run(&["pretrain", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("locked"), "{}", stderr(&out));
}

#[test]
fn pretrain_checkpoints_are_identical_across_output_dirs() {
    let dir = TempDir::new().expect("tempdir");
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let config = dir.path().join(format!("{name}.toml"));
        write_config(&config, &out_dir);
        let out = run(&["pretrain", "--config", config.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        bytes.push(std::fs::read(out_dir.join("pretext.ckpt")).expect("ckpt"));
    }
    assert_eq!(bytes[0], bytes[1], "same seed and data must give identical checkpoints");
}

/// One output directory carried through the whole command sequence, the
/// way a user would drive an experiment.
#[test]
fn pipeline_end_to_end() {
    let dir = TempDir::new().expect("tempdir");
    let out_dir = dir.path().join("run");
    let config_path = dir.path().join("config.toml");
    write_config(&config_path, &out_dir);
    let config = config_path.to_str().unwrap();

    // Pretrain.
    let out = run(&["pretrain", "--config", config]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let pretext = out_dir.join("pretext.ckpt");
    assert!(pretext.exists());
    assert!(out_dir.join("pretext.ckpt.provenance.json").exists());
    assert!(out_dir.join("pretrain_log.csv").exists());
    assert!(out_dir.join("split_synthetic.json").exists());
    assert!(!out_dir.join(".lock").exists());

    // Evaluating the pretext (projection-head) checkpoint is refused.
    let out = run(&["evaluate", "--config", config, "--checkpoint", pretext.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("projection"), "{}", stderr(&out));

    // A truncated checkpoint is malformed input.
    let trunc = dir.path().join("trunc.ckpt");
    let full = std::fs::read(&pretext).unwrap();
    std::fs::write(&trunc, &full[..full.len() / 2]).unwrap();
    let out = run(&["evaluate", "--config", config, "--checkpoint", trunc.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));

    // Fine-tune from the pretext checkpoint (validation metrics printed).
    let out = run(&["finetune", "--config", config]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ft_ckpt = out_dir.join("finetune_binary_f100.ckpt");
    assert!(ft_ckpt.exists());
    assert!(out_dir.join("finetune_binary_f100_log.csv").exists());
    assert!(stdout(&out).contains("val:"), "{}", stdout(&out));

    // Bad fraction override is invalid input.
    let out = run(&["finetune", "--config", config, "--fraction", "1.5"]);
    assert_eq!(code(&out), 1);

    // Evaluate on the test split.
    let out = run(&["evaluate", "--config", config, "--checkpoint", ft_ckpt.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_dir.join("predictions_test.csv").exists());
    assert!(out_dir.join("eval_test.json").exists());
    let preds = std::fs::read_to_string(out_dir.join("predictions_test.csv")).unwrap();
    assert!(preds.starts_with("id,grade,label,predicted\n"));

    let out = run(&["evaluate", "--config", config, "--checkpoint", ft_ckpt.to_str().unwrap(), "--split", "bogus"]);
    assert_eq!(code(&out), 1);

    // Sweep both fractions, then rerun: all cells skip and the CSV is
    // byte-identical.
    let out = run(&["sweep", "--config", config]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let results = out_dir.join("results.csv");
    let first = std::fs::read(&results).expect("results.csv");
    assert!(out_dir.join("finetune_binary_f50.ckpt").exists());
    let out = run(&["sweep", "--config", config]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("already done"), "{}", stdout(&out));
    assert_eq!(std::fs::read(&results).unwrap(), first);

    // Report to stdout and to a file.
    let out = run(&["report", "--csv", results.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("| 100% |"), "{}", stdout(&out));
    assert!(stdout(&out).contains("| 50% |"), "{}", stdout(&out));
    let report_md = out_dir.join("report.md");
    let out = run(&["report", "--csv", results.to_str().unwrap(), "--out", report_md.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(report_md.exists());

    // Plot one chart per task.
    let out = run(&["plot", "--csv", results.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let svg_path = out_dir.join("label_efficiency_binary.svg");
    let svg = std::fs::read_to_string(&svg_path).expect("svg");
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("synthetic"));

    // Class activation maps for two known samples.
    let out = run(&[
        "cam",
        "--config",
        config,
        "--checkpoint",
        ft_ckpt.to_str().unwrap(),
        "--ids",
        "syn0-0000,syn1-0003",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cam_files: Vec<String> = std::fs::read_dir(out_dir.join("cam"))
        .expect("cam dir")
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(cam_files.iter().any(|f| f.starts_with("syn0-0000_cam_") && f.ends_with(".png")));
    assert!(cam_files.iter().any(|f| f.starts_with("syn1-0003_cam_") && f.ends_with(".png")));

    // Cam input validation: unknown id, unknown layer, class out of range.
    let out = run(&["cam", "--config", config, "--checkpoint", ft_ckpt.to_str().unwrap(), "--ids", "nope"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nope"), "{}", stderr(&out));
    let out = run(&["cam", "--config", config, "--checkpoint", ft_ckpt.to_str().unwrap(), "--ids", "syn0-0000", "--layer", "encoder.nowhere"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("encoder.nowhere"), "{}", stderr(&out));
    let out = run(&["cam", "--config", config, "--checkpoint", ft_ckpt.to_str().unwrap(), "--ids", "syn0-0000", "--class", "9"]);
    assert_eq!(code(&out), 1);
    let out = run(&["cam", "--config", config, "--checkpoint", ft_ckpt.to_str().unwrap(), "--ids", "syn0-0000", "--alpha", "1.5"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn plot_rejects_single_point_series_by_name() {
    let dir = TempDir::new().expect("tempdir");
    let csv = dir.path().join("results.csv");
    std::fs::write(
        &csv,
        "dataset,task,fraction,accuracy,precision,recall,f1\n\
         eyepacs,binary,1,90.0000,90.0000,90.0000,90.0000\n",
    )
    .unwrap();
    let out = run(&["plot", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("eyepacs"), "{}", stderr(&out));
}

#[test]
fn report_renders_reference_percentages_verbatim() {
    let dir = TempDir::new().expect("tempdir");
    let csv = dir.path().join("results.csv");
    std::fs::write(
        &csv,
        "dataset,task,fraction,accuracy,precision,recall,f1\n\
         eyepacs,binary,1,99.5900,100.0000,99.5400,99.2600\n",
    )
    .unwrap();
    let out = run(&["report", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(
        stdout(&out).contains("| 100% | 99.59 | 100.00 | 99.54 | 99.26 |"),
        "{}",
        stdout(&out)
    );

    // A malformed CSV is invalid input.
    std::fs::write(&csv, "wrong,header\n1,2\n").unwrap();
    let out = run(&["report", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}
