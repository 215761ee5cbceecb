//! `fundus` — self-supervised pretraining and label-efficient fine-tuning
//! for retinal fundus images.
//!
//! Exit codes: 0 success, 1 invalid input (flags, config, missing or
//! malformed files), 2 runtime failure after work started.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fundus_cli::commands;

#[derive(Parser)]
#[command(name = "fundus", version, about = "Contrastive pretraining and label-efficient classification for fundus images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic blob-count corpus with a manifest
    Synth {
        /// Directory to write images and manifest.csv into
        #[arg(long)]
        out: PathBuf,
        /// Number of classes (class k carries about 3k blobs)
        #[arg(long, default_value_t = 2)]
        classes: usize,
        /// Images per class
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        /// Square image side in pixels (minimum 32)
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Generator seed
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Contrastive pretraining on the unlabelled train split
    Pretrain {
        /// Experiment config (TOML)
        #[arg(long)]
        config: PathBuf,
        /// Validate and print the resolved config without training
        #[arg(long)]
        dry_run: bool,
    },
    /// Fine-tune a classifier at one label fraction
    Finetune {
        /// Experiment config (TOML)
        #[arg(long)]
        config: PathBuf,
        /// Override the configured label fraction, in (0, 1]
        #[arg(long)]
        fraction: Option<f64>,
        /// Pretext checkpoint to start from (default: <output_dir>/pretext.ckpt)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Start from a random encoder instead of a pretext checkpoint
        #[arg(long)]
        from_scratch: bool,
    },
    /// Score a fine-tuned checkpoint on one dataset split
    Evaluate {
        /// Experiment config (TOML)
        #[arg(long)]
        config: PathBuf,
        /// Fine-tuned checkpoint to score
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split to score: train, val, or test
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Fine-tune and evaluate every configured (task, fraction) cell
    Sweep {
        /// Experiment config (TOML)
        #[arg(long)]
        config: PathBuf,
        /// Run pretraining first if the pretext checkpoint is missing
        #[arg(long)]
        pretrain: bool,
    },
    /// Render the label-efficiency table from a results CSV
    Report {
        /// results.csv produced by `sweep`
        #[arg(long)]
        csv: PathBuf,
        /// Write markdown here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render label-efficiency charts (SVG) from a results CSV
    Plot {
        /// results.csv produced by `sweep`
        #[arg(long)]
        csv: PathBuf,
        /// Directory for the charts (default: next to the CSV)
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Render class activation map overlays for selected samples
    Cam {
        /// Experiment config (TOML)
        #[arg(long)]
        config: PathBuf,
        /// Fine-tuned checkpoint to explain
        #[arg(long)]
        checkpoint: PathBuf,
        /// Sample ids from the dataset manifest (comma separated)
        #[arg(long, value_delimiter = ',', required = true)]
        ids: Vec<String>,
        /// Class index to explain (default: the predicted class)
        #[arg(long)]
        class: Option<usize>,
        /// Encoder activation to explain (default: last activation)
        #[arg(long)]
        layer: Option<String>,
        /// Heatmap opacity in [0, 1]
        #[arg(long, default_value_t = 0.4)]
        alpha: f64,
    },
}

fn run(cli: Cli) -> fundus_cli::CliResult<()> {
    match cli.command {
        Command::Synth {
            out,
            classes,
            per_class,
            size,
            seed,
        } => commands::cmd_synth(&out, classes, per_class, size, seed),
        Command::Pretrain { config, dry_run } => commands::cmd_pretrain(&config, dry_run),
        Command::Finetune {
            config,
            fraction,
            checkpoint,
            from_scratch,
        } => commands::cmd_finetune(&config, fraction, checkpoint, from_scratch),
        Command::Evaluate {
            config,
            checkpoint,
            split,
        } => commands::cmd_evaluate(&config, &checkpoint, &split),
        Command::Sweep { config, pretrain } => commands::cmd_sweep(&config, pretrain),
        Command::Report { csv, out } => commands::cmd_report(&csv, out.as_deref()),
        Command::Plot { csv, out_dir } => commands::cmd_plot(&csv, out_dir.as_deref()),
        Command::Cam {
            config,
            checkpoint,
            ids,
            class,
            layer,
            alpha,
        } => commands::cmd_cam(&config, &checkpoint, &ids, class, layer.as_deref(), alpha),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits; real parse
            // errors are invalid input.
            let code: u8 = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
