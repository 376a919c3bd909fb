use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maefuse_cli::report::{Report, MARKDOWN_NAME};
use maefuse_cli::synth::{run_synth, SynthKind, SynthOptions};
use maefuse_cli::{run_task, CliError, Result, Task};

#[derive(Parser)]
#[command(name = "maefuse", version = env!("MAEFUSE_VERSION"), about = "MAE pretraining, linear probing and fused segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set optim.lr=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Data-loading threads (capped by MAEFUSE_THREADS).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Masked-autoencoder pretraining (resumes from `checkpoint` when set).
    Pretrain(RunArgs),
    /// Few-shot linear probing of a pretrained encoder.
    Classify(RunArgs),
    /// Fused U-Net segmentation on a frozen encoder.
    Segment(RunArgs),
    /// Render a report CSV as a Markdown table.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Output file; defaults to report.md beside the input.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        volumes: usize,
        #[arg(long, default_value_t = 1)]
        eval_volumes: usize,
        #[arg(long, default_value_t = 16)]
        slices: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Pretrain(a) => run_task(Task::Pretrain, &a.config, &a.overrides, a.workers).map(|o| o.summary),
        Command::Classify(a) => run_task(Task::Classify, &a.config, &a.overrides, a.workers).map(|o| o.summary),
        Command::Segment(a) => run_task(Task::Segment, &a.config, &a.overrides, a.workers).map(|o| o.summary),
        Command::Report { input, output } => {
            let text = std::fs::read_to_string(&input).map_err(|source| CliError::Io {
                path: input.clone(),
                source,
            })?;
            let report = Report::from_csv(&text)?;
            if report.rows.is_empty() {
                return Err(CliError::Config(format!("{} has no rows", input.display())));
            }
            let output = output.unwrap_or_else(|| input.with_file_name(MARKDOWN_NAME));
            maefuse_cli::report::write_text(&output, &report.to_markdown())?;
            Ok(format!("wrote {}", output.display()))
        }
        Command::Synth {
            kind,
            out,
            volumes,
            eval_volumes,
            slices,
            size,
            seed,
        } => {
            let s = run_synth(&SynthOptions {
                kind,
                out,
                volumes,
                eval_volumes,
                slices,
                size,
                seed,
            })?;
            Ok(format!(
                "wrote {} training and {} evaluation slices ({}, {})",
                s.train_entries,
                s.eval_entries,
                s.train_manifest.display(),
                s.eval_manifest.display()
            ))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
