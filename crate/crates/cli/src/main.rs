use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use gtseg::commands::{self, ComplexityArgs, ConfigSource, EvalTarget, SynthArgs};
use gtseg::{CliError, CliResult};
use gtseg_core::fd::FdParams;

/// GT U-Net segmentation: training, evaluation and analysis tools.
#[derive(Parser, Debug)]
#[command(name = "gtseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON run configuration; omitted fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `synth` for generated data, or a dataset directory.
    #[arg(long)]
    data: Option<String>,
    /// Override a config field, e.g. `--set training.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Training seed (falls back to GTSEG_SEED).
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn source(&self) -> CliResult<ConfigSource> {
        Ok(ConfigSource {
            file: self.config.clone(),
            data: self.data.clone(),
            overrides: self.overrides.clone(),
            seed: self.seed,
            env_seed: commands::env_seed()?,
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cross-validated training; writes fold<i>.ckpt and CSV logs.
    ///
    /// The defaults (200 epochs, batch 12, 248 images of 256x256) mirror the
    /// full-scale protocol. On a CPU, shrink them, e.g.
    /// `--set data.count=48 --set data.size=64 --set training.epochs=30`.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory.
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        /// Train only this fold.
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Per-sample and aggregate metrics for a checkpoint.
    Eval {
        /// Checkpoint to evaluate on the configured data.
        #[arg(required_unless_present = "cv", conflicts_with = "cv")]
        checkpoint: Option<PathBuf>,
        /// Training output directory: score every sample with the fold
        /// checkpoint that held it out.
        #[arg(long, value_name = "RUN_DIR")]
        cv: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// Directory for metrics.csv and metrics.json.
        #[arg(long, default_value = "eval")]
        out: PathBuf,
        /// Also write thresholded predictions to <out>/masks.
        #[arg(long)]
        dump_masks: bool,
    },
    /// Attention cost of global versus grouped, bottlenecked MHSA.
    Complexity {
        height: usize,
        width: usize,
        channels: usize,
        group_h: usize,
        group_w: usize,
        phi: usize,
        /// Count the products of an actual forward pass and compare.
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        json: bool,
    },
    /// Fourier descriptor comparison of two mask files (a: prediction, b: reference).
    Fd {
        mask_a: PathBuf,
        mask_b: PathBuf,
        /// Contour resampling points.
        #[arg(long, default_value_t = 128)]
        n: usize,
        /// Normalized descriptors compared.
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 10.0)]
        beta: f64,
    },
    /// Writes a synthetic dataset directory (images/, masks/, folds.txt).
    Synth {
        /// Falls back to GTSEG_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 248)]
        count: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 3)]
        folds: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr();
    match cli.command {
        Command::Train { run, out, fold } => {
            let cfg = run.source()?.resolve()?;
            commands::cmd_train(&cfg, &out, fold, &mut stdout, &mut stderr)?;
        }
        Command::Eval {
            checkpoint,
            cv,
            run,
            out,
            dump_masks,
        } => {
            let target = match (cv, checkpoint) {
                (Some(dir), _) => EvalTarget::CrossValidation(dir),
                (None, Some(ckpt)) => EvalTarget::Checkpoint(ckpt, run.source()?.resolve()?),
                (None, None) => return Err(CliError::Usage("give a checkpoint or --cv RUN_DIR".into())),
            };
            commands::cmd_eval(&target, &out, dump_masks, &mut stdout)?;
        }
        Command::Complexity {
            height,
            width,
            channels,
            group_h,
            group_w,
            phi,
            verify,
            json,
        } => {
            let a = ComplexityArgs {
                height,
                width,
                channels,
                group_h,
                group_w,
                phi,
            };
            commands::cmd_complexity(a, verify, json, &mut stdout)?;
        }
        Command::Fd { mask_a, mask_b, n, k, beta } => {
            commands::cmd_fd(&mask_a, &mask_b, &FdParams { beta, k, n }, &mut stdout)?;
        }
        Command::Synth {
            seed,
            count,
            size,
            folds,
            out,
        } => {
            let seed = match seed {
                Some(s) => s,
                None => commands::env_seed()?.unwrap_or(0),
            };
            let args = SynthArgs {
                seed,
                count,
                size,
                folds,
                out,
            };
            commands::cmd_synth(&args, &mut stdout, &mut stderr)?;
        }
    }
    stdout.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
