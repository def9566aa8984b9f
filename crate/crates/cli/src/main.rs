//! `acgan`: batch entry points around the core library.

mod batch;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use acgan_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "acgan", version, about = "Asymmetric conditional GAN for portrait editing")]
struct Cli {
    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct BatchOpts {
    /// Worker threads for per-item work; output order never depends on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Report failed items and carry on instead of stopping at the first one.
    #[arg(long)]
    pub keep_going: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Extract condition sets from a dataset directory (images/ + masks/).
    Extract {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training config whose extraction section and resolution are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        batch: BatchOpts,
    },
    /// Write seeded noisy variants of a condition set's edge map.
    NoisePreview {
        /// A condition directory written by `extract`.
        #[arg(long)]
        conditions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Force one method: random_removal, random_shift, random_lines, identity.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train from a dataset directory.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from a checkpoint written by an earlier run with the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Generate portraits from condition sets.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Condition directories, or parents of condition directories.
        #[arg(long, required = true, num_args = 1..)]
        conditions: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        batch: BatchOpts,
    },
    /// Apply an edit script to condition sets and generate.
    Edit {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        conditions: Vec<PathBuf>,
        /// EditScript JSON file.
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the edited condition sets under OUT/conditions.
        #[arg(long)]
        save_conditions: bool,
        #[command(flatten)]
        batch: BatchOpts,
    },
    /// Transfer a reference portrait's color distribution onto a condition set.
    Transfer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        conditions: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Label-map PNG for the reference image.
        #[arg(long)]
        reference_seg: PathBuf,
        #[arg(long, default_value_t = 16)]
        strip_width: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the color and edge-robustness ablations on held-out portraits.
    Eval {
        /// NAME=CHECKPOINT, repeated; table rows follow this order.
        #[arg(long = "model", required = true, num_args = 1..)]
        models: Vec<String>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory of predicted label maps `<id>.png` for segmentation F1.
        #[arg(long)]
        pred_seg: Option<PathBuf>,
        #[command(flatten)]
        batch: BatchOpts,
    },
    /// Render a saved report.json as text, optionally rewriting all report files.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        /// Service TOML; ACGAN_* variables override it, flags override both.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write a synthetic portrait dataset in the dataset layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).format_timestamp(None).init();
    let result = match cli.command {
        Command::Extract { dataset, out, config, batch } => commands::extract(&dataset, &out, config.as_deref(), &batch),
        Command::NoisePreview { conditions, out, count, seed, method, config } => {
            commands::noise_preview(&conditions, &out, count, seed, method.as_deref(), config.as_deref())
        }
        Command::Train { dataset, out, config, resume, seed, max_steps } => {
            commands::train(&dataset, &out, config.as_deref(), resume.as_deref(), seed, max_steps)
        }
        Command::Generate { checkpoint, conditions, out, batch } => {
            commands::generate(&checkpoint, &conditions, &out, None, false, &batch)
        }
        Command::Edit { checkpoint, conditions, script, out, save_conditions, batch } => {
            commands::generate(&checkpoint, &conditions, &out, Some(&script), save_conditions, &batch)
        }
        Command::Transfer { checkpoint, conditions, reference, reference_seg, strip_width, out } => {
            commands::transfer(&checkpoint, &conditions, &reference, &reference_seg, strip_width, &out)
        }
        Command::Eval { models, dataset, out, config, seed, pred_seg, batch } => {
            commands::eval(&models, &dataset, &out, config.as_deref(), seed, pred_seg.as_deref(), &batch)
        }
        Command::Report { input, out } => commands::report(&input, out.as_deref()),
        Command::Serve { config, bind, checkpoint } => commands::serve(config.as_deref(), bind, checkpoint),
        Command::Synth { out, count, size, seed } => commands::synth(&out, count, size, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
