//! `resage` command line: dataset synthesis, training, inference, sweeps,
//! evaluation suites and ablation runs.
//!
//! Exit status: 0 on success, 1 when inputs fail validation, 2 when a
//! command fails while running.
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "resage", version, about = "Continuous face aging with self-estimated residual age embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn enabled(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProfileName {
    Paper,
    Desk,
}

impl ProfileName {
    fn profile(self) -> resage::networks::SizeProfile {
        match self {
            ProfileName::Paper => resage::networks::SizeProfile::paper(),
            ProfileName::Desk => resage::networks::SizeProfile::desk(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Confusion,
    Fid,
    AgeTable,
    Interp,
}

/// Flags that override config-file values.
#[derive(Debug, Args)]
struct TrainFlags {
    /// TOML file whose keys mirror the training config fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    profile: Option<ProfileName>,
    #[arg(long, value_enum)]
    residual: Option<Switch>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the synthetic face dataset and its manifest.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        identities: usize,
        #[arg(long, default_value_t = 8)]
        per_identity: usize,
        #[arg(long, value_enum, default_value = "desk")]
        profile: ProfileName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train on the manifest's train split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Keep one checkpoint file per epoch.
        #[arg(long)]
        keep_epoch_checkpoints: bool,
    },
    /// Age one image to a (possibly fractional) target age.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        target_age: f64,
        #[arg(long)]
        out: PathBuf,
        /// Embedding mode; defaults to the one stored in the checkpoint.
        #[arg(long, value_enum)]
        residual: Option<Switch>,
    },
    /// Age one image across a grid of targets and write a labeled strip.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 20)]
        lo: i64,
        #[arg(long, default_value_t = 64)]
        hi: i64,
        #[arg(long, default_value_t = 4)]
        step: i64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        residual: Option<Switch>,
    },
    /// Run an evaluation suite on the manifest's test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the residual and target-only twins and compare them.
    Ablation {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let validation = e.downcast_ref::<resage::Error>().is_some_and(resage::Error::is_validation);
            ExitCode::from(if validation { 1 } else { 2 })
        }
    }
}
