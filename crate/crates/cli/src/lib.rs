//! `spp` command-line interface.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration/usage error,
//! 3 I/O or file-format error, 4 training aborted on a non-finite value,
//! 5 checkpoint does not match the configuration.

mod commands;
pub mod render;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use spp_core::config::{Preset, RunConfig};
use spp_core::Error;

#[derive(Debug, Parser)]
#[command(name = "spp", version, about = "SPP multilayer film simulation and cost-guided inverse design")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// TOML run configuration layered over the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base preset (overrides the one named in the config file).
    #[arg(long, global = true, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    /// Worker threads; 1 gives bitwise-reproducible runs on any machine.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Directory with au.csv/ag.csv/cu.csv/al.csv replacing the builtin tables.
    #[arg(long, global = true, env = "SPP_ASSETS_DIR")]
    pub assets: Option<PathBuf>,
    /// Re-read every written file and verify it.
    #[arg(long, global = true)]
    pub check: bool,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate training and test datasets under OUT/train and OUT/test.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Training samples (default from config).
        #[arg(long)]
        count: Option<usize>,
        /// Test samples (default from config).
        #[arg(long)]
        test_count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a network on DATA/train, evaluating on DATA/test after each epoch.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, conflicts_with = "baseline")]
        guided: bool,
        #[arg(long)]
        baseline: bool,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// History CSV (default: checkpoint path + .history.csv).
        #[arg(long)]
        history: Option<PathBuf>,
        /// Replacement audit log (default: checkpoint path + .audit.jsonl).
        #[arg(long)]
        audit: Option<PathBuf>,
        /// Also write the training set as it stands after training.
        #[arg(long)]
        save_dataset: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predict a structure for a map, then re-simulate it and report the distance.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        map: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset directory.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Write per-sample results here.
        #[arg(long)]
        per_sample: Option<PathBuf>,
    },
    /// Render a map as a grayscale PGM and/or CSV.
    Render {
        #[arg(long)]
        map: PathBuf,
        /// PGM output; an `.axes.txt` sidecar is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Paired guided/baseline training for each seed.
    Compare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Also write the table to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<u32>,
    },
}

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_ABORT: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;

/// Maps a library error onto the documented exit codes.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io { .. } | Error::Format { .. } | Error::Parse { .. } => EXIT_IO,
        Error::NonFinite(_) => EXIT_ABORT,
        Error::CheckpointMismatch(_) => EXIT_MISMATCH,
        _ => EXIT_OTHER,
    }
}

/// Builds the run configuration from the global options.
pub fn load_config(g: &GlobalOpts) -> Result<RunConfig, Error> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path, g.preset)?,
        None => RunConfig::preset(g.preset.unwrap_or(Preset::Desk)),
    };
    if let Some(dir) = &g.assets {
        cfg.materials.assets_dir = Some(dir.clone());
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli.global)?;
    let work = || commands::dispatch(&cli.global, &cfg, &cli.command);
    match cli.global.workers {
        Some(0) => Err(Error::Config("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(work),
        None => work(),
    }
}
