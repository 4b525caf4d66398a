//! Command-line front end: dataset synthesis and ingestion, training,
//! evaluation, inference, mask export and figures.
//!
//! Every command writes a `resolved_config.toml` next to its outputs. When a
//! command fails after it has started writing, [`mark_failure`] leaves a
//! [`FAILURE_MARKER`] file in the output directory.

pub mod commands;
pub mod config;
pub mod error;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use commands::{EVAL_COLUMNS, SCENE_COLUMNS};
pub use config::RunConfig;
pub use error::{CliError, Result};

/// Name of the marker left behind by a failed command.
pub const FAILURE_MARKER: &str = "FAILED";

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "codedlf", version, about = "Coded-aperture light field disparity estimation")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed; for `train` it replaces the configured seed list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Checkpoint to resume training from.
    #[arg(long, global = true)]
    pub resume: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Render random plane scenes into containers plus a manifest.
    SynthData(commands::SynthArgs),
    /// Convert view directories or containers into containers plus a manifest.
    Ingest(commands::IngestArgs),
    /// Train one model per configured seed.
    Train(commands::TrainArgs),
    /// Metrics of a checkpoint on a manifest split.
    Eval(commands::EvalArgs),
    /// Measurement and disparity for one scene.
    Infer(commands::InferArgs),
    /// Write the mask tile as text and a tiled 16-bit PNG.
    ExportMask(commands::ExportMaskArgs),
    /// Side-by-side panels (ground truth, prediction, mask, measurement).
    Plot(commands::PlotArgs),
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::SynthData(a) => commands::synth_data(cli, a),
        Command::Ingest(a) => commands::ingest(cli, a),
        Command::Train(a) => commands::train(cli, a),
        Command::Eval(a) => commands::eval(cli, a),
        Command::Infer(a) => commands::infer(cli, a),
        Command::ExportMask(a) => commands::export_mask(cli, a),
        Command::Plot(a) => commands::plot(cli, a),
    }
}

/// Leave a failure marker if `out` already holds outputs; clear a stale one
/// otherwise.
pub fn mark_failure(out: &Path, err: &CliError) {
    let marker = out.join(FAILURE_MARKER);
    let has_outputs = std::fs::read_dir(out)
        .map(|mut it| it.any(|e| e.is_ok_and(|e| e.file_name() != FAILURE_MARKER)))
        .unwrap_or(false);
    if has_outputs {
        let _ = std::fs::write(&marker, format!("{err}\n"));
    } else {
        let _ = std::fs::remove_file(&marker);
    }
}

/// Remove a marker left by an earlier failed run into the same directory.
pub fn clear_failure(out: &Path) {
    let _ = std::fs::remove_file(out.join(FAILURE_MARKER));
}
