//! Command-line orchestration for the ECG beat workbench.
//!
//! Every command is also callable in-process through [`run`] so scripted
//! checks exercise the same code paths as the binary.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{ExperimentConfig, ProfileRef, RepresentationKind};
pub use error::{CliError, ExitKind, Result};

#[derive(Debug, Parser)]
#[command(name = "ecgbench", version, about = "ECG heartbeat classification workbench")]
pub struct Cli {
    /// Root seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Folds trained concurrently. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse records, cut R-centered beats and write an ECGB container.
    Ingest(IngestArgs),
    /// Rasterize an ECGB container into an ECGI image container.
    Render(RenderArgs),
    /// Run a cross-validated experiment into a run directory.
    Train(TrainArgs),
    /// Evaluate a trained run on its held-out split or another dataset.
    Eval(EvalArgs),
    /// Accuracy of a trained run under additive noise at several SNRs.
    Sweep(SweepArgs),
    /// Finite-difference verification of the backward passes.
    Gradcheck(GradcheckArgs),
    /// Train a 2-D network on synthetic images and export a weight archive.
    PretrainSynthetic(PretrainArgs),
    /// Write synthetic records in the CSV fallback format.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Record base paths (`100` for `100.hea/.dat/.atr` or `100.csv/.ann.csv`).
    #[arg(required = true)]
    pub records: Vec<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Signal channel to segment.
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    /// Sampling rate assumed for CSV records.
    #[arg(long, default_value_t = 360.0)]
    pub fs: f64,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub beats: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// JSON `{"lo": .., "hi": ..}` voltage axis; default: dataset min/max plus margin.
    #[arg(long, conflicts_with_all = ["lo", "hi"])]
    pub bounds: Option<PathBuf>,
    #[arg(long, requires = "hi", allow_hyphen_values = true)]
    pub lo: Option<f64>,
    #[arg(long, requires = "lo", allow_hyphen_values = true)]
    pub hi: Option<f64>,
    /// Also export the first `png_limit` images as PNG files here.
    #[arg(long)]
    pub png_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub png_limit: usize,
    /// Black waveform on white in exported PNGs.
    #[arg(long)]
    pub invert: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, short)]
    pub config: PathBuf,
    /// Run directory; overrides `output_dir` of the config.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Overrides the config's activation.
    #[arg(long)]
    pub activation: Option<String>,
    /// Overrides the config's weight init: `auto` or `normal:STD`.
    #[arg(long)]
    pub init: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// ECGB container to evaluate instead of the run's held-out split.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Report JSON destination; printed to stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Comma-separated SNRs in dB, `none` for the clean row; default from the config.
    #[arg(long, value_delimiter = ',')]
    pub snr: Option<Vec<String>>,
    /// CSV destination; default `<run>/sweep.csv`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Profile name, or `isolation` for every single-layer profile.
    #[arg(long, default_values_t = ["tiny-1d".to_string()])]
    pub profile: Vec<String>,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    /// Coordinates sampled per tensor; 0 checks all.
    #[arg(long, default_value_t = 200)]
    pub max_coords: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// Scales analytic gradients by `1 + f`; negative control for the checker.
    #[arg(long, hide = true, allow_hyphen_values = true)]
    pub corrupt_backward: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 600)]
    pub images: usize,
    #[arg(long, default_value_t = 300)]
    pub iterations: usize,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Profile whose feature layers are pretrained.
    #[arg(long, default_value = "canonical-2d")]
    pub profile: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 24)]
    pub records: usize,
    /// Beats per record.
    #[arg(long, default_value_t = 150)]
    pub beats: usize,
    #[arg(long, default_value_t = 0.4)]
    pub abnormal_fraction: f64,
}

/// Executes one parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a).map(|_| ()),
        Command::Render(a) => commands::render(a).map(|_| ()),
        Command::Train(a) => commands::train(a, cli.seed, cli.jobs).map(|_| ()),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a).map(|_| ()),
        Command::Gradcheck(a) => commands::gradcheck(a, seed).map(|_| ()),
        Command::PretrainSynthetic(a) => commands::pretrain_synthetic(a, seed).map(|_| ()),
        Command::Synth(a) => commands::synth(a, seed),
    }
}
