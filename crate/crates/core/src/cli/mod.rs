//! Command-line front end. Flags override the `--config` file, which
//! overrides built-in defaults.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run;
pub use config::ConfigFile;

#[derive(Debug, Parser)]
#[command(name = "paraclap", version, about = "Paralinguistic language-audio pretraining toolkit")]
pub struct Cli {
    /// Flat key = value file; keys are flag names with `_` for `-`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Progress on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract acoustic features for every manifest record into a CSV cache.
    Extract(ExtractArgs),
    /// Generate one training caption per record.
    Caption(CaptionArgs),
    /// Write a synthetic labelled corpus of harmonic tones.
    Synth(SynthArgs),
    /// Train the dual encoder and select the best epoch on held-out UAR.
    Train(TrainArgs),
    /// Zero-shot evaluation of a checkpoint against label queries.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Feature cache CSV; failures go to `<out>.errors.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random window / zero padding to this length before extraction.
    #[arg(long)]
    pub clip_seconds: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CaptionArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// only-emo, rand<N> or no-emo-rand<N>.
    #[arg(long)]
    pub mode: Option<String>,
    /// N for `rand` / `no-emo-rand` without a numeric suffix (default 5).
    #[arg(long)]
    pub max_queries: Option<usize>,
    /// Template bank override (JSON).
    #[arg(long)]
    pub template_bank: Option<PathBuf>,
    /// Captions as JSON lines; thresholds go to `<out>.thresholds.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// name:f0lo-f0hi:amplo-amphi:durlo-durhi,... (default: four emotion classes).
    #[arg(long)]
    pub classes: Option<String>,
    /// Utterances per class (default 50).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// only-emo, rand<N> or no-emo-rand<N> (default only-emo).
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub max_queries: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr_encoders: Option<f64>,
    #[arg(long)]
    pub lr_heads: Option<f64>,
    /// Shared embedding dimensionality (default 64).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Held-out split manifest; without it a stratified fraction is held out.
    #[arg(long)]
    pub heldout_manifest: Option<PathBuf>,
    /// Features for the held-out manifest (default: --features).
    #[arg(long)]
    pub heldout_features: Option<PathBuf>,
    /// Share of each class held out when no held-out manifest is given (default 0.2).
    #[arg(long)]
    pub heldout_fraction: Option<f64>,
    /// raw or templated label queries for model selection (default raw).
    #[arg(long)]
    pub query_mode: Option<String>,
    #[arg(long)]
    pub template_bank: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Feature cache; without it features are extracted from the audio.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Ordered, comma-separated class names (default: sorted manifest labels).
    #[arg(long)]
    pub labels: Option<String>,
    /// raw or templated (default raw).
    #[arg(long)]
    pub query_mode: Option<String>,
    /// Report JSON; the confusion matrix goes to `<out>.confusion.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_RUNTIME,
            error: e.into(),
        }
    }
}

pub fn usage_error(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: anyhow::anyhow!("{msg}"),
    }
}

pub trait UsageExt<T> {
    /// Marks a failure as a usage / validation error (exit code 2).
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: EXIT_USAGE,
            error: e.into(),
        })
    }
}
