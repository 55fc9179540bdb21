//! Command-line pipeline: synth → preprocess → train-channel →
//! extract-features → train-segment → eval → detect.

mod channel;
mod config;
mod data;
mod detect;
mod layout;
mod report;
mod segment;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use channel::{channel_config, load_channel_model, segment_features};
pub use config::{load_config, parse_override, DetectSection, ExperimentConfig, ExperimentSection, FeatureSet, Paths, ROOT_ENV};
pub use data::corpus_summary;
pub use detect::{detect_recording, Detection};
pub use layout::{CsvTable, DatasetEntry, ExperimentLock, Layout};
pub use report::SPE_TARGETS;
pub use segment::{any_label, multiclass_label, multilabel_label, Mode};

use crate::dataio::ArtifactType;
use crate::error::{Error, Result};

fn parse_window(s: &str) -> std::result::Result<usize, String> {
    match s.trim() {
        "1" => Ok(1),
        "3" => Ok(3),
        "5" => Ok(5),
        other => Err(format!("window length must be 1, 3 or 5, got {other:?}")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "eegart", version, about = "EEG artifact detection pipeline")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Restrict to one window length in seconds.
    #[arg(long = "window-len", global = true, value_parser = parse_window)]
    pub window_len: Option<usize>,
    /// Restrict to artifact types (repeatable).
    #[arg(long = "type", global = true)]
    pub types: Vec<ArtifactType>,
    /// Seed for corpus generation, training and fold assignment.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overwrite existing models.
    #[arg(long, global = true)]
    pub force: bool,
    /// Experiment directory (overrides the config file and EEGART_ROOT).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.max_epochs=10`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus.
    Synth,
    /// Filter and resample the corpus to 128 Hz.
    Preprocess,
    /// Train channel-level detectors per artifact type and window length.
    TrainChannel,
    /// Score all channels and write segment feature tables.
    ExtractFeatures,
    /// Cross-validate and fit segment-level models.
    TrainSegment {
        #[arg(long, value_enum)]
        mode: Mode,
    },
    /// Re-render reports from saved out-of-fold predictions.
    Eval {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Flag artifact segments in a recording.
    Detect {
        recording: PathBuf,
        /// Combined-probability threshold for dropping a segment.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

/// Process exit status for an error: 1 usage, 2 data, 3 missing
/// prerequisite.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Missing(_) => 3,
        _ => 2,
    }
}

/// Resolves the configuration from file, environment, overrides and flags.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let env_root = std::env::var(ROOT_ENV).ok();
    let mut cfg = load_config(cli.config.as_deref(), env_root.as_deref(), &cli.set)?;
    if let Some(l) = cli.window_len {
        cfg.experiment.window_lengths = vec![l];
        cfg.detect.window_len = l;
    }
    if !cli.types.is_empty() {
        cfg.experiment.types = cli.types.clone();
    }
    if let Some(s) = cli.seed {
        cfg.synth.seed = s;
        cfg.train.seed = s;
        cfg.gbdt.seed = s;
        cfg.experiment.fold_seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.paths.root = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    let layout = Layout::new(&cfg.paths.root);
    let _lock = ExperimentLock::acquire(&layout)?;
    match &cli.command {
        Command::Synth => data::cmd_synth(&cfg, &layout),
        Command::Preprocess => data::cmd_preprocess(&cfg, &layout),
        Command::TrainChannel => channel::cmd_train_channel(&cfg, &layout, cli.force),
        Command::ExtractFeatures => channel::cmd_extract_features(&cfg, &layout),
        Command::TrainSegment { mode } => segment::cmd_train_segment(&cfg, &layout, *mode),
        Command::Eval { mode } => report::cmd_eval(&cfg, &layout, *mode),
        Command::Detect { recording, threshold } => {
            detect::cmd_detect(&cfg, &layout, recording, *threshold, cli.window_len)
        }
    }
}
