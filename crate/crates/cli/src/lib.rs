//! Command-line front end: run the tracker over a dataset, evaluate
//! trajectories, synthesize datasets and inspect features.
//!
//! Each command is a plain function returning a structured outcome so it can
//! be driven from tests as well as from the binary. Failures map to distinct
//! exit codes through [`CliError::exit_code`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
mod eval_cmd;
mod features_cmd;
mod run_cmd;
mod synth_cmd;

use std::io;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use stereo_vo::config::ConfigError;
use stereo_vo::eval::EvalError;
use stereo_vo::odometry::OdometryError;
use thiserror::Error;

pub use config::RunConfig;
pub use dataset::Layout;
pub use eval_cmd::{cmd_eval, EvalOutcome};
pub use features_cmd::{cmd_features, FeaturesOutcome};
pub use run_cmd::{cmd_run, RunSummary};
pub use synth_cmd::{cmd_synth, SynthOutcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("path does not exist: {}", .0.display())]
    NotFound(PathBuf),
    #[error("calibration: {0}")]
    Calibration(String),
    #[error("cannot read image {}: {reason}", path.display())]
    Image { path: PathBuf, reason: String },
    #[error("malformed config {origin}: {source}")]
    Config { origin: String, source: ConfigError },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Odometry(#[from] OdometryError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::NotFound(_) => 2,
            Self::Calibration(_) => 3,
            Self::Image { .. } | Self::Odometry(_) => 4,
            Self::Config { .. } => 5,
            Self::Usage(_) | Self::Eval(_) | Self::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }
}

#[derive(Debug, Parser)]
#[command(name = "stereo-vo", version, about = "Stereo visual odometry with histogram-equalized ORB features")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track a stereo dataset and write trajectory, report and resolved config.
    Run(RunArgs),
    /// Align an estimated trajectory to a reference and report ATE.
    Eval(EvalArgs),
    /// Write a synthetic stereo dataset in KITTI layout.
    Synth(SynthArgs),
    /// Dump the features of one image as CSV plus an annotated PGM.
    Features(FeaturesArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// `key = value` config file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset root directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Directory layout of the dataset [default: kitti].
    #[arg(long, value_enum)]
    pub layout: Option<Layout>,
    /// Equalization policy: always, never or auto.
    #[arg(long)]
    pub heq: Option<String>,
    /// Output directory [default: out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Calibration file; defaults to `calib.txt` in the dataset.
    #[arg(long)]
    pub calib: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Estimated trajectory (KITTI or TUM, detected by field count).
    pub estimate: PathBuf,
    /// Reference trajectory (KITTI or TUM).
    pub reference: PathBuf,
    /// Align with scale as well (similarity instead of rigid).
    #[arg(long)]
    pub sim3: bool,
    /// Maximum timestamp difference for association, seconds.
    #[arg(long, default_value_t = stereo_vo::eval::DEFAULT_MAX_DT)]
    pub max_dt: f64,
    /// Timestamps for KITTI-format inputs, one per line.
    #[arg(long)]
    pub times: Option<PathBuf>,
    /// Sequence name for the published comparison (e.g. `00`, `MH-04`);
    /// guessed from the reference file name when omitted.
    #[arg(long)]
    pub sequence: Option<String>,
    /// Directory for the error and aligned-trajectory CSVs; defaults to the
    /// directory of the estimate.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Scene seed.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Compress gray levels into `[lo, hi]`.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub squash: Option<Vec<u8>>,
    /// Frames spread evenly over one full circle.
    #[arg(long, default_value_t = 200)]
    pub frames: usize,
    /// Number of scene dots.
    #[arg(long, default_value_t = 2000)]
    pub points: usize,
    /// Circle radius in meters.
    #[arg(long, default_value_t = 5.0)]
    pub radius: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FeaturesArgs {
    /// PGM or PNG image.
    pub image: PathBuf,
    /// Directory for `features.csv` and `features.pgm`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// `key = value` config file for the feature settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Equalization policy: always, never or auto.
    #[arg(long)]
    pub heq: Option<String>,
    /// Also report keypoint counts without and with equalization.
    #[arg(long)]
    pub before_after: bool,
}
