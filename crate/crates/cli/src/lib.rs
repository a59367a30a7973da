//! Command-line front end: `synth`, `train`, `detect`, `eval` and `baseline`.
//!
//! Exit codes: 0 ok, 2 configuration or I/O problem, 3 missing groundtruth,
//! 4 model does not fit the data, 5 evaluation impossible.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod config;

pub use config::{Mode, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("missing groundtruth: {0}")]
    MissingGroundtruth(String),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("evaluation impossible: {0}")]
    EvalImpossible(String),
    #[error(transparent)]
    Core(#[from] dlfumi::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(_) => 2,
            CliError::MissingGroundtruth(_) => 3,
            CliError::ModelMismatch(_) => 4,
            CliError::EvalImpossible(_) => 5,
        }
    }
}

/// Wrap a core error with the file it came from; I/O and format problems stay exit 2.
pub(crate) fn at(path: &Path) -> impl FnOnce(dlfumi::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "dlfumi", version, about = "Multiple-instance dictionary learning for BCG heartbeat detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multichannel recording with groundtruth.
    Synth(SynthArgs),
    /// Learn a dictionary, background model and detection parameters.
    Train(TrainArgs),
    /// Detect heartbeats and heart rate with a trained model.
    Detect(DetectArgs),
    /// Compare an estimated heart-rate series with groundtruth.
    Eval(EvalArgs),
    /// Run a time-domain baseline estimator.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings (key=value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Recording CSV to write; the settings and planted template go to `<out>.meta`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Learner settings, each also accepted as a config key of the same name.
#[derive(Debug, Args, Default)]
pub struct FumiFlags {
    #[arg(long = "n_target")]
    pub n_target: Option<usize>,
    #[arg(long = "n_background")]
    pub n_background: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long = "big_gamma")]
    pub big_gamma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Positive-bag weight, or `auto` for N-/N+.
    #[arg(long)]
    pub psi: Option<String>,
    #[arg(long = "inner_iters")]
    pub inner_iters: Option<usize>,
    #[arg(long = "max_em_iters")]
    pub max_em_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

impl FumiFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("n_target", self.n_target.map(|v| v.to_string()));
        put("n_background", self.n_background.map(|v| v.to_string()));
        put("lambda", self.lambda.map(|v| v.to_string()));
        put("big_gamma", self.big_gamma.map(|v| v.to_string()));
        put("beta", self.beta.map(|v| v.to_string()));
        put("psi", self.psi.clone());
        put("inner_iters", self.inner_iters.map(|v| v.to_string()));
        put("max_em_iters", self.max_em_iters.map(|v| v.to_string()));
        put("tol", self.tol.map(|v| v.to_string()));
        out
    }
}

#[derive(Debug, Args, Default)]
pub struct DetectionFlags {
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub neighborhood: Option<usize>,
    #[arg(long = "min_votes")]
    pub min_votes: Option<usize>,
    #[arg(long)]
    pub refractory: Option<usize>,
}

impl DetectionFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        [
            ("threshold", self.threshold.map(|v| v.to_string())),
            ("neighborhood", self.neighborhood.map(|v| v.to_string())),
            ("min_votes", self.min_votes.map(|v| v.to_string())),
            ("refractory", self.refractory.map(|v| v.to_string())),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training recordings (several are pooled; the usual case in batch mode).
    #[arg(required = true)]
    pub recordings: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Dictionary CSV to write; sidecars go to `<out>.params` and `<out>.cov.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fumi: FumiFlags,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    pub recording: PathBuf,
    /// Dictionary CSV written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Heart rate from the spectrum of the confidence series (implied by batch mode).
    #[arg(long)]
    pub dft: bool,
    /// Output prefix: writes `<out>.beats.csv` and `<out>.hr.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub detection: DetectionFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Estimated heart-rate CSV.
    pub estimate: PathBuf,
    /// Recording CSV with a groundtruth column.
    #[arg(long)]
    pub gt: PathBuf,
    /// Estimated beats CSV, for the interval error and per-beat Bland-Altman.
    #[arg(long)]
    pub beats: Option<PathBuf>,
    /// Heart-rate CSV of a comparison method.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report (key=value); per-window errors go to `<out>.windows.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Wppd,
    En,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    pub recording: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Channel to analyse.
    #[arg(long, conflicts_with = "train")]
    pub channel: Option<usize>,
    /// Pick the channel with the lowest MAE on this recording instead.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Output prefix: writes `<out>.beats.csv` and `<out>.hr.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Detect(a) => commands::detect(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Baseline(a) => commands::baseline(&a),
    }
}

/// `<path><suffix>` without touching the existing extension.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
