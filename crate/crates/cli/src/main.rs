//! `xsal`: explainable saliency from the command line.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use xsal_core::Error;

/// Explainable saliency reconstruction with a log-Gabor filter bank.
#[derive(Debug, Parser)]
#[command(name = "xsal", version)]
pub struct Cli {
    /// JSON file whose keys set any flag; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a log-Gabor bank and write its transfer grids.
    Bank(BankArgs),
    /// Reconstruct a saliency map from a layer manifest.
    Explain(ExplainArgs),
    /// Run the reference CMR network and dump its activations as a manifest.
    Synth(SynthArgs),
    /// Score predictions against ground-truth maps and fixations.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct BankArgs {
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub width: usize,
    #[arg(long, default_value_t = 5)]
    pub orientations: usize,
    #[arg(long, default_value_t = 4)]
    pub wavelengths: usize,
    #[arg(long, default_value_t = 4)]
    pub sigmas: usize,
    /// Output directory for filter_NNN.npy and index.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the energy response of every filter to this image (resized to the bank).
    #[arg(long, value_name = "IMG")]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Combination {
    Mean,
    Max,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Input image; defaults to the manifest's input_image.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output map: .npy keeps full precision, anything else is written as PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for trace.json and per-layer reconstruction images.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Filter responses blended per activation and scale.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Reconstructions kept per layer.
    #[arg(long, default_value_t = 10)]
    pub keep: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub eps: f64,
    /// Gaussian blur sigma for the final map (0 = off).
    #[arg(long, default_value_t = 0.0)]
    pub blur: f64,
    #[arg(long, value_enum, default_value_t = Combination::Mean)]
    pub combination: Combination,
    /// Comma-separated scale factors.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2,4")]
    pub scales: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    pub min_scaled_dim: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory for activations, manifest.json and the network's own map.
    #[arg(long)]
    pub out: PathBuf,
    /// Load weights from a bundle directory instead of seeding them.
    #[arg(long, value_name = "DIR")]
    pub weights: Option<PathBuf>,
    /// Also write the weights used as a bundle directory.
    #[arg(long, value_name = "DIR")]
    pub save_weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub gt_map_dir: PathBuf,
    #[arg(long)]
    pub fix_dir: PathBuf,
    /// Negative fixations for shuffled AUC.
    #[arg(long, value_name = "FILE")]
    pub neg_fix: Option<PathBuf>,
    /// CSV report path.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON summary path (default: the report path with a .json extension).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

/// Failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::DegenerateBandwidth(_) | Error::Io { .. } | Error::Image(_) => 2,
        // an unreadable layer file is missing input; anything else is bad data
        Error::Layer { source, .. } if matches!(**source, Error::Io { .. }) => 2,
        Error::Layer { .. } => 3,
        Error::Npy(_) | Error::Json(_) | Error::Schema(_) => 3,
        Error::UndefinedNormalization(_) | Error::UndefinedCorrelation(_) => 3,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: exit_code(&e), message: e.to_string() }
    }
}

fn run(argv: Vec<OsString>) -> Result<(), Failure> {
    let cli = config::parse(argv)?;
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure { code: 4, message: format!("thread pool: {e}") })?;
    }
    match &cli.command {
        Command::Bank(a) => commands::bank(a),
        Command::Explain(a) => commands::explain(a),
        Command::Synth(a) => commands::synth(a),
        Command::Eval(a) => commands::eval(a),
    }
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    match std::panic::catch_unwind(|| run(argv)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(4),
    }
}
