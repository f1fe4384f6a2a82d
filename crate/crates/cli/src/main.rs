//! `sepf`: mixture generation, training, enhancement, evaluation and dump inspection.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sepf::Error),
    #[error("{path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{failed} of {total} manifest lines failed")]
    LinesFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "sepf", version, about = "Supervised speech-enhancement front-end")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mix every manifest line at its SNR and write noisy and scaled-noise WAVs.
    Mix {
        /// clean<TAB>noise<TAB>snr_db<TAB>seed[<TAB>condition] per line
        manifest: PathBuf,
        #[arg(short, long)]
        out_dir: PathBuf,
    },
    /// Train a separator from a run config; flags override config keys.
    Train(TrainArgs),
    /// Enhance one noisy WAV with a trained checkpoint.
    Enhance(EnhanceArgs),
    /// Evaluate checkpoints against the noisy baseline and the oracle mask.
    Eval {
        #[arg(short, long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(short, long)]
        manifest: PathBuf,
        /// Text report path; the JSONL records go next to it with a .jsonl extension.
        #[arg(short, long)]
        report_out: PathBuf,
    },
    /// Print the header of feature dumps (.sepx) or checkpoints (.sepf).
    Inspect {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Write a synthetic demo corpus with train and eval manifests.
    Synth {
        #[arg(short, long)]
        out_dir: PathBuf,
        /// Number of clean utterances.
        #[arg(long, default_value_t = 24)]
        utterances: usize,
        #[arg(long, default_value_t = 1.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// TOML run config.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
    #[arg(short, long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    #[arg(short, long)]
    pub checkpoint: PathBuf,
    /// Noisy 16 kHz mono WAV.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Write enhanced features as a SEPX dump (output domain unless --asr or --via-waveform).
    #[arg(long)]
    pub features_out: Option<PathBuf>,
    /// Write the noisy-phase resynthesis (fft and log-fft methods only).
    #[arg(long)]
    pub wav_out: Option<PathBuf>,
    /// Dump log-fbank features converted along the feature path.
    #[arg(long)]
    pub asr: bool,
    /// Dump log-fbank features recomputed from the resynthesized waveform.
    #[arg(long)]
    pub via_waveform: bool,
    /// Replace the predicted mask by a constant (testing hook).
    #[arg(long, hide = true)]
    pub force_mask: Option<f64>,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("SEPF_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("SEPF_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    log::info!("worker threads capped at {n}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Mix { manifest, out_dir } => commands::mix(&manifest, &out_dir),
        Command::Train(args) => commands::train(&args),
        Command::Enhance(args) => commands::enhance(&args),
        Command::Eval {
            checkpoints,
            manifest,
            report_out,
        } => commands::eval(&checkpoints, &manifest, &report_out),
        Command::Inspect { files } => commands::inspect(&files),
        Command::Synth {
            out_dir,
            utterances,
            seconds,
            seed,
        } => commands::synth(&out_dir, utterances, seconds, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
