use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("signal too short: {len} samples, need at least {window_len}")]
    SignalTooShort { len: usize, window_len: usize },
    #[error("invalid window: length {0} is not a power of two >= 4")]
    InvalidWindow(usize),
    #[error("invalid hop {hop} for window {window_len}: hop must be window/2")]
    InvalidHop { window_len: usize, hop: usize },
    #[error("COLA violated: {0}")]
    ColaViolated(String),
    #[error("unsupported sample rate {0} Hz (only 16000 Hz is accepted)")]
    SampleRate(u32),
    #[error("domain mismatch: expected {expected}, got {found}")]
    DomainMismatch { expected: String, found: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid method: {0}")]
    InvalidMethod(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical overflow: {0}")]
    NumericalOverflow(String),
    #[error("degenerate source: {0}")]
    DegenerateSource(String),
    #[error("noise too short: need {needed} samples, got {available}")]
    NoiseTooShort { needed: usize, available: usize },
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("not invertible: {0}")]
    NotInvertible(String),
    #[error("empty manifest")]
    EmptyManifest,
    #[error("manifest {path}:{line}: {msg}")]
    Manifest {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("bad file format: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    IoBare(#[from] std::io::Error),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
