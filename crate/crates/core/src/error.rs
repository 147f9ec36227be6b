use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("sensor id mismatch: detection from sensor {detection}, mount for sensor {mount}")]
    SensorMismatch { detection: u32, mount: u32 },

    #[error("time {time} outside pose log span [{start}, {end}]")]
    OutOfSpan { time: f64, start: f64, end: f64 },

    #[error("input not sorted by time at index {index}")]
    Unsorted { index: usize },

    #[error("unknown experiment id {0}")]
    UnknownExperiment(u32),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Short machine-readable tag used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::InvalidInput(_) => "invalid_input",
            Error::SensorMismatch { .. } => "sensor_mismatch",
            Error::OutOfSpan { .. } => "out_of_span",
            Error::Unsorted { .. } => "unsorted",
            Error::UnknownExperiment(_) => "unknown_experiment",
            Error::Config(_) => "config",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
