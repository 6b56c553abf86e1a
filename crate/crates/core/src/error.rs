use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while building or running a simulation.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("config file line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid channel profile: {0}")]
    Profile(String),

    #[error("weighting factor {0} outside [0, 1]")]
    WeightOutOfRange(f64),

    #[error("weighting method requires a weighting factor")]
    MissingWeight,

    #[error("no weight table entry for K = {k_db} dB, SNR = {snr_db} dB")]
    OffGrid { k_db: f64, snr_db: f64 },

    #[error("SVD did not converge on subcarrier {subcarrier}")]
    SvdNoConvergence { subcarrier: usize },

    #[error("malformed weight table: {0}")]
    TableFormat(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors the CLI reports with the I/O exit code.
    pub fn is_io(&self) -> bool {
        matches!(self, SimError::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
