use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the detector models, characterization pipeline and
/// session engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{quantity} = {value} outside validity range [{min}, {max}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("count rate {rate_hz} Hz at or above repetition rate {rep_rate_hz} Hz (saturated)")]
    Saturated { rate_hz: f64, rep_rate_hz: f64 },

    #[error("QBER undefined for p_f = p_h = 0")]
    UndefinedQber,

    #[error("superlinearity verdict indeterminate: every point is masked")]
    Indeterminate,

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("invalid calibration data: {0}")]
    Calibration(String),

    #[error("{path}: line {line}: {message}")]
    Row {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn out_of_range(quantity: &'static str, value: f64, min: f64, max: f64) -> Self {
        Error::OutOfRange {
            quantity,
            value,
            min,
            max,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
