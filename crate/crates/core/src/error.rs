use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: frames of track {track_id} are not increasing ({previous} followed by {next})")]
    NonMonotoneFrames {
        path: PathBuf,
        track_id: u32,
        previous: i64,
        next: i64,
    },
    #[error("{path}: malformed row {row}: {reason}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        reason: String,
    },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("route id {0} out of range 0..12")]
    RouteIdOutOfRange(usize),
    #[error("condition category {0} out of range 1..=78")]
    CategoryOutOfRange(u32),
    #[error("expected a scenario of {expected} frames, got {actual}")]
    ScenarioLength { expected: usize, actual: usize },
    #[error("positions have zero variance; cannot normalize")]
    ZeroVariance,
    #[error("need at least {required} scenarios, got {actual}")]
    TooFewScenarios { required: usize, actual: usize },
    #[error("training split is empty")]
    EmptyTrainingSplit,
    #[error("no scenarios survived extraction")]
    NoScenarios,
    #[error("training diverged at epoch {epoch}: {what} is not finite")]
    Diverged { epoch: usize, what: &'static str },
    #[error("condition category {0} is not in the model vocabulary")]
    UnknownCategory(u32),
    #[error("latent dimension {dimension} out of range 0..{latent_dim}")]
    DimensionOutOfRange { dimension: usize, latent_dim: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{path} is locked by another process (remove {path} if stale)")]
    Locked { path: PathBuf },
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error("safetensors: {0}")]
    Safetensors(#[from] safetensors::SafeTensorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration rather than a
    /// failure while doing the work. The CLI maps these to exit code 1.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn { .. }
                | Error::InvalidGeometry(_)
                | Error::InvalidConfig(_)
                | Error::RouteIdOutOfRange(_)
                | Error::CategoryOutOfRange(_)
                | Error::UnknownCategory(_)
                | Error::DimensionOutOfRange { .. }
                | Error::Toml { .. }
                | Error::TooFewScenarios { .. }
        )
    }
}
