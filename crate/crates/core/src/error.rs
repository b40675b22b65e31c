use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("quantile level {0} is outside (0, 1)")]
    InvalidTau(f64),

    #[error("zero variance covariate")]
    ZeroVariance,

    #[error("bandwidth too small at x0 = {x0}")]
    BandwidthTooSmall { x0: f64 },

    #[error("singular local design at x0 = {x0}")]
    SingularLocalDesign { x0: f64 },

    #[error("dead coordinate: all multipliers are zero")]
    DeadCoordinate,

    #[error("degenerate objective: Q_n = {0} is not positive")]
    DegenerateObjective(f64),

    #[error("non-finite input at row {row}")]
    NonFinite { row: usize },

    #[error("covariate {index}: {source}")]
    Covariate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    InvalidInput(String),

    #[error("{path}: row {row}, column '{column}': {message}")]
    Cell {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidTau(_) => ErrorKind::Config,
            Error::ZeroVariance
            | Error::BandwidthTooSmall { .. }
            | Error::SingularLocalDesign { .. }
            | Error::DeadCoordinate
            | Error::DegenerateObjective(_) => ErrorKind::Numerical,
            Error::Covariate { source, .. } => source.kind(),
            Error::NonFinite { .. }
            | Error::InvalidInput(_)
            | Error::Cell { .. }
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Data,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidTau(tau))
    }
}
