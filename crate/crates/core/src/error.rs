use thiserror::Error;

/// Errors raised by the modelling toolkit.
#[derive(Debug, Error)]
pub enum TergmError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("empty series: {0}")]
    EmptySeries(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("dimension mismatch: expected {expected} nodes, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("statistic {0} requires node labels but none were supplied")]
    MissingLabels(String),

    #[error("unknown statistic `{0}`")]
    UnknownStatistic(String),

    #[error("duplicate statistic `{0}` in statistic set")]
    DuplicateStatistic(String),

    #[error("parameter vector has length {found}, statistic set has {expected} terms")]
    ParameterLength { expected: usize, found: usize },

    #[error("statistic `{0}` does not factor over dyads; use the general (sampling) path")]
    NotFactorized(String),

    #[error("series too short: need at least {needed} networks, found {found}")]
    SeriesTooShort { needed: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, TergmError>;

impl TergmError {
    /// True for errors caused by the input data rather than by the caller's
    /// configuration or by numerical trouble.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            TergmError::Parse { .. }
                | TergmError::Ingestion(_)
                | TergmError::EmptySeries(_)
                | TergmError::InvalidNetwork(_)
                | TergmError::DimensionMismatch { .. }
                | TergmError::MissingLabels(_)
                | TergmError::SeriesTooShort { .. }
                | TergmError::Io(_)
                | TergmError::Json(_)
                | TergmError::Csv(_)
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, TergmError::Numerical(_))
    }
}
