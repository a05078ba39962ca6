use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Variants are grouped so that the CLI can map them onto process exit codes
/// (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid DAG: {0}")]
    InvalidDag(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("noise variance of node `{node}` is {value:e}, below floor {floor:e}")]
    DegenerateVariance { node: String, value: f64, floor: f64 },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("parent design of node `{node}` is rank deficient")]
    RankDeficient { node: String },

    #[error("column `{node}` has zero variance")]
    ZeroVarianceColumn { node: String },

    #[error("insufficient samples: need more than {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("node `{0}` is not a root")]
    NotARoot(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("structural violation: {0}")]
    Structure(String),

    #[error("moment matrix is degenerate (largest eigenvalue {0:e})")]
    DegenerateMoment(f64),

    #[error("moment matrix is ill-conditioned (condition number {cond:e} exceeds cap {cap:e})")]
    IllConditioned { cond: f64, cap: f64 },

    #[error("precision diagonal K_tt = {value:e} fell below floor {floor:e} inside the probe ball")]
    DegenerateConditioning { value: f64, floor: f64 },

    #[error("trace has {got} iterations, need at least {needed}")]
    TooFewIterations { needed: usize, got: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("data error at row {row}, column {column}: {message}")]
    Data { row: usize, column: String, message: String },

    #[error("data error: {0}")]
    DataFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Json(_) => 2,
            Error::Data { .. }
            | Error::DataFile(_)
            | Error::Csv(_)
            | Error::Io(_)
            | Error::MissingColumn(_)
            | Error::UnknownNode(_)
            | Error::InvalidDag(_)
            | Error::InvalidParams(_)
            | Error::DimensionMismatch { .. }
            | Error::InsufficientSamples { .. }
            | Error::ZeroVarianceColumn { .. }
            | Error::NotARoot(_)
            | Error::Structure(_) => 3,
            Error::DegenerateVariance { .. }
            | Error::NotPositiveDefinite(_)
            | Error::RankDeficient { .. }
            | Error::DegenerateMoment(_)
            | Error::IllConditioned { .. }
            | Error::DegenerateConditioning { .. }
            | Error::TooFewIterations { .. }
            | Error::UndefinedMetric(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
