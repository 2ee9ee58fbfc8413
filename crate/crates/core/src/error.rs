use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("singular diffusion matrix at path {path}, step {step}")]
    SingularSigma { path: usize, step: usize },

    #[error("unknown problem '{0}'")]
    UnknownProblem(String),

    #[error("syntax error at {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("index {index} out of range for variable '{variable}'")]
    IndexOutOfRange { variable: String, index: usize },

    #[error("expression references '{0}' but no value was bound")]
    MissingBinding(&'static str),

    #[error("design matrix is rank deficient (rank {rank} < {columns})")]
    RankDeficient { rank: usize, columns: usize },

    #[error("regression failed: {0}")]
    RegressionFailure(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("generator depends on gamma after the phi transform (gap {gap:e})")]
    GammaDependence { gap: f64 },

    #[error("solution carries no gamma estimates")]
    MissingGamma,

    #[error("problem has no analytic solution")]
    MissingAnalyticV,

    #[error("explicit scheme unstable: dt {dt:e} exceeds bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("problem domain is the whole space")]
    DomainIsWholeSpace,

    #[error("invalid problem: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Numeric failures (as opposed to malformed input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::SingularSigma { .. }
                | Error::RankDeficient { .. }
                | Error::RegressionFailure(_)
                | Error::GammaDependence { .. }
                | Error::CflViolation { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidConfig(e.to_string())
    }
}
