use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} of size {size} exceeds the enumeration cap {cap}")]
    UnsupportedSize {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("{what} did not converge after {iterations} iterations (violation {violation:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        violation: f64,
    },

    #[error("root bracket [{lo}, {hi}] failed to change sign")]
    Bracket { lo: f64, hi: f64 },

    #[error("degenerate fit: noise scale collapsed to {sigma:e}")]
    Degenerate { sigma: f64 },

    #[error("estimator unavailable: {0}")]
    Unavailable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI error stream.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain_error",
            Error::Dimension(_) => "dimension_mismatch",
            Error::UnsupportedSize { .. } => "unsupported_size",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Bracket { .. } => "bracket_failure",
            Error::Degenerate { .. } => "degenerate_fit",
            Error::Unavailable(_) => "estimator_unavailable",
            Error::Config(_) => "configuration_error",
            Error::Csv(_) => "malformed_csv",
            Error::Io(_) => "io_error",
            Error::Json(_) => "malformed_json",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
