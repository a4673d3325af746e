use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate population: total population N is zero")]
    DegeneratePopulation,

    #[error("degenerate rates: {0}")]
    DegenerateRates(String),

    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    #[error("no finite contact-rate threshold: R0 does not depend on beta")]
    NoThreshold,

    #[error("degenerate spectrum: expected a one-dimensional null space, smallest singular values {smallest:e} and {next:e}")]
    DegenerateSpectrum { smallest: f64, next: f64 },

    #[error("unstable derivative for `{param}`: step h gives {coarse:e}, step h/2 gives {fine:e}")]
    DerivativeInstability {
        param: &'static str,
        coarse: f64,
        fine: f64,
    },

    #[error("normalized index for `{param}` is undefined because R0 = 0")]
    UndefinedIndex { param: &'static str },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no row for country `{country}` in {file}")]
    MissingCountry { country: String, file: String },

    #[error("malformed date header `{column}` in {file}")]
    MalformedDateHeader { column: String, file: String },

    #[error("malformed value `{value}` in {file}, column `{column}`")]
    MalformedValue {
        value: String,
        column: String,
        file: String,
    },

    #[error("csv error in {file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("fit failed: {0}")]
    FitFailure(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::Config { .. } | Error::Io { .. } => 2,
            Error::MissingCountry { .. }
            | Error::MalformedDateHeader { .. }
            | Error::MalformedValue { .. }
            | Error::Csv { .. } => 4,
            _ => 3,
        }
    }
}
