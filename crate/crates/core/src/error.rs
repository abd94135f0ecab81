use std::path::PathBuf;

/// Crate-wide error type.
///
/// Variants are grouped by failure class so callers (notably the CLI) can
/// map them onto exit codes: I/O and parse problems are data errors,
/// the remaining variants are numerical failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A header, config or CSV file could not be parsed; `key` names the
    /// offending entry.
    #[error("parse error in {path} (key `{key}`): {message}")]
    Parse {
        path: PathBuf,
        key: String,
        message: String,
    },

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("unit mismatch: expected {expected}, found {found}")]
    UnitMismatch { expected: String, found: String },

    /// Least-squares or ANOVA system has no unique solution.
    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    /// A similarity or correlation is undefined because an input has zero
    /// variance.
    #[error("undefined similarity: {0}")]
    ZeroVariance(String),

    /// A thresholded region contains no pixels.
    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("registration failure: {0}")]
    RegistrationFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// True for errors caused by malformed or inconsistent input data
    /// (as opposed to numerical failures on well-formed data).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Invariant(_)
                | Error::DimMismatch(_)
                | Error::Range(_)
                | Error::UnitMismatch { .. }
                | Error::InvalidConfig(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
