use thiserror::Error;

/// Errors raised by the analysis pipeline.
///
/// Variants are grouped so that callers (the CLI in particular) can map
/// them onto data-contract versus I/O failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("unknown device '{0}' has no link profile")]
    UnknownDevice(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("non-finite value in row {row}, column '{column}'")]
    NonFinite { row: usize, column: String },

    #[error("design matrix is rank deficient; dependent columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("label mismatch: expected [{}], got [{}]", .expected.join(", "), .found.join(", "))]
    LabelMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("{solver} did not converge after {iterations} iterations (best objective {best_objective:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        best_objective: f64,
        best_params: Vec<f64>,
    },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("domain error in {function}: {reason}")]
    Domain {
        function: &'static str,
        reason: String,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the underlying file system rather than of the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
