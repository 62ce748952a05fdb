use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch ({}x{} vs {}x{})", .left.0, .left.1, .right.0, .right.1)]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate input: every pixel has zero norm")]
    DegenerateInput,

    #[error("degenerate initialization: largest singular value of X·B0 is zero")]
    DegenerateInitialization,

    #[error(
        "power iteration did not converge after {iterations} iterations (best estimate {estimate})"
    )]
    NoConvergence { iterations: usize, estimate: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("iterates diverged (NaN or inf) at outer iteration {outer}")]
    Diverged { outer: usize },

    #[error("simplex constraint violated in {what} column {column} (sum {sum})")]
    SimplexViolation {
        what: &'static str,
        column: usize,
        sum: f64,
    },

    #[error("coherence undefined for fewer than two endmembers")]
    CoherenceUndefined,

    #[error("SAD undefined for zero spectrum (column {0})")]
    ZeroSpectrum(usize),

    #[error("all {} ensemble runs failed: {}", .0.len(), summarize_failures(.0))]
    AllRunsFailed(Vec<(usize, String)>),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", .path.display())]
    Format { path: PathBuf, message: String },
}

fn summarize_failures(failures: &[(usize, String)]) -> String {
    failures
        .iter()
        .map(|(i, e)| format!("run {i}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
