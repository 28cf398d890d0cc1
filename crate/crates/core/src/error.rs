use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Error type shared by every stage of the toolkit.
///
/// The variants map onto the process exit codes used by the `weaktraj`
/// binary (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A run configuration failed validation; every violation is listed.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    /// A function argument violates its precondition.
    #[error("argument error: {0}")]
    Argument(String),

    /// Input data is degenerate (all-zero frame, zero variance, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Input data is malformed or inconsistent (negative density, bad schema).
    #[error("data error: {0}")]
    Data(String),

    /// A numerical procedure failed (aliasing, step too large).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Lloyd iteration did not reach its tolerance.
    #[error(
        "Lloyd iteration did not converge on plane {plane} after {iterations} iterations \
         (last max move {max_move:e} mm, tolerance {tolerance:e} mm)"
    )]
    LloydNonConvergence {
        plane: usize,
        iterations: usize,
        max_move: f64,
        tolerance: f64,
    },

    /// CSV or JSON artifact does not match its schema.
    #[error("schema error in {}: {msg}", path.display())]
    Schema { path: PathBuf, msg: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code: 2 validation, 3 data/schema, 4 numerical, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Validation(_) | Error::Argument(_) => 2,
            Error::Degenerate(_) | Error::Data(_) | Error::Schema { .. } => 3,
            Error::Numerical(_) | Error::LloydNonConvergence { .. } => 4,
            Error::Io { .. } => 5,
        }
    }
}
