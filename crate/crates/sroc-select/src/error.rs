//! Crate-wide error type.
//!
//! Every fallible public operation returns [`Error`]. The variants are
//! grouped by the stage that raises them (input parsing, transforms,
//! fitting, selection, geometry) so that callers — in particular the CLI
//! front-end — can map them onto coarse failure classes without string
//! matching.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All errors raised by this crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A malformed input file or table: the message names the data row
    /// (1-based, counting non-comment rows after the header) and column.
    #[error("input error: {0}")]
    Input(String),

    /// A rate outside the open unit interval was passed to a transform.
    #[error("transform domain error: {0}")]
    TransformDomain(String),

    /// A transformed value outside the attainable range of a boundary
    /// transform (alpha = 0 or alpha = 2) was passed to the inverse.
    #[error("transform range error: {0}")]
    TransformRange(String),

    /// A model fit failed to converge within its iteration budget.
    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    /// Data too degenerate to fit (e.g. all transformed points identical).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Every candidate model was non-converged or infeasible under the
    /// requested criterion.
    #[error("no selectable model: {0}")]
    NoSelectableModel(String),

    /// Summary-curve geometry is undefined (vanishing variance along the
    /// false-positive axis).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// Invalid configuration handed to the library (bad alpha, level, grid
    /// size, replication count, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An I/O failure while reading input or writing output.
    #[error("io error: {0}")]
    Io(String),

    /// The output consumer closed the pipe early (e.g. `... | head`).
    /// The CLI treats this as a quiet, successful exit.
    #[error("broken pipe")]
    BrokenPipe,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            Error::BrokenPipe
        } else {
            Error::Io(e.to_string())
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(format!("serialization failed: {e}"))
    }
}

impl Error {
    /// Process exit code the CLI maps this error onto.
    ///
    /// 2 = input error, 3 = non-convergence, 4 = no selectable model,
    /// 5 = degenerate geometry. Everything else is also treated as an
    /// input/usage problem (2).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence(_) => 3,
            Error::NoSelectableModel(_) => 4,
            Error::DegenerateGeometry(_) => 5,
            _ => 2,
        }
    }
}
