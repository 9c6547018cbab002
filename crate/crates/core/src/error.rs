use thiserror::Error;

use crate::elliptic::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input field violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Mesh construction failed.
    #[error("invalid mesh: {0}")]
    Mesh(String),

    /// A field does not match the mesh it is used with.
    #[error("field has {got} values, mesh has {expected} cells")]
    FieldSize { expected: usize, got: usize },

    /// Conjugate gradient did not reach the requested residual.
    #[error(
        "linear solver did not converge after {} iterations (relative residual {:.3e})",
        .report.iterations,
        .report.relative_residual
    )]
    NonConvergence { report: SolveReport },

    /// Newton iteration for the population step failed.
    #[error("newton iteration failed: {0}")]
    Newton(String),

    /// A computed quantity left its admissible region by more than the slack.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("config key `{key}`: {message}")]
    ConfigValue { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    /// True for parse/config errors (CLI exit code 1).
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::ConfigSyntax { .. } | Error::ConfigValue { .. } | Error::Io(_)
        )
    }

    /// True for invariant violations (CLI exit code 3).
    pub fn is_invariant(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }
}
