use thiserror::Error;

/// Errors raised by model assembly, controller recovery, and I/O.
///
/// Infeasibility of an LMI problem is never an error; it is reported through
/// [`crate::sdp::SdpStatus`] and [`crate::codesign::DesignOutcome`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: String,
        got: String,
    },

    #[error("matrix {factor} is singular or numerically singular (reciprocal condition {rcond:.3e})")]
    Singular { factor: &'static str, rcond: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed problem: {0}")]
    MalformedProblem(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(context: impl Into<String>, expected: impl ToString, got: impl ToString) -> Error {
    Error::Dimension {
        context: context.into(),
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
