use thiserror::Error;

/// Errors produced by evaluators and verifiers.
///
/// Every failure mode that the numeric layer can detect is surfaced as an
/// explicit error; no NaN or infinity ever escapes an operation.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    /// Input outside the operation's domain (divergent series, argument on a
    /// pole lattice, invalid parameter combination).
    #[error("domain error: {0}")]
    Domain(String),

    /// An argument lands exactly on a pole of the evaluated expression.
    #[error("pole: {0}")]
    Pole(String),

    /// Working precision could not certify the result.
    #[error("precision exhausted: {0}")]
    Precision(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;
