use thiserror::Error;

/// Errors surfaced by the library.
///
/// Numerical degradations that have a defined fallback (a failed pocket
/// chart, a rejected sample) are reported through counters on the result
/// types instead; this enum is for contract violations.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented range.
    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    /// Input data violates a structural precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A link pattern mixes duplicate or coincident endpoints.
    #[error("invalid link pattern: {0}")]
    InvalidPattern(String),

    /// A conformal chart could not be built to the requested accuracy.
    #[error("chart construction failed: {0}")]
    ChartFailed(String),

    /// Configuration file or flag grammar error.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
