use thiserror::Error;

/// Errors produced by the library, grouped by failure class.
#[derive(Debug, Error)]
pub enum Error {
    /// Array lengths or component counts disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Mixtures that must share weights do not.
    #[error("weight alignment: {0}")]
    Alignment(String),

    /// Input data is malformed, misaligned, or too short.
    #[error("invalid data: {0}")]
    Data(String),

    /// Input is degenerate for the requested operation (constant series,
    /// too few distinct values, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Training diverged or produced a non-finite loss.
    #[error("training failed: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
