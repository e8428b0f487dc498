use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stability violated in {stage} stage: {detail}")]
    Stability { stage: &'static str, detail: String },

    #[error("y-domain truncation: {0}")]
    Truncation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported quadrature order {0} (supported: 2..=256)")]
    UnsupportedOrder(usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
