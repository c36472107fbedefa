use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("exact data: regularization parameter choice undefined")]
    ExactData,

    #[error("mismatched block structure: {0}")]
    BlockMismatch(String),

    #[error("numerical blow-up: {0}")]
    NumericalBlowUp(String),

    #[error("data not in R^L_\u{22c4}: {0}")]
    NotSumZero(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("forward solve did not converge: {0}")]
    ForwardSolve(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
