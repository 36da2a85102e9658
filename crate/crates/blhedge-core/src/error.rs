use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("correlation matrix is not positive semi-definite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("payoff is not a member of the admissible class: {0}")]
    Membership(String),

    #[error("divergent functional for split {split}: |A| = {value:e}")]
    Divergent { split: String, value: f64 },

    #[error("non-finite payoff value at sample {index}: {point:?}")]
    NonFinitePayoff { index: usize, point: Vec<f64> },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
