use thiserror::Error;

/// Errors produced by the synthesis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state blow-up at step {step}{context}")]
    BlowUp { step: usize, context: String },

    #[error("hypothesis check failed: {0}")]
    Unsatisfiable(String),

    #[error("grid capacity exceeded: {requested} nodes > cap {cap}")]
    GridCapExceeded { requested: u64, cap: u64 },

    #[error("enumeration budget exceeded: {requested} > {budget}")]
    BudgetExceeded { requested: u64, budget: u64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("artifact format error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
