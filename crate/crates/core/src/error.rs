use thiserror::Error;

/// Errors produced anywhere in the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("{divergence}: conjugate argument {value} outside domain {domain}")]
    ConjugateDomain {
        divergence: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("outcome outside support: {0}")]
    Support(String),

    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("unknown name {value:?} for {what} (expected one of {expected})")]
    UnknownName {
        what: &'static str,
        value: String,
        expected: &'static str,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
