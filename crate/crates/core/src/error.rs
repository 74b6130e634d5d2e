use thiserror::Error;

/// Errors raised by the simulation engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid value for `{key}`: {reason}")]
    InvalidConfig { key: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("non-finite value encountered at t = {time}: {what}")]
    NonFinite { time: f64, what: String },

    #[error("bond dimension {bond} exceeds the cap {max_bond} at t = {time} (bond {position})")]
    BondOverflow {
        time: f64,
        position: usize,
        bond: usize,
        max_bond: usize,
    },

    #[error("operator term is not normal ordered: {0}")]
    NotNormalOrdered(String),

    #[error("unsupported request: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
