use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid construction: {0}")]
    Construction(String),

    #[error("numerical rank {found} does not match expected rank {expected}")]
    Rank { expected: usize, found: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("enumeration cap exceeded: {needed} > {cap}; {hint}")]
    EnumerationCap {
        needed: usize,
        cap: usize,
        hint: &'static str,
    },

    #[error("minimizer not unique: {0}")]
    NonUnique(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
