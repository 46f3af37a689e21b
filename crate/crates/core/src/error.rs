use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument {value} outside the domain x > 0")]
    Domain { value: f64 },

    #[error(
        "value {value} outside the range of f' for {divergence}: admissible interval is {interval}"
    )]
    Range {
        value: f64,
        divergence: String,
        interval: String,
    },

    #[error("result overflows f64: {0}")]
    Overflow(String),

    #[error("support violated at index {index}: p1 = {p1} while p2 = 0")]
    Support { index: usize, p1: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("ordering violated: {0}")]
    Ordering(String),

    #[error("cannot parse divergence {0:?}; expected reverse-kl, forward-kl, js or alpha:<value>")]
    ParseDivergence(String),

    #[error("infeasible normalization bracket: {0}")]
    Infeasible(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("index {index} out of range 1..={max}")]
    Index { index: usize, max: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("parse error in {file} at byte {offset}: {message}")]
    Parse {
        file: String,
        offset: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
