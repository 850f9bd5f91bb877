use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter combination the mapping or simulator does not support.
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed caller input (bit stream length, sign values, grids, ...).
    #[error("invalid input: {0}")]
    Input(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    /// Coefficients that violate the design constraints.
    #[error("infeasible coefficient set: {0}")]
    Infeasible(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
