use thiserror::Error;

/// Errors raised anywhere in the kernel.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("structure constants are not commutative: e{0}*e{1} != e{1}*e{0}")]
    NotCommutative(usize, usize),
    #[error("structure constants are not associative at (e{0}*e{1})*e{2}")]
    NotAssociative(usize, usize, usize),
    #[error("basis element 0 is not a unit: e0*e{0} != e{0}")]
    NoUnit(usize),
    #[error("algebra is not local: {0}")]
    NotLocal(String),
    #[error("algebra dimension {dim} exceeds the configured maximum {max}")]
    Capacity { dim: usize, max: usize },
    #[error("malformed structure table: {0}")]
    MalformedTable(String),
    #[error("operands belong to different Weil algebras")]
    AlgebraMismatch,
    #[error("element with augmentation {0} is not invertible")]
    NotInvertible(f64),
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable index {index} out of range for arity {arity}")]
    Arity { index: usize, arity: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("real part of the matrix is singular (|det| = {0:e})")]
    SingularRealPart(f64),
    #[error("degree error: {0}")]
    Degree(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;
