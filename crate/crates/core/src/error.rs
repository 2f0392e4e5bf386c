use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("eigenvalue {eigenvalue} lies on the square-root branch cut{}", at(*index))]
    BranchCut {
        eigenvalue: Complex64,
        index: Option<usize>,
    },

    #[error("matrix is numerically singular (condition {condition:e}){}", at(*index))]
    Singular { condition: f64, index: Option<usize> },

    #[error("seed value vanishes at n = {index}")]
    NodeFailure { index: usize },

    #[error("negative seed ratio {ratio:e} at n = {index}")]
    NegativeRatio { index: usize, ratio: f64 },

    #[error("normalized Hermite value overflowed at n = {n} (lambda = {lambda})")]
    Overflow { n: usize, lambda: f64 },

    #[error("factorization energy {lambda} is not admissible (must be negative)")]
    InvalidEnergy { lambda: f64 },

    #[error("channel dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} outside available range 0..{len}")]
    OutOfRange { index: usize, len: usize },

    #[error("problem size {size} exceeds limit {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("{0}")]
    Unsupported(String),
}

fn at(index: Option<usize>) -> String {
    match index {
        Some(n) => format!(" at n = {n}"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a sequence index to errors raised by index-free matrix routines.
    pub fn at(self, n: usize) -> Self {
        match self {
            Error::BranchCut {
                eigenvalue,
                index: None,
            } => Error::BranchCut {
                eigenvalue,
                index: Some(n),
            },
            Error::Singular { condition, index: None } => Error::Singular {
                condition,
                index: Some(n),
            },
            other => other,
        }
    }
}
