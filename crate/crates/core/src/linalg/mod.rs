//! Sparse storage and linear solvers for the step systems.

mod block;
pub mod dense;
mod krylov;
mod sparse;

use thiserror::Error;

pub use block::BlockSystem;
pub use dense::{DenseMatrix, DENSE_FALLBACK_LIMIT};
pub use krylov::{bicgstab_solve, cg_solve, Solution, SolverOptions, ABSOLUTE_FLOOR};
pub use sparse::{axpy, dot, norm2, CsrMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("matrix is not symmetric (defect {defect:e})")]
    NotSymmetric { defect: f64 },
    #[error("zero diagonal entry in row {row} with Jacobi preconditioning enabled")]
    ZeroDiagonal { row: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { best: Vec<f64>, iterations: usize, residual: f64 },
    #[error("matrix is singular to working precision (column {column})")]
    Singular { column: usize },
}
