//! Dense and block-diagonal linear algebra for the B-matrix manipulations:
//! Cholesky and pivoted LU factorizations, triangular solves, block-wise
//! square roots of `W`, and log-determinants.

mod block;
mod cholesky;
mod dense;
mod eigen;
mod lu;
mod triangular;

use thiserror::Error;

pub use block::{block_sqrt, BlockDiagonal, MatrixSqrt};
pub use cholesky::{cholesky, cholesky_semidefinite, log_det_chol, CholeskyFactor};
pub use dense::DenseMatrix;
pub use eigen::{symmetric_eigen, symmetric_eigenvalues};
pub use lu::{log_det_lu, lu_decompose, LUFactors};
pub use triangular::{tri_solve, tri_solve_vec, Side, Triangle};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is singular at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("block {block} is not positive semi-definite (pivot {value:e})")]
    IndefiniteBlock { block: usize, value: f64 },
    #[error("determinant is negative")]
    NegativeDeterminant,
    #[error("block size {m} does not divide dimension {n}")]
    BlockSize { n: usize, m: usize },
}
