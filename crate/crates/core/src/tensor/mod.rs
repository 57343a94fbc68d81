//! Dense linear-algebra kernels: products, Frobenius geometry, SVD and
//! symmetric eigendecomposition.

mod eig;
mod matrix;
mod svd;

pub use eig::{sym_eig_f64, sym_eig_top, SymEig, TopEig};
pub use matrix::{frobenius_inner, frobenius_norm, matmul, matmul_f64, Matrix};
pub use svd::{svd, svd_f64, svd_with, Svd, SvdConfig, SvdF64};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("shape ({rows}, {cols}) does not match data length {len}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("matrix dimensions must be positive, got ({rows}, {cols})")]
    EmptyShape { rows: usize, cols: usize },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
    #[error("matrix of shape {shape:?} is not square")]
    NotSquare { shape: (usize, usize) },
    #[error("matrix is not symmetric (max |m_ij - m_ji| = {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("requested {k} eigenpairs of a {dim}-dimensional matrix")]
    RankOutOfRange { k: usize, dim: usize },
    #[error("no convergence after {sweeps} sweeps (residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },
}
