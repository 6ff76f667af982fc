//! Polynomials: univariate, sparse multivariate, blackbox, and matrices of
//! linear forms, plus the explicit determinant and w-th root used to turn a
//! reconstructed layer into a determinant query.

mod blackbox;
mod det;
mod linear;
mod multi;
mod uni;

pub use blackbox::{pit_equal, Blackbox, Rule};
pub use det::{det_linear_matrix, wth_root, DEFAULT_DET_BOUND};
pub use linear::LinearMatrix;
pub use multi::{Exponent, MultiPoly};
pub use uni::UniPoly;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("expected {expected} coordinates, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("interpolation node {0} appears twice")]
    DuplicateNode(u64),
    #[error("size bound exceeded: {0}")]
    SizeBound(String),
    #[error("polynomial is not a scalar multiple of a {0}-th power")]
    NotAPerfectPower(usize),
}
