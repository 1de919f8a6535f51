//! Dense and tridiagonal real linear algebra: the numeric substrate.
//!
//! Matrices are column-major, which is also the `vec` convention used by
//! the Kronecker machinery. Every pivot test uses the same relative
//! tolerance, [`PIVOT_TOL`]`·‖A‖_F`.

mod dense;
mod eigen;
mod lu;
mod newton;
mod tridiag;

pub use dense::{matmul, DenseMatrix, DenseVector};
pub use eigen::{jacobi_eigen, EigenDecomp};
pub use lu::{cofactor_matrix, det, laplace_det, lu_inverse, lu_solve, minor, Lu};
pub use newton::{newton_root, NewtonRoot};
pub use tridiag::{thomas_solve, TridiagSym};

/// Relative pivot threshold shared by every factorization.
pub const PIVOT_TOL: f64 = 1e-12;
