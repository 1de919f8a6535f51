//! Matrix-calculus verification engine.
//!
//! Forward and reverse automatic differentiation, a catalog of analytic
//! matrix derivative rules, Kronecker-product vectorized Jacobians, adjoint
//! gradients for parameterized linear systems and ODEs, symmetric eigenvalue
//! perturbation theory, and a finite-difference harness that cross-checks
//! each derivative against the others.

pub mod adjoint_linear;
pub mod counters;
pub mod criteria;
pub mod eigsens;
pub mod error;
pub mod fdcheck;
pub mod forward;
pub mod kron;
pub mod linalg;
pub mod matrixrules;
pub mod odesens;
pub mod program;
pub mod random;
pub mod reverse;
pub mod scalar;
pub mod second_order;

pub use error::{Error, Result};
pub use forward::Dual;
pub use linalg::{DenseMatrix, DenseVector};
pub use scalar::Scalar;
