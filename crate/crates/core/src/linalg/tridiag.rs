use super::{DenseMatrix, DenseVector, PIVOT_TOL};
use crate::counters;
use crate::error::{shape_err, Error, Result};

/// Symmetric tridiagonal matrix: `diag` of length n, `offdiag` of length n−1
/// holding entries `(i, i+1)` and `(i+1, i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagSym {
    diag: DenseVector,
    offdiag: DenseVector,
}

impl TridiagSym {
    pub fn new(diag: DenseVector, offdiag: DenseVector) -> Result<Self> {
        if diag.is_empty() {
            return shape_err("tridiagonal matrix needs n >= 1");
        }
        if offdiag.len() + 1 != diag.len() {
            return shape_err(format!("off-diagonal length {} for n = {}", offdiag.len(), diag.len()));
        }
        Ok(TridiagSym { diag, offdiag })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &DenseVector {
        &self.diag
    }

    pub fn offdiag(&self) -> &DenseVector {
        &self.offdiag
    }

    pub fn densify(&self) -> DenseMatrix {
        let n = self.n();
        DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i + 1 == j {
                self.offdiag[i]
            } else if j + 1 == i {
                self.offdiag[j]
            } else {
                0.0
            }
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        (self.diag.iter().map(|v| v * v).sum::<f64>() + 2.0 * self.offdiag.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn matvec(&self, x: &DenseVector) -> DenseVector {
        let n = self.n();
        assert_eq!(x.len(), n, "tridiagonal matvec: length mismatch");
        counters::flops(5 * n as u64);
        DenseVector::from_fn(n, |i| {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.offdiag[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.offdiag[i] * x[i + 1];
            }
            s
        })
    }
}

/// Θ(n) band elimination without pivoting.
///
/// Callers must supply a band that is safe to eliminate in order
/// (diagonally dominant or otherwise verified); a vanishing eliminated
/// diagonal is reported as a singularity at that row.
pub fn thomas_solve(t: &TridiagSym, b: &DenseVector) -> Result<DenseVector> {
    let n = t.n();
    if b.len() != n {
        return shape_err(format!("rhs length {} for n = {n}", b.len()));
    }
    counters::tridiag_solve();
    let tol = PIVOT_TOL * t.frobenius_norm();
    let a = t.diag();
    let e = t.offdiag();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = a[0];
    if piv.abs() <= tol {
        return Err(Error::Singular {
            pivot: 0,
            magnitude: piv.abs(),
        });
    }
    d[0] = b[0] / piv;
    if n > 1 {
        c[0] = e[0] / piv;
    }
    for i in 1..n {
        piv = a[i] - e[i - 1] * c[i - 1];
        if piv.abs() <= tol {
            return Err(Error::Singular {
                pivot: i,
                magnitude: piv.abs(),
            });
        }
        if i + 1 < n {
            c[i] = e[i] / piv;
        }
        d[i] = (b[i] - e[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    counters::flops(8 * n as u64);
    Ok(DenseVector::from_vec(d))
}
