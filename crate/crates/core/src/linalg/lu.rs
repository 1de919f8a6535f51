use super::{DenseMatrix, DenseVector, PIVOT_TOL};
use crate::counters;
use crate::error::{shape_err, Error, Result};

/// LU factorization with partial pivoting, `P A = L U`.
///
/// `L` (unit lower) and `U` share one column-major buffer.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: DenseMatrix,
    /// Row `i` of `P A` is row `perm[i]` of `A`.
    perm: Vec<usize>,
    swaps: usize,
}

impl Lu {
    /// Factorizes `a`, rejecting pivots below `1e-12·‖a‖_F`.
    pub fn factor(a: &DenseMatrix) -> Result<Lu> {
        let lu = Self::factor_raw(a)?;
        let tol = PIVOT_TOL * a.frobenius_norm();
        for k in 0..lu.n {
            let piv = lu.lu[(k, k)].abs();
            if piv <= tol {
                return Err(Error::Singular {
                    pivot: k,
                    magnitude: piv,
                });
            }
        }
        Ok(lu)
    }

    /// Factorizes without any pivot test; zero pivots are kept as is.
    pub fn factor_raw(a: &DenseMatrix) -> Result<Lu> {
        if !a.is_square() {
            return shape_err(format!("LU of non-square {}x{}", a.rows(), a.cols()));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        for k in 0..n {
            let (p, _) = (k..n).fold((k, -1.0), |(bi, bv), i| {
                let v = lu[(i, k)].abs();
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
            if p != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
                perm.swap(k, p);
                swaps += 1;
            }
            let piv = lu[(k, k)];
            if piv == 0.0 {
                continue;
            }
            for i in k + 1..n {
                let l = lu[(i, k)] / piv;
                lu[(i, k)] = l;
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= l * u;
                }
            }
            counters::flops((2 * (n - k - 1) * (n - k - 1) + (n - k - 1)) as u64);
        }
        Ok(Lu { n, lu, perm, swaps })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DenseVector) -> Result<DenseVector> {
        if b.len() != self.n {
            return shape_err(format!("rhs length {} for {}x{} system", b.len(), self.n, self.n));
        }
        counters::dense_solve();
        counters::flops(2 * (self.n * self.n) as u64);
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        Ok(DenseVector::from_vec(x))
    }

    /// Solves `Aᵀ x = b` with the same factorization.
    pub fn solve_transpose(&self, b: &DenseVector) -> Result<DenseVector> {
        if b.len() != self.n {
            return shape_err(format!("rhs length {} for {}x{} system", b.len(), self.n, self.n));
        }
        counters::dense_solve();
        counters::flops(2 * (self.n * self.n) as u64);
        let n = self.n;
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ y = b, Lᵀ z = y, x = Pᵀ z.
        let mut y = b.as_slice().to_vec();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lu[(j, i)] * y[j];
            }
            y[i] = s / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.lu[(j, i)] * y[j];
            }
            y[i] = s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        Ok(DenseVector::from_vec(x))
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if b.rows() != self.n {
            return shape_err("rhs row count does not match system");
        }
        let cols: Result<Vec<_>> = (0..b.cols()).map(|j| self.solve(&b.column(j))).collect();
        DenseMatrix::from_columns(&cols?)
    }

    /// Solves `Aᵀ X = B` column by column.
    pub fn solve_transpose_matrix(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if b.rows() != self.n {
            return shape_err("rhs row count does not match system");
        }
        let cols: Result<Vec<_>> = (0..b.cols()).map(|j| self.solve_transpose(&b.column(j))).collect();
        DenseMatrix::from_columns(&cols?)
    }

    pub fn inverse(&self) -> Result<DenseMatrix> {
        self.solve_matrix(&DenseMatrix::identity(self.n))
    }

    /// Product of pivots times the permutation sign.
    pub fn det(&self) -> f64 {
        let sign = if self.swaps.is_multiple_of(2) { 1.0 } else { -1.0 };
        (0..self.n).fold(sign, |d, k| d * self.lu[(k, k)])
    }
}

/// Solves `a x = b` by partial-pivoting LU.
pub fn lu_solve(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector> {
    Lu::factor(a)?.solve(b)
}

/// Inverse via LU; used by tests and the determinant identities.
pub fn lu_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    Lu::factor(a)?.inverse()
}

/// Determinant as the signed product of LU pivots.
///
/// Singular matrices are not an error here: their determinant is whatever
/// the elimination produces, typically zero or roundoff-sized.
pub fn det(a: &DenseMatrix) -> Result<f64> {
    if !a.is_square() {
        return shape_err(format!("det of non-square {}x{}", a.rows(), a.cols()));
    }
    if a.rows() == 0 {
        return Ok(1.0);
    }
    Ok(Lu::factor_raw(a)?.det())
}

/// Laplace expansion along the first row. Exponential cost; small `n` only.
pub fn laplace_det(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    match n {
        0 => 1.0,
        1 => a[(0, 0)],
        2 => a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)],
        _ => (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[(0, j)] * laplace_det(&minor(a, 0, j))
            })
            .sum(),
    }
}

/// Matrix with row `r` and column `c` deleted.
pub fn minor(a: &DenseMatrix, r: usize, c: usize) -> DenseMatrix {
    let n = a.rows();
    let m = a.cols();
    DenseMatrix::from_fn(n - 1, m - 1, |i, j| {
        let ii = if i < r { i } else { i + 1 };
        let jj = if j < c { j } else { j + 1 };
        a[(ii, jj)]
    })
}

/// Cofactor matrix, `C_ij = (-1)^{i+j} det(minor_ij)`, by Laplace expansion.
pub fn cofactor_matrix(a: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    if n == 1 {
        return DenseMatrix::from_rows(&[[1.0]]);
    }
    DenseMatrix::from_fn(n, n, |i, j| {
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * laplace_det(&minor(a, i, j))
    })
}
