use crate::counters;
use crate::error::{shape_err, Error, Result};
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

/// Real column vector.
///
/// Constructed from external data through [`DenseVector::new`], which rejects
/// NaN and infinities.
#[derive(Clone, PartialEq, Default)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite vector entry at {i}")));
        }
        Ok(DenseVector { data })
    }

    pub(crate) fn from_vec(data: Vec<f64>) -> Self {
        DenseVector { data }
    }

    pub fn zeros(n: usize) -> Self {
        DenseVector { data: vec![0.0; n] }
    }

    pub fn ones(n: usize) -> Self {
        DenseVector { data: vec![1.0; n] }
    }

    /// Unit basis vector `e_i`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.data[i] = 1.0;
        v
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize) -> f64) -> Self {
        DenseVector {
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        counters::flops(2 * self.len() as u64);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn scale(&self, alpha: f64) -> DenseVector {
        counters::flops(self.len() as u64);
        self.map(|v| alpha * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseVector {
        DenseVector {
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + alpha·other`.
    pub fn axpy(&self, alpha: f64, other: &DenseVector) -> DenseVector {
        assert_eq!(self.len(), other.len(), "axpy: length mismatch");
        counters::flops(2 * self.len() as u64);
        DenseVector {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect(),
        }
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &DenseVector) -> DenseVector {
        assert_eq!(self.len(), other.len(), "hadamard: length mismatch");
        counters::flops(self.len() as u64);
        DenseVector {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for DenseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseVector{:?}", self.data)
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl Add for &DenseVector {
    type Output = DenseVector;
    fn add(self, rhs: &DenseVector) -> DenseVector {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &DenseVector {
    type Output = DenseVector;
    fn sub(self, rhs: &DenseVector) -> DenseVector {
        self.axpy(-1.0, rhs)
    }
}

impl Neg for &DenseVector {
    type Output = DenseVector;
    fn neg(self) -> DenseVector {
        self.map(|v| -v)
    }
}

/// Real dense matrix stored column-major.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from column-major data.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return shape_err(format!(
                "expected {} entries for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite matrix entry at {i}")));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from row literals, e.g. `from_rows(&[[1.0, 2.0], [3.0, 4.0]])`.
    pub fn from_rows<const C: usize>(rows: &[[f64; C]]) -> Self {
        let r = rows.len();
        Self::from_fn(r, C, |i, j| rows[i][j])
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        Self::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 })
    }

    /// Matrix unit `E_ij` of the given shape.
    pub fn unit(rows: usize, cols: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        m[(i, j)] = 1.0;
        m
    }

    /// Outer product `x yᵀ`.
    pub fn outer(x: &DenseVector, y: &DenseVector) -> Self {
        counters::flops((x.len() * y.len()) as u64);
        Self::from_fn(x.len(), y.len(), |i, j| x[i] * y[j])
    }

    pub fn from_columns(cols: &[DenseVector]) -> Result<Self> {
        let Some(first) = cols.first() else {
            return Ok(Self::zeros(0, 0));
        };
        let rows = first.len();
        if cols.iter().any(|c| c.len() != rows) {
            return shape_err("columns of unequal length");
        }
        let data = cols.iter().flat_map(|c| c.iter().copied()).collect();
        Ok(DenseMatrix {
            rows,
            cols: cols.len(),
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Column-major storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> DenseVector {
        DenseVector::from_vec(self.data[j * self.rows..(j + 1) * self.rows].to_vec())
    }

    pub fn row(&self, i: usize) -> DenseVector {
        DenseVector::from_fn(self.cols, |j| self[(i, j)])
    }

    pub fn set_column(&mut self, j: usize, v: &DenseVector) {
        assert_eq!(v.len(), self.rows, "set_column: length mismatch");
        self.data[j * self.rows..(j + 1) * self.rows].copy_from_slice(v.as_slice());
    }

    pub fn transpose(&self) -> DenseMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        assert!(self.is_square(), "trace of non-square matrix");
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn diagonal(&self) -> DenseVector {
        DenseVector::from_fn(self.rows.min(self.cols), |i| self[(i, i)])
    }

    /// Frobenius inner product `tr(selfᵀ other)`.
    pub fn frobenius_dot(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "frobenius_dot: shape mismatch");
        counters::flops(2 * self.data.len() as u64);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, alpha: f64) -> DenseMatrix {
        counters::flops(self.data.len() as u64);
        self.map(|v| alpha * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + alpha·other`.
    pub fn axpy(&self, alpha: f64, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.shape(), other.shape(), "axpy: shape mismatch");
        counters::flops(2 * self.data.len() as u64);
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect(),
        }
    }

    /// `(A + Aᵀ)/2`.
    pub fn symmetric_part(&self) -> DenseMatrix {
        assert!(self.is_square(), "symmetric_part of non-square matrix");
        Self::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    /// True when `|a_ij - a_ji| <= rel_tol·‖A‖_F` for all pairs.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let tol = rel_tol * self.frobenius_norm();
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Matrix-vector product; panics on a length mismatch.
    pub fn matvec(&self, x: &DenseVector) -> DenseVector {
        assert_eq!(self.cols, x.len(), "matvec: dimension mismatch");
        counters::flops(2 * (self.rows * self.cols) as u64);
        let mut out = vec![0.0; self.rows];
        for j in 0..self.cols {
            let xj = x[j];
            let col = &self.data[j * self.rows..(j + 1) * self.rows];
            for (o, a) in out.iter_mut().zip(col) {
                *o += a * xj;
            }
        }
        DenseVector::from_vec(out)
    }

    /// `selfᵀ x` without materializing the transpose.
    pub fn matvec_transpose(&self, x: &DenseVector) -> DenseVector {
        assert_eq!(self.rows, x.len(), "matvec_transpose: dimension mismatch");
        counters::flops(2 * (self.rows * self.cols) as u64);
        DenseVector::from_fn(self.cols, |j| {
            let col = &self.data[j * self.rows..(j + 1) * self.rows];
            col.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<f64> = (0..self.cols).map(|j| self[(i, j)]).collect();
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

/// Checked matrix product.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return shape_err(format!("matmul {}x{} by {}x{}", a.rows, a.cols, b.rows, b.cols));
    }
    let (m, p, q) = (a.rows, a.cols, b.cols);
    counters::flops(2 * (m * p * q) as u64);
    let mut out = vec![0.0; m * q];
    for j in 0..q {
        let oc = &mut out[j * m..(j + 1) * m];
        for k in 0..p {
            let bkj = b.data[j * p + k];
            if bkj == 0.0 {
                continue;
            }
            let ac = &a.data[k * m..(k + 1) * m];
            for (o, v) in oc.iter_mut().zip(ac) {
                *o += v * bkj;
            }
        }
    }
    Ok(DenseMatrix {
        rows: m,
        cols: q,
        data: out,
    })
}

impl Mul for &DenseMatrix {
    type Output = DenseMatrix;
    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        matmul(self, rhs).expect("matrix product shape mismatch")
    }
}

impl Mul<&DenseVector> for &DenseMatrix {
    type Output = DenseVector;
    fn mul(self, rhs: &DenseVector) -> DenseVector {
        self.matvec(rhs)
    }
}

impl Add for &DenseMatrix {
    type Output = DenseMatrix;
    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &DenseMatrix {
    type Output = DenseMatrix;
    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.axpy(-1.0, rhs)
    }
}

impl Neg for &DenseMatrix {
    type Output = DenseMatrix;
    fn neg(self) -> DenseMatrix {
        self.map(|v| -v)
    }
}
