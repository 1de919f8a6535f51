//! Vectorization, Kronecker products and vectorized Jacobians.
//!
//! `vec` stacks columns left to right, which for the column-major
//! [`DenseMatrix`] is its storage order. The central identity is
//! `(A⊗B) vec C = vec(BCAᵀ)`.

use crate::counters;
use crate::error::{shape_err, Error, Result};
use crate::linalg::{det, jacobi_eigen, lu_inverse, matmul, DenseMatrix, DenseVector, Lu};
use crate::random::Rng;

/// Minimum eigenvalue gap accepted by the matrix-function routines.
pub const EIG_GAP_TOL: f64 = 1e-8;

/// A vectorized matrix that remembers its source shape.
#[derive(Clone, Debug, PartialEq)]
pub struct VecView {
    pub data: DenseVector,
    pub rows: usize,
    pub cols: usize,
}

impl VecView {
    pub fn unvec(&self) -> DenseMatrix {
        DenseMatrix::new(self.rows, self.cols, self.data.as_slice().to_vec())
            .expect("VecView holds finite data of matching length")
    }
}

pub fn vec(a: &DenseMatrix) -> VecView {
    VecView {
        data: DenseVector::from_vec(a.as_slice().to_vec()),
        rows: a.rows(),
        cols: a.cols(),
    }
}

pub fn unvec(v: &DenseVector, m: usize, n: usize) -> Result<DenseMatrix> {
    if v.len() != m * n {
        return shape_err(format!("cannot unvec {} entries into {m}x{n}", v.len()));
    }
    DenseMatrix::new(m, n, v.as_slice().to_vec())
}

/// `A⊗B`: block `(i, j)` is `a_ij B`.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (m, n) = a.shape();
    let (p, q) = b.shape();
    counters::flops((m * n * p * q) as u64);
    DenseMatrix::from_fn(m * p, n * q, |r, c| a[(r / p, c / q)] * b[(r % p, c % q)])
}

/// The permutation `K` with `K vec(A) = vec(Aᵀ)` for `A` of shape m×n.
pub fn commutation_matrix(m: usize, n: usize) -> DenseMatrix {
    let mut data = vec![0.0; m * m * n * n];
    for i in 0..m {
        for j in 0..n {
            // A_ij sits at i + j·m in vec A and at j + i·n in vec Aᵀ.
            let row = j + i * n;
            let col = i + j * m;
            data[row + col * m * n] = 1.0;
        }
    }
    DenseMatrix::new(m * n, m * n, data).expect("finite permutation")
}

fn check_triple(a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix) -> Result<()> {
    if c.rows() != b.cols() || c.cols() != a.cols() {
        return shape_err(format!(
            "A {:?}, B {:?} need C of shape ({}, {}), got {:?}",
            a.shape(),
            b.shape(),
            b.cols(),
            a.cols(),
            c.shape()
        ));
    }
    Ok(())
}

/// `(A⊗B) vec C` by materializing the Kronecker product: Θ(m⁴) for m×m inputs.
pub fn kron_apply_materialized(a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix) -> Result<DenseVector> {
    check_triple(a, b, c)?;
    Ok(kron(a, b).matvec(&vec(c).data))
}

/// `vec(BCAᵀ)` by two matrix products: Θ(m³) for m×m inputs.
pub fn kron_apply_direct(a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix) -> Result<DenseVector> {
    check_triple(a, b, c)?;
    Ok(vec(&matmul(&matmul(b, c)?, &a.transpose())?).data)
}

/// `‖(A⊗B)vec C − vec(BCAᵀ)‖ / ‖vec(BCAᵀ)‖` (absolute when the right side is 0).
pub fn kron_vec_identity_check(a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix) -> Result<f64> {
    let lhs = kron_apply_materialized(a, b, c)?;
    let rhs = kron_apply_direct(a, b, c)?;
    let den = rhs.norm();
    let diff = (&lhs - &rhs).norm();
    Ok(if den > 0.0 { diff / den } else { diff })
}

fn require_square(a: &DenseMatrix, what: &str) -> Result<()> {
    if !a.is_square() {
        return shape_err(format!("{what}: need a square matrix, got {}x{}", a.rows(), a.cols()));
    }
    Ok(())
}

/// Jacobian of `vec A ↦ vec A²`: `I⊗A + Aᵀ⊗I`.
pub fn jac_square_vec(a: &DenseMatrix) -> Result<DenseMatrix> {
    require_square(a, "jac_square_vec")?;
    let i = DenseMatrix::identity(a.rows());
    Ok(&kron(&i, a) + &kron(&a.transpose(), &i))
}

/// Jacobian of `vec A ↦ vec A³`: `(A²)ᵀ⊗I + Aᵀ⊗A + I⊗A²`.
pub fn jac_cube_vec(a: &DenseMatrix) -> Result<DenseMatrix> {
    require_square(a, "jac_cube_vec")?;
    let i = DenseMatrix::identity(a.rows());
    let a2 = matmul(a, a)?;
    Ok(&(&kron(&a2.transpose(), &i) + &kron(&a.transpose(), a)) + &kron(&i, &a2))
}

/// Jacobian of `vec A ↦ vec A⁻¹`: `−(A⁻ᵀ⊗A⁻¹)`.
pub fn jac_inverse_vec(a: &DenseMatrix) -> Result<DenseMatrix> {
    require_square(a, "jac_inverse_vec")?;
    let inv = Lu::factor(a)?.inverse()?;
    Ok(kron(&inv.transpose(), &inv).scale(-1.0))
}

/// A scalar function together with its derivative, applied spectrally.
pub trait SpectralFn {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
}

/// The spectral functions used by the Jacobian-determinant experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spectral {
    Identity,
    Square,
    Exp,
    Sin,
}

impl Spectral {
    pub const ALL: [Spectral; 4] = [Spectral::Identity, Spectral::Square, Spectral::Exp, Spectral::Sin];

    pub fn name(self) -> &'static str {
        match self {
            Spectral::Identity => "identity",
            Spectral::Square => "square",
            Spectral::Exp => "exp",
            Spectral::Sin => "sin",
        }
    }
}

impl std::str::FromStr for Spectral {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Spectral::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown spectral function '{s}'")))
    }
}

impl SpectralFn for Spectral {
    fn value(&self, x: f64) -> f64 {
        match self {
            Spectral::Identity => x,
            Spectral::Square => x * x,
            Spectral::Exp => x.exp(),
            Spectral::Sin => x.sin(),
        }
    }
    fn derivative(&self, x: f64) -> f64 {
        match self {
            Spectral::Identity => 1.0,
            Spectral::Square => 2.0 * x,
            Spectral::Exp => x.exp(),
            Spectral::Sin => x.cos(),
        }
    }
}

/// `Mᵢⱼ = (i − j)²`.
pub fn squared_distance_matrix(n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, n, |i, j| (i as f64 - j as f64).powi(2))
}

/// `f(S) = Q f(Λ) Qᵀ` for symmetric `S`.
pub fn matrix_function(f: &dyn SpectralFn, s: &DenseMatrix) -> Result<DenseMatrix> {
    let e = jacobi_eigen(s)?;
    let n = e.n();
    let scaled = DenseMatrix::from_fn(n, n, |i, j| e.q[(i, j)] * f.value(e.lambda[j]));
    matmul(&scaled, &e.q.transpose())
}

fn min_gap(lambda: &[f64]) -> f64 {
    let mut sorted = lambda.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Refines an approximate simple real eigenvalue of a general matrix by
/// Newton's method on `p(λ) = det(λI − A)`, using `p'/p = tr((λI − A)⁻¹)`.
fn refine_eigenvalue(a: &DenseMatrix, guess: f64) -> Result<f64> {
    let n = a.rows();
    let mut lam = guess;
    for _ in 0..50 {
        let shifted = DenseMatrix::identity(n).scale(lam).axpy(-1.0, a);
        let lu = match Lu::factor(&shifted) {
            Ok(lu) => lu,
            // exactly on the root
            Err(Error::Singular { .. }) => return Ok(lam),
            Err(e) => return Err(e),
        };
        let tr = lu.solve_matrix(&DenseMatrix::identity(n))?.trace();
        let step = 1.0 / tr;
        lam -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + lam.abs()) {
            return Ok(lam);
        }
    }
    Err(Error::Convergence {
        iterations: 50,
        last: Some(vec![lam]),
    })
}

/// `f(A)` for a general matrix with simple real spectrum near that of its
/// symmetric part, by Sylvester's formula
/// `f(A) = Σᵢ f(λᵢ) Π_{j≠i} (A − λⱼI)/(λᵢ − λⱼ)`.
///
/// Eigenvalues are seeded from the symmetric part and refined by Newton
/// iteration on the characteristic polynomial.
pub fn matrix_function_general(f: &dyn SpectralFn, a: &DenseMatrix) -> Result<DenseMatrix> {
    require_square(a, "matrix_function_general")?;
    let n = a.rows();
    let seeds = jacobi_eigen(&a.symmetric_part())?.lambda;
    let lambda: Vec<f64> = seeds.iter().map(|&g| refine_eigenvalue(a, g)).collect::<Result<_>>()?;
    let gap = min_gap(&lambda);
    let scale = 1.0 + a.frobenius_norm();
    if gap <= EIG_GAP_TOL * scale {
        return Err(Error::Degenerate {
            gap,
            threshold: EIG_GAP_TOL * scale,
        });
    }
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let mut term = DenseMatrix::identity(n);
        for j in 0..n {
            if j != i {
                let factor = a
                    .axpy(-lambda[j], &DenseMatrix::identity(n))
                    .scale(1.0 / (lambda[i] - lambda[j]));
                term = matmul(&term, &factor)?;
            }
        }
        out = out.axpy(f.value(lambda[i]), &term);
    }
    Ok(out)
}

/// The n²×n² Jacobian of `vec S ↦ vec f(S)` by central differences, with
/// every entry of `S` perturbed independently and `f` evaluated on the
/// general perturbed matrix.
pub fn jacobian_matrix_function(f: &dyn SpectralFn, s: &DenseMatrix) -> Result<DenseMatrix> {
    let e = jacobi_eigen(s)?;
    let gap = e.min_gap();
    if gap <= EIG_GAP_TOL {
        return Err(Error::Degenerate {
            gap,
            threshold: EIG_GAP_TOL,
        });
    }
    let n = s.rows();
    let h = f64::EPSILON.sqrt() * (1.0 + s.frobenius_norm());
    let mut cols = Vec::with_capacity(n * n);
    for k in 0..n * n {
        let (i, j) = (k % n, k / n);
        let du = DenseMatrix::unit(n, n, i, j);
        let plus = matrix_function_general(f, &s.axpy(h, &du))?;
        let minus = matrix_function_general(f, &s.axpy(-h, &du))?;
        cols.push(vec(&(&plus - &minus).scale(0.5 / h)).data);
    }
    DenseMatrix::from_columns(&cols)
}

/// `Π_{i<j} |f(λᵢ) − f(λⱼ)|² / |λᵢ − λⱼ|² · Πᵢ f'(λᵢ)`.
pub fn theoretical_jacdet(f: &dyn SpectralFn, lambda: &DenseVector) -> Result<f64> {
    let l = lambda.as_slice();
    let gap = min_gap(l);
    if gap <= EIG_GAP_TOL {
        return Err(Error::Degenerate {
            gap,
            threshold: EIG_GAP_TOL,
        });
    }
    let mut out = 1.0;
    for i in 0..l.len() {
        out *= f.derivative(l[i]);
        for j in i + 1..l.len() {
            let q = (f.value(l[i]) - f.value(l[j])) / (l[i] - l[j]);
            out *= q * q;
        }
    }
    Ok(out)
}

/// Maximum relative residual of one identity over the trials.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityResidual {
    pub name: &'static str,
    pub max_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KronIdentityReport {
    pub trials: usize,
    pub entries: Vec<IdentityResidual>,
}

impl KronIdentityReport {
    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|e| e.max_residual).fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.worst() <= tol
    }
}

fn mrel(x: &DenseMatrix, y: &DenseMatrix) -> f64 {
    (x - y).frobenius_norm() / y.frobenius_norm().max(f64::MIN_POSITIVE)
}

fn srel(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs().max(f64::MIN_POSITIVE)
}

/// The seven basic Kronecker identities on random A (n×n) and B (m×m),
/// n, m ≤ 4: transpose, mixed product, inverse, orthogonality,
/// determinant, trace and the eigenpair `(A⊗B)(u⊗v) = λμ (u⊗v)`.
pub fn kron_identity_suite(rng: &mut Rng, trials: usize) -> Result<KronIdentityReport> {
    const NAMES: [&str; 7] = [
        "transpose",
        "mixed_product",
        "inverse",
        "orthogonal",
        "determinant",
        "trace",
        "eigenpair",
    ];
    let mut worst = [0.0f64; 7];
    for _ in 0..trials {
        let n = 1 + rng.index(4);
        let m = 1 + rng.index(4);
        let a = rng.well_conditioned(n);
        let b = rng.well_conditioned(m);
        let c = rng.gaussian_matrix(n, n);
        let d = rng.gaussian_matrix(m, m);
        let ab = kron(&a, &b);

        let r = [
            mrel(&ab.transpose(), &kron(&a.transpose(), &b.transpose())),
            mrel(&matmul(&ab, &kron(&c, &d))?, &kron(&matmul(&a, &c)?, &matmul(&b, &d)?)),
            mrel(&lu_inverse(&ab)?, &kron(&lu_inverse(&a)?, &lu_inverse(&b)?)),
            {
                let qa = jacobi_eigen(&rng.symmetric_matrix(n))?.q;
                let qb = jacobi_eigen(&rng.symmetric_matrix(m))?.q;
                let k = kron(&qa, &qb);
                (&matmul(&k.transpose(), &k)? - &DenseMatrix::identity(n * m)).frobenius_norm()
            },
            srel(det(&ab)?, det(&a)?.powi(m as i32) * det(&b)?.powi(n as i32)),
            srel(ab.trace(), a.trace() * b.trace()),
            {
                let sa = rng.symmetric_matrix(n);
                let sb = rng.symmetric_matrix(m);
                let (ea, eb) = (jacobi_eigen(&sa)?, jacobi_eigen(&sb)?);
                let k = kron(&sa, &sb);
                let scale = k.frobenius_norm().max(f64::MIN_POSITIVE);
                let mut r = 0.0f64;
                for i in 0..n {
                    for j in 0..m {
                        let u = DenseMatrix::from_columns(&[ea.vector(i)])?;
                        let v = DenseMatrix::from_columns(&[eb.vector(j)])?;
                        let uv = kron(&u, &v).column(0);
                        let lm = ea.lambda[i] * eb.lambda[j];
                        r = r.max((&k.matvec(&uv) - &uv.scale(lm)).norm() / scale);
                    }
                }
                r
            },
        ];
        for (w, v) in worst.iter_mut().zip(r) {
            *w = w.max(v);
        }
    }
    Ok(KronIdentityReport {
        trials,
        entries: NAMES
            .iter()
            .zip(worst)
            .map(|(&name, max_residual)| IdentityResidual { name, max_residual })
            .collect(),
    })
}
