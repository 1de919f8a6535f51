//! Second derivatives: Hessian–vector products by forward-over-reverse,
//! dense Hessians, quadratic-model checks and Newton steps.
//!
//! `hvp` seeds dual numbers `xᵢ + ε vᵢ` and records the program on a tape
//! of duals. The reverse sweep then carries `∇f` in the primal parts and
//! `(∇f)′[v] = Hv` in the ε parts.

use crate::error::{shape_err, Error, Result};
use crate::forward::Dual;
use crate::linalg::{jacobi_eigen, lu_solve, DenseMatrix, DenseVector};
use crate::program::ScalarProgram;
use crate::reverse::{self, Var};

/// Largest dimension for which [`hessian`] materializes `H`.
pub const HESSIAN_MAX_DIM: usize = 50;

/// Relative eigenvalue magnitude below which a stationary point is not classified.
pub const ZERO_EIGEN_TOL: f64 = 1e-8;

fn check_len(what: &str, v: &DenseVector, n: usize) -> Result<()> {
    if v.len() != n {
        return shape_err(format!("{what} has length {}, expected {n}", v.len()));
    }
    Ok(())
}

/// Gradient and `Hv` from a single dual-valued reverse pass.
pub fn gradient_and_hvp<P: ScalarProgram>(
    f: &P,
    x: &DenseVector,
    v: &DenseVector,
) -> Result<(DenseVector, DenseVector)> {
    f.check_dim(x)?;
    check_len("direction", v, x.len())?;
    let seeds: Vec<Dual> = x.iter().zip(v.iter()).map(|(&a, &b)| Dual::new(a, b)).collect();
    let g = reverse::gradient_generic(|vars: &[Var<'_, Dual>]| f.eval(vars), &seeds)?;
    let grad = DenseVector::new(g.iter().map(|d| d.val).collect())?;
    let hv = DenseVector::new(g.iter().map(|d| d.deriv).collect())?;
    Ok((grad, hv))
}

/// `H(x) v` without forming `H`.
pub fn hvp<P: ScalarProgram>(f: &P, x: &DenseVector, v: &DenseVector) -> Result<DenseVector> {
    Ok(gradient_and_hvp(f, x, v)?.1)
}

/// A symmetrized Hessian and the relative asymmetry of the raw columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Hessian {
    pub matrix: DenseMatrix,
    /// `‖H − Hᵀ‖_F / ‖H‖_F` before symmetrization (0 when `H = 0`).
    pub symmetry_defect: f64,
}

/// Dense Hessian from `n` products with unit vectors.
pub fn hessian<P: ScalarProgram>(f: &P, x: &DenseVector) -> Result<Hessian> {
    let n = f.dim();
    if n > HESSIAN_MAX_DIM {
        return Err(Error::Size(format!(
            "dense Hessian limited to n <= {HESSIAN_MAX_DIM}, got {n}"
        )));
    }
    f.check_dim(x)?;
    let cols: Result<Vec<DenseVector>> = (0..n).map(|j| hvp(f, x, &DenseVector::unit(n, j))).collect();
    let raw = if n == 0 {
        DenseMatrix::zeros(0, 0)
    } else {
        DenseMatrix::from_columns(&cols?)?
    };
    let norm = raw.frobenius_norm();
    let defect = if norm == 0.0 {
        0.0
    } else {
        (&raw - &raw.transpose()).frobenius_norm() / norm
    };
    Ok(Hessian {
        matrix: raw.symmetric_part(),
        symmetry_defect: defect,
    })
}

/// `|[f(x+h dx+h dx′) + f(x) − f(x+h dx) − f(x+h dx′)]/h² − dxᵀH dx′|`.
///
/// Every sum is formed so that swapping `dx` and `dx′` gives a bit-identical result.
pub fn bilinear_identity_check<P: ScalarProgram>(
    f: &P,
    x: &DenseVector,
    dx: &DenseVector,
    dx2: &DenseVector,
    h: f64,
) -> Result<f64> {
    f.check_dim(x)?;
    check_len("dx", dx, x.len())?;
    check_len("dx2", dx2, x.len())?;
    let both = f.value(&x.axpy(h, &(dx + dx2)))?;
    let base = f.value(x)?;
    let one = f.value(&x.axpy(h, dx))?;
    let two = f.value(&x.axpy(h, dx2))?;
    let second = ((both + base) - (one + two)) / (h * h);
    let bilinear = 0.5 * (dx.dot(&hvp(f, x, dx2)?) + dx2.dot(&hvp(f, x, dx)?));
    Ok((second - bilinear).abs())
}

/// One row of a quadratic-model table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelRow {
    pub direction: usize,
    pub scale: f64,
    /// `|f(x+sδ) − f(x) − s∇f·δ − ½s²δᵀHδ| / s²`.
    pub remainder_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticModelReport {
    pub rows: Vec<ModelRow>,
}

impl QuadraticModelReport {
    /// True when, per direction, the ratio falls as the scale falls (or is
    /// already at roundoff level, below `floor`).
    pub fn decreasing(&self, floor: f64) -> bool {
        let mut by_dir: Vec<Vec<ModelRow>> = Vec::new();
        for r in &self.rows {
            if by_dir.len() <= r.direction {
                by_dir.resize(r.direction + 1, Vec::new());
            }
            by_dir[r.direction].push(*r);
        }
        by_dir.iter_mut().all(|rows| {
            rows.sort_by(|a, b| b.scale.total_cmp(&a.scale));
            rows.windows(2)
                .all(|w| w[1].remainder_ratio <= w[0].remainder_ratio || w[1].remainder_ratio <= floor)
        })
    }
}

/// Tabulates the second-order Taylor remainder along each direction.
pub fn quadratic_model_check<P: ScalarProgram>(
    f: &P,
    x: &DenseVector,
    directions: &[DenseVector],
    scales: &[f64],
) -> Result<QuadraticModelReport> {
    let f0 = f.value(x)?;
    let mut rows = Vec::with_capacity(directions.len() * scales.len());
    for (d, dir) in directions.iter().enumerate() {
        let (g, hd) = gradient_and_hvp(f, x, dir)?;
        let slope = g.dot(dir);
        let curv = dir.dot(&hd);
        for &s in scales {
            let model = f0 + s * slope + 0.5 * s * s * curv;
            let actual = f.value(&x.axpy(s, dir))?;
            rows.push(ModelRow {
                direction: d,
                scale: s,
                remainder_ratio: (actual - model).abs() / (s * s),
            });
        }
    }
    Ok(QuadraticModelReport { rows })
}

/// Kind of stationary point suggested by the Hessian's eigenvalue signs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Minimum,
    Maximum,
    Saddle,
    Indeterminate,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::Minimum => "minimum",
            Classification::Maximum => "maximum",
            Classification::Saddle => "saddle",
            Classification::Indeterminate => "indeterminate",
        }
    }
}

/// Classifies by eigenvalue signs; any `|λ| < 10⁻⁸‖H‖_F` makes it indeterminate.
pub fn classify(h: &DenseMatrix) -> Result<(Classification, DenseVector)> {
    let eig = jacobi_eigen(&h.symmetric_part())?;
    let tol = ZERO_EIGEN_TOL * h.frobenius_norm();
    let lam = eig.lambda;
    let class = if lam.is_empty() || lam.iter().any(|l| l.abs() < tol) {
        Classification::Indeterminate
    } else if lam.iter().all(|&l| l > 0.0) {
        Classification::Minimum
    } else if lam.iter().all(|&l| l < 0.0) {
        Classification::Maximum
    } else {
        Classification::Saddle
    };
    Ok((class, lam))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonStep {
    pub step: DenseVector,
    pub gradient: DenseVector,
    pub hessian: DenseMatrix,
    pub eigenvalues: DenseVector,
    pub classification: Classification,
}

/// `δx = −H⁻¹∇f` together with the classification of `H`.
pub fn newton_min_step<P: ScalarProgram>(f: &P, x: &DenseVector) -> Result<NewtonStep> {
    let h = hessian(f, x)?.matrix;
    let g = f.gradient_reverse(x)?;
    let step = lu_solve(&h, &g)?.scale(-1.0);
    let (classification, eigenvalues) = classify(&h)?;
    Ok(NewtonStep {
        step,
        gradient: g,
        hessian: h,
        eigenvalues,
        classification,
    })
}

/// `∇h` for `h(x) = g(∇f(x))`: two reverse passes for `∇f(x)` and
/// `∇g(z)`, then one forward-over-reverse pass `H_f(x) ∇g(z)`.
pub fn grad_of_grad_function<F: ScalarProgram, G: ScalarProgram>(f: &F, g: &G, x: &DenseVector) -> Result<DenseVector> {
    let z = f.gradient_reverse(x)?;
    let w = g.gradient_reverse(&z)?;
    hvp(f, x, &w)
}

/// `h(x) = g(∇f(x))`, for checking [`grad_of_grad_function`].
pub fn grad_composite_value<F: ScalarProgram, G: ScalarProgram>(f: &F, g: &G, x: &DenseVector) -> Result<f64> {
    g.value(&f.gradient_reverse(x)?)
}
