//! Python bindings. Matrices cross the boundary as lists of rows, vectors as
//! lists of floats.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use matcalc::adjoint_linear::{directional_check, random_dp, value_and_grad_g, TridiagProblem};
use matcalc::counters;
use matcalc::criteria::{self, Fault, SuiteOptions};
use matcalc::eigsens;
use matcalc::error::Error;
use matcalc::fdcheck;
use matcalc::forward::{self, Dual};
use matcalc::linalg::{self, jacobi_eigen, DenseMatrix, DenseVector};
use matcalc::matrixrules;
use matcalc::odesens::{self, ReferenceProblem};
use matcalc::program::SinPoly;
use matcalc::random::Rng;
use matcalc::second_order;

fn py_err(e: Error) -> PyErr {
    if e.is_numeric() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for Result<T, Error> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(DenseMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).into_vec()).collect()
}

fn vector(v: Vec<f64>) -> PyResult<DenseVector> {
    DenseVector::new(v).py()
}

/// Babylonian square-root iteration.
#[pyfunction]
fn babylonian(x: f64, n: usize) -> PyResult<f64> {
    forward::babylonian(x, n).py()
}

/// Value and derivative of the Babylonian iteration via dual numbers.
#[pyfunction]
fn babylonian_dual(x: f64, n: usize) -> PyResult<(f64, f64)> {
    let d = forward::babylonian(Dual::variable(x), n).py()?;
    Ok((d.val, d.deriv))
}

#[pyfunction]
fn det(a: Vec<Vec<f64>>) -> PyResult<f64> {
    linalg::det(&matrix(a)?).py()
}

/// Gradient of the determinant (the cofactor matrix).
#[pyfunction]
fn grad_det(a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&matrixrules::grad_det(&matrix(a)?).py()?))
}

/// Eigenvalues (ascending) and eigenvectors as columns of a symmetric matrix.
#[pyfunction]
fn eigh(s: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let e = jacobi_eigen(&matrix(s)?).py()?;
    Ok((e.lambda.into_vec(), rows(&e.q)))
}

/// First-order eigenvalue changes `qᵢᵀ dS qᵢ`.
#[pyfunction]
fn dlambda(s: Vec<Vec<f64>>, ds: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let e = jacobi_eigen(&matrix(s)?).py()?;
    Ok(eigsens::dlambda(&e, &matrix(ds)?).py()?.into_vec())
}

/// Hessian of `sin(x₁) + x₁²x₂³` assembled from Hessian-vector products.
#[pyfunction]
fn hessian_sinpoly(x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&second_order::hessian(&SinPoly, &vector(x)?).py()?.matrix))
}

/// Finite-difference and closed-form Jacobian determinants of matrix functions.
#[pyfunction]
fn jacdet(py: Python<'_>) -> PyResult<Vec<Bound<'_, PyDict>>> {
    criteria::jacdet_experiment()
        .py()?
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("function", r.function.name())?;
            d.set_item("fd", r.fd)?;
            d.set_item("formula", r.formula)?;
            d.set_item("rel_diff", r.rel_diff)?;
            d.set_item("reference", r.reference)?;
            Ok(d)
        })
        .collect()
}

/// Adjoint gradient of the random tridiagonal instance of size `n`.
#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn tridiag_gradient(py: Python<'_>, n: usize, seed: u64) -> PyResult<Bound<'_, PyDict>> {
    let mut rng = Rng::seeded(seed);
    let prob = TridiagProblem::random(&mut rng, n).py()?;
    let (r, c) = counters::measure(|| value_and_grad_g(&prob));
    let (g, grad) = r.py()?;
    let dp = random_dp(&mut rng, &prob.p);
    let check = directional_check(&prob, &dp).py()?;
    let d = PyDict::new(py);
    d.set_item("g", g)?;
    d.set_item("grad", grad.into_vec())?;
    d.set_item("fd_directional", check.actual)?;
    d.set_item("rel_err", check.rel_err)?;
    d.set_item("solve_count", c.tridiag_solves)?;
    Ok(d)
}

/// Forward, adjoint and central-difference gradients on the reference ODE.
#[pyfunction]
#[pyo3(signature = (steps = 2000))]
fn ode_gradients(py: Python<'_>, steps: usize) -> PyResult<Bound<'_, PyDict>> {
    let prob = ReferenceProblem::default();
    let p = ReferenceProblem::reference_params();
    let adj = odesens::adjoint_gradient(&prob, &p, steps).py()?;
    let d = PyDict::new(py);
    d.set_item("G", adj.value)?;
    d.set_item(
        "grad_forward",
        odesens::grad_G_forward(&prob, &p, steps).py()?.into_vec(),
    )?;
    d.set_item("grad_adjoint", adj.grad.into_vec())?;
    d.set_item("grad_fd", odesens::grad_G_fd(&prob, &p, steps).py()?.into_vec())?;
    Ok(d)
}

/// Rows `(scale, perturbation_norm, relative_error)` of the A² sweep.
#[pyfunction]
#[pyo3(signature = (seed = 0, n = 4))]
fn fd_sweep(seed: u64, n: usize) -> PyResult<Vec<(f64, f64, f64)>> {
    let rows = criteria::square_sweep(&mut Rng::seeded(seed), n, false).py()?;
    Ok(rows
        .iter()
        .map(|r| (r.scale, r.perturbation_norm, r.relative_error))
        .collect())
}

/// Runs every verification suite; returns `(suite, passed, summary)` triples.
#[pyfunction]
#[pyo3(signature = (seed = 0, fault = None))]
fn run_check(seed: u64, fault: Option<&str>) -> PyResult<Vec<(String, bool, String)>> {
    let fault = fault.map(|f| f.parse::<Fault>()).transpose().py()?;
    Ok(criteria::run_all(&SuiteOptions { seed, fault })
        .iter()
        .map(|r| (r.id.key().to_string(), r.passed(), r.summary_line()))
        .collect())
}

#[pymodule(name = "matcalc")]
pub fn matcalc_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("SWEEP_CSV_HEADER", fdcheck::SWEEP_CSV_HEADER)?;
    m.add_function(wrap_pyfunction!(babylonian, m)?)?;
    m.add_function(wrap_pyfunction!(babylonian_dual, m)?)?;
    m.add_function(wrap_pyfunction!(det, m)?)?;
    m.add_function(wrap_pyfunction!(grad_det, m)?)?;
    m.add_function(wrap_pyfunction!(eigh, m)?)?;
    m.add_function(wrap_pyfunction!(dlambda, m)?)?;
    m.add_function(wrap_pyfunction!(hessian_sinpoly, m)?)?;
    m.add_function(wrap_pyfunction!(jacdet, m)?)?;
    m.add_function(wrap_pyfunction!(tridiag_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(ode_gradients, m)?)?;
    m.add_function(wrap_pyfunction!(fd_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_check, m)?)?;
    Ok(())
}
