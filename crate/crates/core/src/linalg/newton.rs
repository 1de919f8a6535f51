use super::{lu_solve, DenseVector};
use crate::error::{shape_err, Error, Result};
use crate::forward::{jacobian_forward, Dual};

/// Result of a converged Newton iteration.
#[derive(Clone, Debug)]
pub struct NewtonRoot {
    pub root: DenseVector,
    /// Iterates, starting with `x0` and ending with `root`.
    pub history: Vec<DenseVector>,
}

/// Newton's method `x ← x − f'(x)⁻¹ f(x)` with the Jacobian from forward-mode AD.
///
/// Stops as soon as `‖f(x)‖∞ <= tol`.
pub fn newton_root<F>(f: F, x0: &DenseVector, tol: f64, max_iter: usize) -> Result<NewtonRoot>
where
    F: Fn(&[Dual]) -> Vec<Dual>,
{
    let n = x0.len();
    let eval = |x: &DenseVector| -> Result<DenseVector> {
        let args: Vec<Dual> = x.iter().map(|&v| Dual::constant(v)).collect();
        let out: Vec<f64> = f(&args).iter().map(|d| d.val).collect();
        if out.len() != n {
            return shape_err(format!(
                "newton_root needs a square system, got {} outputs for {n} inputs",
                out.len()
            ));
        }
        DenseVector::new(out)
    };
    let mut x = x0.clone();
    let mut history = vec![x.clone()];
    for _ in 0..max_iter {
        let fx = eval(&x)?;
        if fx.norm_inf() <= tol {
            return Ok(NewtonRoot { root: x, history });
        }
        let jac = jacobian_forward(&f, &x)?;
        let step = lu_solve(&jac, &fx)?;
        x = &x - &step;
        if !x.is_finite() {
            return Err(Error::Domain("newton iterate became non-finite".into()));
        }
        history.push(x.clone());
    }
    let fx = eval(&x)?;
    if fx.norm_inf() <= tol {
        return Ok(NewtonRoot { root: x, history });
    }
    Err(Error::Convergence {
        iterations: max_iter,
        last: Some(x.into_vec()),
    })
}
