//! Adjoint gradients of scalar functions of linear-system solutions.
//!
//! For `g(p) = f(x)` with `A(p)x = b`, one extra transposed solve
//! `Aᵀv = ∇ₓf` gives every partial as `∂g/∂p_k = −vᵀ(∂A/∂p_k)x`.

use crate::counters;
use crate::error::{shape_err, Error, Result};
use crate::linalg::{thomas_solve, DenseMatrix, DenseVector, Lu, TridiagSym};
use crate::random::Rng;

/// `g(p) = (cᵀA(p)⁻¹b)²` with `A(p)` symmetric tridiagonal: constant
/// diagonal `a`, off-diagonal equal to the parameters `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagProblem {
    pub a: DenseVector,
    pub p: DenseVector,
    pub b: DenseVector,
    pub c: DenseVector,
}

impl TridiagProblem {
    pub fn new(a: DenseVector, p: DenseVector, b: DenseVector, c: DenseVector) -> Result<Self> {
        let n = a.len();
        if n == 0 || p.len() + 1 != n || b.len() != n || c.len() != n {
            return shape_err(format!(
                "tridiagonal problem: a {}, p {}, b {}, c {}",
                n,
                p.len(),
                b.len(),
                c.len()
            ));
        }
        Ok(TridiagProblem { a, p, b, c })
    }

    /// A diagonally dominant random instance of size `n`.
    pub fn random(rng: &mut Rng, n: usize) -> Result<Self> {
        let a = DenseVector::from_fn(n, |_| {
            let s = if rng.uniform(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
            s * rng.uniform(2.5, 4.0)
        });
        let p = rng.uniform_vector(n.saturating_sub(1), -1.0, 1.0);
        let b = rng.gaussian_vector(n);
        let c = rng.gaussian_vector(n);
        TridiagProblem::new(a, p, b, c)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn matrix(&self) -> Result<TridiagSym> {
        TridiagSym::new(self.a.clone(), self.p.clone())
    }

    pub fn with_params(&self, p: DenseVector) -> Result<Self> {
        TridiagProblem::new(self.a.clone(), p, self.b.clone(), self.c.clone())
    }
}

/// `x = A(p)⁻¹b`, then `(cᵀx)²`. Θ(n).
pub fn g_eval(prob: &TridiagProblem) -> Result<f64> {
    let x = thomas_solve(&prob.matrix()?, &prob.b)?;
    let cx = prob.c.dot(&x);
    counters::flops(2 * prob.n() as u64 + 1);
    Ok(cx * cx)
}

/// Value and gradient from exactly two tridiagonal solves:
/// `x = A⁻¹b`, `v = A⁻¹[−2(cᵀx)c]` (using `Aᵀ = A`), then
/// `∂g/∂p_k = v_k x_{k+1} + v_{k+1} x_k`.
pub fn value_and_grad_g(prob: &TridiagProblem) -> Result<(f64, DenseVector)> {
    let t = prob.matrix()?;
    let n = prob.n();
    let x = thomas_solve(&t, &prob.b)?;
    let cx = prob.c.dot(&x);
    let v = thomas_solve(&t, &prob.c.scale(-2.0 * cx))?;
    let grad = DenseVector::from_fn(n - 1, |k| v[k] * x[k + 1] + v[k + 1] * x[k]);
    counters::flops(3 * n as u64 + 4 * (n as u64 - 1));
    Ok((cx * cx, grad))
}

pub fn grad_g(prob: &TridiagProblem) -> Result<DenseVector> {
    Ok(value_and_grad_g(prob)?.1)
}

/// Nonzero positions of `∂A/∂p_k` (0-based `k < n − 1`), each with weight 1.
pub fn partial_da(n: usize, k: usize) -> Result<[(usize, usize); 2]> {
    if n < 2 || k > n - 2 {
        return Err(Error::Range {
            index: k,
            max: n.saturating_sub(2),
        });
    }
    Ok([(k, k + 1), (k + 1, k)])
}

/// `vᵀ(∂A/∂p_k)x` via the sparse pattern.
pub fn contract_partial(v: &DenseVector, x: &DenseVector, k: usize) -> Result<f64> {
    let pairs = partial_da(v.len(), k)?;
    Ok(pairs.iter().map(|&(i, j)| v[i] * x[j]).sum())
}

/// `g(p + δp) − g(p)` against `∇g·δp`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionalCheck {
    pub predicted: f64,
    pub actual: f64,
    pub rel_err: f64,
}

pub fn directional_check(prob: &TridiagProblem, dp: &DenseVector) -> Result<DirectionalCheck> {
    if dp.len() != prob.p.len() {
        return shape_err("directional_check: δp length must equal p length");
    }
    let (g0, grad) = value_and_grad_g(prob)?;
    let g1 = g_eval(&prob.with_params(&prob.p + dp)?)?;
    let predicted = grad.dot(dp);
    let actual = g1 - g0;
    let rel_err = (predicted - actual).abs() / actual.abs().max(f64::MIN_POSITIVE);
    Ok(DirectionalCheck {
        predicted,
        actual,
        rel_err,
    })
}

/// A small parameter perturbation, `δp_k = U[−1, 1]·10⁻⁶·(1 + |p_k|)`.
pub fn random_dp(rng: &mut Rng, p: &DenseVector) -> DenseVector {
    DenseVector::from_fn(p.len(), |k| rng.uniform(-1.0, 1.0) * 1e-6 * (1.0 + p[k].abs()))
}

/// Solution, adjoint and gradient of a general dense adjoint computation.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearAdjoint {
    pub x: DenseVector,
    pub v: DenseVector,
    pub grad: DenseVector,
}

fn check_family(a: &DenseMatrix, da_list: &[DenseMatrix], b: &DenseVector) -> Result<()> {
    if !a.is_square() || a.rows() != b.len() {
        return shape_err("linear adjoint: A must be square and match b");
    }
    if let Some(d) = da_list.iter().find(|d| d.shape() != a.shape()) {
        return shape_err(format!(
            "parameter derivative of shape {:?}, A is {:?}",
            d.shape(),
            a.shape()
        ));
    }
    Ok(())
}

/// `g(p) = f(x(p))` with `A(p)x = b`: one solve for `x`, one transposed
/// solve `Aᵀv = ∇ₓf(x)`, then `∂g/∂p_k = −vᵀ(∂A/∂p_k)x` for each of the
/// supplied parameter derivatives.
pub fn dense_linear_adjoint<G>(
    a: &DenseMatrix,
    da_list: &[DenseMatrix],
    b: &DenseVector,
    fgrad: G,
) -> Result<LinearAdjoint>
where
    G: Fn(&DenseVector) -> Result<DenseVector>,
{
    check_family(a, da_list, b)?;
    let lu = Lu::factor(a)?;
    let x = lu.solve(b)?;
    let gx = fgrad(&x)?;
    if gx.len() != x.len() {
        return shape_err("∇ₓf must have the length of x");
    }
    let v = lu.solve_transpose(&gx)?;
    let grad = DenseVector::from_fn(da_list.len(), |k| -v.dot(&da_list[k].matvec(&x)));
    Ok(LinearAdjoint { x, v, grad })
}

/// The same gradient in forward mode: one solve `A⁻¹(∂A/∂p_k)x` per
/// parameter, then `−∇ₓf · A⁻¹(∂A/∂p_k)x`.
pub fn dense_linear_forward<G>(
    a: &DenseMatrix,
    da_list: &[DenseMatrix],
    b: &DenseVector,
    fgrad: G,
) -> Result<DenseVector>
where
    G: Fn(&DenseVector) -> Result<DenseVector>,
{
    check_family(a, da_list, b)?;
    let lu = Lu::factor(a)?;
    let x = lu.solve(b)?;
    let gx = fgrad(&x)?;
    let parts: Result<Vec<f64>> = da_list.iter().map(|d| Ok(-gx.dot(&lu.solve(&d.matvec(&x))?))).collect();
    DenseVector::new(parts?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lu_solve;

    fn v(xs: &[f64]) -> DenseVector {
        DenseVector::new(xs.to_vec()).unwrap()
    }

    fn hand_instance() -> TridiagProblem {
        TridiagProblem::new(v(&[2.0, 2.0]), v(&[1.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])).unwrap()
    }

    #[test]
    fn scalar_instance() {
        let p = TridiagProblem::new(v(&[2.0]), DenseVector::zeros(0), v(&[4.0]), v(&[1.0])).unwrap();
        assert_eq!(g_eval(&p).unwrap(), 4.0);
        assert!(grad_g(&p).unwrap().is_empty());
    }

    #[test]
    fn hand_instance_value_and_gradient() {
        let p = hand_instance();
        assert!((g_eval(&p).unwrap() - 1.0 / 9.0).abs() <= 1e-15);
        let g = grad_g(&p).unwrap();
        assert!((g[0] - 10.0 / 27.0).abs() <= 1e-12);
    }

    #[test]
    fn matches_dense_path() {
        let mut rng = Rng::seeded(1);
        let p = TridiagProblem::random(&mut rng, 50).unwrap();
        let x = lu_solve(&p.matrix().unwrap().densify(), &p.b).unwrap();
        let dense = p.c.dot(&x).powi(2);
        assert!((g_eval(&p).unwrap() - dense).abs() <= 1e-12 * dense);
    }

    #[test]
    fn exactly_two_solves_and_fd_agreement() {
        let mut rng = Rng::seeded(2);
        for n in [10, 100, 1000] {
            let p = TridiagProblem::random(&mut rng, n).unwrap();
            let (_, c) = counters::measure(|| grad_g(&p).unwrap());
            assert_eq!(c.tridiag_solves, 2);
            let dp = random_dp(&mut rng, &p.p);
            let chk = directional_check(&p, &dp).unwrap();
            assert!(chk.rel_err <= 1e-3, "n={n}: {chk:?}");
        }
    }

    #[test]
    fn linear_op_count() {
        let mut rng = Rng::seeded(3);
        let counts: Vec<f64> = (8..=11)
            .map(|k| {
                let p = TridiagProblem::random(&mut rng, 1 << k).unwrap();
                counters::measure(|| grad_g(&p).unwrap()).1.flops as f64
            })
            .collect();
        for w in counts.windows(2) {
            assert!((1.8..=2.3).contains(&(w[1] / w[0])));
        }
    }

    #[test]
    fn partial_pattern() {
        assert_eq!(partial_da(3, 0).unwrap(), [(0, 1), (1, 0)]);
        assert!(matches!(partial_da(3, 2), Err(Error::Range { .. })));
        let mut rng = Rng::seeded(4);
        let n = 6;
        let vv = rng.gaussian_vector(n);
        let xx = rng.gaussian_vector(n);
        for k in 0..n - 1 {
            let e = partial_da(n, k)
                .unwrap()
                .iter()
                .fold(DenseMatrix::zeros(n, n), |m, &(i, j)| {
                    &m + &DenseMatrix::unit(n, n, i, j)
                });
            let dense = vv.dot(&e.matvec(&xx));
            assert!((contract_partial(&vv, &xx, k).unwrap() - dense).abs() <= 1e-14);
        }
    }

    fn tridiag_family(p: &TridiagProblem) -> (DenseMatrix, Vec<DenseMatrix>) {
        let n = p.n();
        let a = p.matrix().unwrap().densify();
        let das = (0..n - 1)
            .map(|k| &DenseMatrix::unit(n, n, k, k + 1) + &DenseMatrix::unit(n, n, k + 1, k))
            .collect();
        (a, das)
    }

    #[test]
    fn dense_adjoint_reproduces_tridiagonal_gradient() {
        let mut rng = Rng::seeded(5);
        let p = TridiagProblem::random(&mut rng, 12).unwrap();
        let (a, das) = tridiag_family(&p);
        let c = p.c.clone();
        let fgrad = |x: &DenseVector| Ok(c.scale(2.0 * c.dot(x)));
        let (res, counts) = counters::measure(|| dense_linear_adjoint(&a, &das, &p.b, fgrad).unwrap());
        assert_eq!(counts.dense_solves, 2);
        let g = grad_g(&p).unwrap();
        assert!((&res.grad - &g).norm() <= 1e-12 * g.norm());
    }

    #[test]
    fn scaled_identity_closed_form() {
        // A(p) = pI, f(x) = x₁: g = b₁/p, g' = −b₁/p²
        let b = v(&[3.0, -1.0]);
        let pval = 1.7;
        let a = DenseMatrix::identity(2).scale(pval);
        let res = dense_linear_adjoint(&a, &[DenseMatrix::identity(2)], &b, |_| Ok(DenseVector::unit(2, 0))).unwrap();
        let exact = -b[0] / (pval * pval);
        assert!((res.grad[0] - exact).abs() <= 1e-10 * exact.abs());
    }

    #[test]
    fn dense_adjoint_fd_and_forward_agreement() {
        let mut rng = Rng::seeded(6);
        let (n, np) = (8, 6);
        let a0 = rng.well_conditioned(n);
        let das: Vec<_> = (0..np).map(|_| rng.gaussian_matrix(n, n)).collect();
        let b = rng.gaussian_vector(n);
        let w = rng.gaussian_vector(n);
        let f = |x: &DenseVector| x.dot(&w) + 0.5 * x.dot(x);
        let fgrad = |x: &DenseVector| Ok(&w + x);
        let res = dense_linear_adjoint(&a0, &das, &b, fgrad).unwrap();
        let fwd = dense_linear_forward(&a0, &das, &b, fgrad).unwrap();
        assert!((&res.grad - &fwd).norm() <= 1e-9 * fwd.norm());
        let assemble = |p: &[f64]| {
            let mut m = a0.clone();
            for (k, d) in das.iter().enumerate() {
                m = m.axpy(p[k], d);
            }
            m
        };
        let g = |p: &[f64]| f(&lu_solve(&assemble(p), &b).unwrap());
        let h = f64::EPSILON.sqrt();
        for k in 0..np {
            let mut hi = vec![0.0; np];
            let mut lo = vec![0.0; np];
            hi[k] = h;
            lo[k] = -h;
            let fd = (g(&hi) - g(&lo)) / (2.0 * h);
            assert!((fd - res.grad[k]).abs() <= 1e-5 * res.grad.norm());
        }
    }
}
