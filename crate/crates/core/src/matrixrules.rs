//! Analytic derivative rules for matrix functions.
//!
//! Each `d_*` operation returns the differential `f'(A)[dA]` for a supplied
//! perturbation; each `grad_*` operation returns the gradient under the
//! Frobenius inner product, so that `df = ⟨∇f, dA⟩_F`.

use crate::counters;
use crate::error::{shape_err, Error, Result};
use crate::linalg::{cofactor_matrix, jacobi_eigen, matmul, DenseMatrix, DenseVector, Lu};
use crate::program::TransformKind;

/// Below this size a singular matrix still gets a gradient of `det` from
/// explicit cofactors.
pub const COFACTOR_FALLBACK_MAX: usize = 4;

/// Eigenvalue proximity at which the characteristic-polynomial derivative
/// is refused.
pub const CHARPOLY_EIG_TOL: f64 = 1e-10;

fn require_square(a: &DenseMatrix, what: &str) -> Result<()> {
    if !a.is_square() {
        return shape_err(format!("{what}: need a square matrix, got {}x{}", a.rows(), a.cols()));
    }
    Ok(())
}

fn require_same_shape(a: &DenseMatrix, b: &DenseMatrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(format!("{what}: shapes {:?} and {:?} differ", a.shape(), b.shape()));
    }
    Ok(())
}

/// `d(A⁻¹) = −A⁻¹ dA A⁻¹`, by one solve against `dA` and one transposed
/// solve against the result.
pub fn d_inverse(a: &DenseMatrix, da: &DenseMatrix) -> Result<DenseMatrix> {
    require_square(a, "d_inverse")?;
    require_same_shape(a, da, "d_inverse")?;
    let lu = Lu::factor(a)?;
    let x = lu.solve_matrix(da)?;
    // X A⁻¹ = (A⁻ᵀ Xᵀ)ᵀ
    let y = lu.solve_transpose_matrix(&x.transpose())?;
    Ok(y.transpose().scale(-1.0))
}

/// `∇ det A = cofactor(A) = det(A) A⁻ᵀ`.
///
/// Singular inputs up to [`COFACTOR_FALLBACK_MAX`] fall back to explicit
/// cofactors; larger singular inputs are rejected.
pub fn grad_det(a: &DenseMatrix) -> Result<DenseMatrix> {
    require_square(a, "grad_det")?;
    let n = a.rows();
    match Lu::factor(a) {
        Ok(lu) => {
            let inv_t = lu.solve_transpose_matrix(&DenseMatrix::identity(n))?;
            Ok(inv_t.scale(lu.det()))
        }
        Err(Error::Singular { .. }) if n <= COFACTOR_FALLBACK_MAX => Ok(cofactor_matrix(a)),
        Err(e) => Err(e),
    }
}

/// `d(det A) = det(A) tr(A⁻¹ dA)`.
pub fn d_det(a: &DenseMatrix, da: &DenseMatrix) -> Result<f64> {
    require_square(a, "d_det")?;
    require_same_shape(a, da, "d_det")?;
    let lu = Lu::factor(a)?;
    Ok(lu.det() * lu.solve_matrix(da)?.trace())
}

/// `d(log det A) = tr(A⁻¹ dA)`, defined for `det A > 0`.
pub fn d_logdet(a: &DenseMatrix, da: &DenseMatrix) -> Result<f64> {
    require_square(a, "d_logdet")?;
    require_same_shape(a, da, "d_logdet")?;
    let lu = Lu::factor(a)?;
    let d = lu.det();
    if d <= 0.0 {
        return Err(Error::Domain(format!("log det of a matrix with det {d}")));
    }
    Ok(lu.solve_matrix(da)?.trace())
}

/// `p(x) = det(xI − A)`.
pub fn charpoly(a: &DenseMatrix, x: f64) -> Result<f64> {
    require_square(a, "charpoly")?;
    let b = shifted(a, x);
    crate::linalg::det(&b)
}

fn shifted(a: &DenseMatrix, x: f64) -> DenseMatrix {
    DenseMatrix::identity(a.rows()).scale(x).axpy(-1.0, a)
}

/// `p'(x) = det(xI − A) tr((xI − A)⁻¹)`.
pub fn d_charpoly(a: &DenseMatrix, x: f64) -> Result<f64> {
    require_square(a, "d_charpoly")?;
    let n = a.rows();
    if a.is_symmetric(1e-12) {
        let eig = jacobi_eigen(&a.symmetric_part())?;
        if let Some((i, lam)) = eig
            .lambda
            .iter()
            .enumerate()
            .find(|(_, l)| (x - **l).abs() <= CHARPOLY_EIG_TOL * (1.0 + l.abs()))
        {
            return Err(Error::Singular {
                pivot: i,
                magnitude: (x - lam).abs(),
            });
        }
    }
    let lu = Lu::factor(&shifted(a, x))?;
    let inv = lu.solve_matrix(&DenseMatrix::identity(n))?;
    Ok(lu.det() * inv.trace())
}

/// The symmetric bilinear form `f''(A)[dA, dA']` for `f = det`:
/// `det A [tr(A⁻¹dA') tr(A⁻¹dA) − tr(A⁻¹dA' A⁻¹dA)]`.
pub fn second_det(a: &DenseMatrix, da: &DenseMatrix, da2: &DenseMatrix) -> Result<f64> {
    require_square(a, "second_det")?;
    require_same_shape(a, da, "second_det")?;
    require_same_shape(a, da2, "second_det")?;
    let lu = Lu::factor(a)?;
    let x = lu.solve_matrix(da)?;
    let y = lu.solve_matrix(da2)?;
    // tr(YX) = Σ_ij Y_ij X_ji, symmetric in (X, Y) as evaluated
    let n = a.rows();
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            cross += 0.5 * (y[(i, j)] * x[(j, i)] + x[(i, j)] * y[(j, i)]);
        }
    }
    Ok(lu.det() * (x.trace() * y.trace() - cross))
}

/// `∇(xᵀAx) = (A + Aᵀ)x`.
pub fn grad_quadform(a: &DenseMatrix, x: &DenseVector) -> Result<DenseVector> {
    require_square(a, "grad_quadform")?;
    if a.cols() != x.len() {
        return shape_err(format!(
            "grad_quadform: {}x{} matrix, vector of {}",
            a.rows(),
            a.cols(),
            x.len()
        ));
    }
    Ok(&a.matvec(x) + &a.matvec_transpose(x))
}

/// `∇‖A‖_F = A/‖A‖_F`.
pub fn grad_frobenius(a: &DenseMatrix) -> Result<DenseMatrix> {
    let nrm = a.frobenius_norm();
    if nrm == 0.0 {
        return Err(Error::Domain("Frobenius norm is not differentiable at 0".into()));
    }
    Ok(a.scale(1.0 / nrm))
}

/// `∇_A (xᵀAy) = xyᵀ`.
pub fn grad_bilinear_xay(x: &DenseVector, y: &DenseVector) -> DenseMatrix {
    DenseMatrix::outer(x, y)
}

/// `d(Aᵏ) = Σ_{j<k} Aʲ dA A^{k−1−j}`.
pub fn d_matpow(a: &DenseMatrix, da: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    require_square(a, "d_matpow")?;
    require_same_shape(a, da, "d_matpow")?;
    if k < 1 {
        return Err(Error::Contract("d_matpow needs k >= 1".into()));
    }
    let n = a.rows();
    let mut powers = vec![DenseMatrix::identity(n)];
    for j in 1..k {
        powers.push(matmul(&powers[j - 1], a)?);
    }
    let mut acc = DenseMatrix::zeros(n, n);
    for j in 0..k {
        let term = matmul(&matmul(&powers[j], da)?, &powers[k - 1 - j])?;
        acc = acc.axpy(1.0, &term);
    }
    Ok(acc)
}

/// `d(Aᵀ) = (dA)ᵀ`.
pub fn d_transpose(da: &DenseMatrix) -> DenseMatrix {
    da.transpose()
}

/// `d(tr A) = tr(dA)`.
pub fn d_trace(da: &DenseMatrix) -> Result<f64> {
    require_square(da, "d_trace")?;
    Ok(da.trace())
}

/// `(A + yxᵀ)⁻¹ b` in Θ(n²) from a known `A⁻¹`:
/// `A⁻¹b − A⁻¹y (xᵀA⁻¹b)/(1 + xᵀA⁻¹y)`.
pub fn sherman_morrison_solve(
    a_inv: &DenseMatrix,
    y: &DenseVector,
    x: &DenseVector,
    b: &DenseVector,
) -> Result<DenseVector> {
    require_square(a_inv, "sherman_morrison_solve")?;
    let n = a_inv.rows();
    if y.len() != n || x.len() != n || b.len() != n {
        return shape_err("sherman_morrison_solve: vector lengths must match A");
    }
    let u = a_inv.matvec(b);
    let w = a_inv.matvec(y);
    let xw = x.dot(&w);
    let den = 1.0 + xw;
    if den.abs() <= 1e-12 * (1.0 + xw.abs()) {
        return Err(Error::Singular {
            pivot: 0,
            magnitude: den.abs(),
        });
    }
    counters::flops(6 * n as u64);
    Ok(u.axpy(-x.dot(&u) / den, &w))
}

/// Jacobian of `f(x) = (A + yxᵀ)⁻¹b`: the rank-1 matrix `−c f(x)ᵀ` with
/// `c = (A + yxᵀ)⁻¹y`. Θ(n²) overall.
pub fn jacobian_rank1_resolvent(
    a_inv: &DenseMatrix,
    y: &DenseVector,
    x: &DenseVector,
    b: &DenseVector,
) -> Result<DenseMatrix> {
    let f = sherman_morrison_solve(a_inv, y, x, b)?;
    let c = sherman_morrison_solve(a_inv, y, x, y)?;
    counters::flops((f.len() * f.len()) as u64);
    Ok(DenseMatrix::outer(&c, &f).scale(-1.0))
}

/// `∇[xᵀ(A + diagm x)² x] = 2(A + 2 diagm x)(A + diagm x)x` for symmetric `A`.
pub fn grad_diagm_quadratic(a: &DenseMatrix, x: &DenseVector) -> Result<DenseVector> {
    require_square(a, "grad_diagm_quadratic")?;
    if a.rows() != x.len() {
        return shape_err("grad_diagm_quadratic: dimension mismatch");
    }
    if !a.is_symmetric(1e-12) {
        return Err(Error::Contract("grad_diagm_quadratic needs symmetric A".into()));
    }
    let w = &a.matvec(x) + &x.hadamard(x);
    let aw = a.matvec(&w);
    Ok((&aw + &x.hadamard(&w).scale(2.0)).scale(2.0))
}

/// Differential of `f(x) = xxᵀ/xᵀx`:
/// `(dx xᵀ + x dxᵀ)/xᵀx − 2xxᵀ(xᵀdx)/(xᵀx)²`.
pub fn d_projection(x: &DenseVector, dx: &DenseVector) -> Result<DenseMatrix> {
    if x.len() != dx.len() {
        return shape_err("d_projection: length mismatch");
    }
    let xx = x.dot(x);
    if xx == 0.0 {
        return Err(Error::Domain("projection onto the zero vector".into()));
    }
    let sym = &DenseMatrix::outer(dx, x) + &DenseMatrix::outer(x, dx);
    let ray = DenseMatrix::outer(x, x).scale(2.0 * x.dot(dx) / (xx * xx));
    Ok(&sym.scale(1.0 / xx) - &ray)
}

/// Jacobian of `g(x) = (xxᵀ/xᵀx)b`:
/// `(1/xᵀx)[(xᵀb)I + xbᵀ − 2xxᵀbxᵀ/xᵀx]`.
pub fn jacobian_projection_b(x: &DenseVector, b: &DenseVector) -> Result<DenseMatrix> {
    if x.len() != b.len() {
        return shape_err("jacobian_projection_b: length mismatch");
    }
    let xx = x.dot(x);
    if xx == 0.0 {
        return Err(Error::Domain("projection onto the zero vector".into()));
    }
    let n = x.len();
    let xb = x.dot(b);
    let j = DenseMatrix::identity(n)
        .scale(xb)
        .axpy(1.0, &DenseMatrix::outer(x, b))
        .axpy(-2.0 * xb / xx, &DenseMatrix::outer(x, x));
    Ok(j.scale(1.0 / xx))
}

fn rotation(phi: f64) -> DenseMatrix {
    let (s, c) = phi.sin_cos();
    DenseMatrix::from_rows(&[[c, s], [-s, c]])
}

/// Closed-form 2×2 Jacobians of the planar transforms at `point`.
pub fn analytic_transform_jacobians(kind: TransformKind, theta: f64, point: &DenseVector) -> Result<DenseMatrix> {
    if point.len() != 2 {
        return shape_err(format!("planar transform at a point of length {}", point.len()));
    }
    let (x, y) = (point[0], point[1]);
    Ok(match kind {
        TransformKind::Rotate => rotation(theta),
        TransformKind::Hyperbolic => {
            let (s, c) = (theta.sinh(), theta.cosh());
            DenseMatrix::from_rows(&[[c, s], [s, c]])
        }
        TransformKind::Shear => DenseMatrix::from_rows(&[[1.0, 0.0], [2.0 * theta * x, 1.0]]),
        TransformKind::Warp => {
            let r2 = x * x + y * y;
            if r2 == 0.0 {
                return Err(Error::Domain("warp is not differentiable at the origin".into()));
            }
            let r = r2.sqrt();
            let phi = theta * r;
            let (s, c) = phi.sin_cos();
            let dr = DenseMatrix::from_rows(&[[-s, c], [-c, -s]]);
            let v = &dr * point;
            let term = DenseMatrix::outer(&v, point).scale(theta * r / r2);
            &term + &rotation(phi)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{det, lu_inverse, lu_solve};
    use crate::program::{Transform, VectorProgram};
    use crate::random::Rng;

    fn fd_step(scale: f64) -> f64 {
        f64::EPSILON.sqrt() * (1.0 + scale)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn mrel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        (a - b).frobenius_norm() / b.frobenius_norm().max(1e-300)
    }

    #[test]
    fn d_inverse_examples() {
        let e = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert!(mrel(&d_inverse(&DenseMatrix::identity(2), &e).unwrap(), &e.scale(-1.0)) < 1e-15);
        let g = d_inverse(&DenseMatrix::diag(&[2.0, 4.0]), &DenseMatrix::identity(2)).unwrap();
        assert!(mrel(&g, &DenseMatrix::diag(&[-0.25, -1.0 / 16.0])) < 1e-15);
    }

    #[test]
    fn d_inverse_fd() {
        let mut rng = Rng::seeded(1);
        let a = rng.well_conditioned(4);
        let e = rng.gaussian_matrix(4, 4);
        let h = 1e-6;
        let fd = (&lu_inverse(&a.axpy(h, &e)).unwrap() - &lu_inverse(&a).unwrap()).scale(1.0 / h);
        assert!(mrel(&d_inverse(&a, &e).unwrap(), &fd) <= 1e-5);
    }

    #[test]
    fn d_inverse_singular() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(d_inverse(&a, &a), Err(Error::Singular { .. })));
    }

    #[test]
    fn grad_det_two_by_two_cofactor() {
        let mut rng = Rng::seeded(2);
        for _ in 0..20 {
            let (a, b, c, d) = (rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian());
            let m = DenseMatrix::from_rows(&[[a, b], [c, d]]);
            let g = grad_det(&m).unwrap();
            let expect = DenseMatrix::from_rows(&[[d, -c], [-b, a]]);
            assert!((&g - &expect).max_abs() <= 1e-12 * (1.0 + expect.max_abs()));
        }
    }

    #[test]
    fn grad_det_identity_and_fallback() {
        assert!(mrel(&grad_det(&DenseMatrix::identity(3)).unwrap(), &DenseMatrix::identity(3)) < 1e-15);
        let s = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]]);
        assert_eq!(grad_det(&s).unwrap(), cofactor_matrix(&s));
        let big = DenseMatrix::zeros(5, 5);
        assert!(matches!(grad_det(&big), Err(Error::Singular { .. })));
    }

    #[test]
    fn grad_det_fd_and_trace_form() {
        let mut rng = Rng::seeded(3);
        for _ in 0..100 {
            let a = rng.well_conditioned(5);
            let e = rng.gaussian_matrix(5, 5);
            let g = grad_det(&a).unwrap();
            let lin = g.frobenius_dot(&e);
            assert!(rel(d_det(&a, &e).unwrap(), lin) <= 1e-10);
            let h = fd_step(a.frobenius_norm());
            let fd = (det(&a.axpy(h, &e)).unwrap() - det(&a.axpy(-h, &e)).unwrap()) / (2.0 * h);
            assert!(rel(fd, lin) <= 1e-5, "{fd} vs {lin}");
        }
    }

    #[test]
    fn d_logdet_cases() {
        let e = DenseMatrix::from_rows(&[[1.0, 5.0], [-2.0, 3.0]]);
        assert!((d_logdet(&DenseMatrix::identity(2), &e).unwrap() - 4.0).abs() < 1e-15);
        let dd = d_logdet(&DenseMatrix::diag(&[2.0, 4.0]), &DenseMatrix::diag(&[1.0, 1.0])).unwrap();
        assert!((dd - 0.75).abs() < 1e-15);
        assert!(matches!(
            d_logdet(&DenseMatrix::diag(&[-1.0, 1.0]), &e),
            Err(Error::Domain(_))
        ));
        let mut rng = Rng::seeded(4);
        let a = &rng.well_conditioned(4) + &DenseMatrix::identity(4).scale(4.0);
        let e = rng.gaussian_matrix(4, 4);
        let h = fd_step(a.frobenius_norm());
        let ld = |m: &DenseMatrix| det(m).unwrap().ln();
        let fd = (ld(&a.axpy(h, &e)) - ld(&a.axpy(-h, &e))) / (2.0 * h);
        assert!(rel(d_logdet(&a, &e).unwrap(), fd) <= 1e-5);
    }

    #[test]
    fn d_charpoly_cases() {
        assert!((d_charpoly(&DenseMatrix::diag(&[1.0, 2.0]), 0.0).unwrap() + 3.0).abs() < 1e-14);
        let mut rng = Rng::seeded(5);
        let s = rng.symmetric_matrix(4);
        let lam = jacobi_eigen(&s).unwrap().lambda;
        let x = 0.37;
        let oracle: f64 = (0..4)
            .map(|i| (0..4).filter(|&j| j != i).map(|j| x - lam[j]).product::<f64>())
            .sum();
        assert!(rel(d_charpoly(&s, x).unwrap(), oracle) <= 1e-8);
        let h = 1e-7;
        let fd = (charpoly(&s, x + h).unwrap() - charpoly(&s, x - h).unwrap()) / (2.0 * h);
        assert!(rel(d_charpoly(&s, x).unwrap(), fd) <= 1e-6);
        assert!(matches!(d_charpoly(&s, lam[2]), Err(Error::Singular { .. })));
    }

    #[test]
    fn second_det_cases() {
        let e11 = DenseMatrix::unit(2, 2, 0, 0);
        let e22 = DenseMatrix::unit(2, 2, 1, 1);
        assert!((second_det(&DenseMatrix::identity(2), &e11, &e22).unwrap() - 1.0).abs() < 1e-15);
        let mut rng = Rng::seeded(6);
        let a = rng.well_conditioned(4);
        let e = rng.gaussian_matrix(4, 4);
        let f = rng.gaussian_matrix(4, 4);
        let ef = second_det(&a, &e, &f).unwrap();
        assert!((ef - second_det(&a, &f, &e).unwrap()).abs() <= 1e-12 * ef.abs());
        let h = 1e-4;
        let d = |m: DenseMatrix| det(&m).unwrap();
        let sd = d(a.axpy(h, &e).axpy(h, &f)) + d(a.clone()) - d(a.axpy(h, &e)) - d(a.axpy(h, &f));
        assert!(rel(sd / (h * h), ef) <= 1e-3);
    }

    #[test]
    fn quadform_frobenius_bilinear() {
        let mut rng = Rng::seeded(7);
        let s = rng.symmetric_matrix(4);
        let x = rng.gaussian_vector(4);
        assert!((&grad_quadform(&s, &x).unwrap() - &s.matvec(&x).scale(2.0)).norm() < 1e-13);
        let g = rng.gaussian_matrix(4, 4);
        let anti = &g - &g.transpose();
        assert!(grad_quadform(&anti, &x).unwrap().norm() < 1e-13);
        let i2 = grad_frobenius(&DenseMatrix::identity(2)).unwrap();
        assert!(mrel(&i2, &DenseMatrix::identity(2).scale(0.5f64.sqrt())) < 1e-15);
        assert!(grad_frobenius(&DenseMatrix::zeros(2, 2)).is_err());
        let gb = grad_bilinear_xay(&DenseVector::unit(3, 1), &DenseVector::unit(2, 0));
        assert_eq!(gb, DenseMatrix::unit(3, 2, 1, 0));

        let a = rng.gaussian_matrix(4, 4);
        let h = fd_step(x.norm());
        let f = |v: &DenseVector| v.dot(&a.matvec(v));
        let gq = grad_quadform(&a, &x).unwrap();
        for i in 0..4 {
            let e = DenseVector::unit(4, i);
            let fd = (f(&x.axpy(h, &e)) - f(&x.axpy(-h, &e))) / (2.0 * h);
            assert!((fd - gq[i]).abs() <= 1e-6 * gq.norm());
        }
    }

    #[test]
    fn matpow_rules() {
        let mut rng = Rng::seeded(8);
        let a = rng.gaussian_matrix(3, 3);
        let e = rng.gaussian_matrix(3, 3);
        assert_eq!(d_matpow(&a, &e, 1).unwrap(), e);
        let two = &(&e * &a) + &(&a * &e);
        assert!(mrel(&d_matpow(&a, &e, 2).unwrap(), &two) < 1e-14);
        let a2 = &a * &a;
        let three = &(&(&e * &a2) + &(&(&a * &e) * &a)) + &(&a2 * &e);
        assert!(mrel(&d_matpow(&a, &e, 3).unwrap(), &three) < 1e-14);
        let h = 1e-5;
        let cube = |m: &DenseMatrix| &(m * m) * m;
        let fd = (&cube(&a.axpy(h, &e)) - &cube(&a)).scale(1.0 / h);
        assert!(mrel(&fd, &three) <= 1e-4);
        assert!(matches!(d_matpow(&a, &e, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn linearity_in_perturbation() {
        let mut rng = Rng::seeded(9);
        let a = rng.well_conditioned(4);
        let e = rng.gaussian_matrix(4, 4);
        let f = rng.gaussian_matrix(4, 4);
        let alpha = 1.7;
        let comb = e.scale(alpha).axpy(1.0, &f);
        let close = |x: &DenseMatrix, y: &DenseMatrix| (x - y).frobenius_norm() <= 1e-12 * (1.0 + y.frobenius_norm());
        let di = |d: &DenseMatrix| d_inverse(&a, d).unwrap();
        assert!(close(&di(&comb), &di(&e).scale(alpha).axpy(1.0, &di(&f))));
        let dm = |d: &DenseMatrix| d_matpow(&a, d, 3).unwrap();
        assert!(close(&dm(&comb), &dm(&e).scale(alpha).axpy(1.0, &dm(&f))));
        let spd = &(&a.transpose() * &a) + &DenseMatrix::identity(4);
        let dl = |d: &DenseMatrix| d_logdet(&spd, d).unwrap();
        assert!((dl(&comb) - alpha * dl(&e) - dl(&f)).abs() <= 1e-12 * (1.0 + dl(&comb).abs()));
        let dd = |d: &DenseMatrix| d_det(&a, d).unwrap();
        assert!((dd(&comb) - alpha * dd(&e) - dd(&f)).abs() <= 1e-12 * (1.0 + dd(&comb).abs()));
        let x = rng.gaussian_vector(4);
        let u = rng.gaussian_vector(4);
        let v = rng.gaussian_vector(4);
        let dp = |d: &DenseVector| d_projection(&x, d).unwrap();
        assert!(close(
            &dp(&u.scale(alpha).axpy(1.0, &v)),
            &dp(&u).scale(alpha).axpy(1.0, &dp(&v))
        ));
    }

    #[test]
    fn transpose_and_trace_rules_compose() {
        // d tr(AᵀA) = 2 tr(Aᵀ dA) through the transpose and trace rules.
        let mut rng = Rng::seeded(10);
        let a = rng.gaussian_matrix(3, 3);
        let e = rng.gaussian_matrix(3, 3);
        let composed = d_trace(&(&(&d_transpose(&e) * &a) + &(&a.transpose() * &e))).unwrap();
        let h = fd_step(a.frobenius_norm());
        let f = |m: &DenseMatrix| (&m.transpose() * m).trace();
        let fd = (f(&a.axpy(h, &e)) - f(&a.axpy(-h, &e))) / (2.0 * h);
        assert!(rel(composed, fd) <= 1e-6);
        assert!(rel(composed, 2.0 * a.frobenius_dot(&e)) <= 1e-12);
    }

    #[test]
    fn sherman_morrison_cases() {
        let mut rng = Rng::seeded(11);
        let n = 6;
        let a = rng.well_conditioned(n);
        let ai = lu_inverse(&a).unwrap();
        let (x, y, b) = (rng.gaussian_vector(n), rng.gaussian_vector(n), rng.gaussian_vector(n));
        let z = sherman_morrison_solve(&ai, &DenseVector::zeros(n), &x, &b).unwrap();
        assert!((&z - &ai.matvec(&b)).norm() < 1e-14 * z.norm().max(1.0));
        let id = DenseMatrix::identity(n);
        let zi = sherman_morrison_solve(&id, &y, &x, &b).unwrap();
        let expect = b.axpy(-x.dot(&b) / (1.0 + x.dot(&y)), &y);
        assert!((&zi - &expect).norm() <= 1e-14 * expect.norm());
        let dense = lu_solve(&(&a + &DenseMatrix::outer(&y, &x)), &b).unwrap();
        let sm = sherman_morrison_solve(&ai, &y, &x, &b).unwrap();
        assert!((&sm - &dense).norm() <= 1e-9 * dense.norm());
        // 1 + xᵀy = 0 with A = I
        let yy = DenseVector::unit(n, 0).scale(-1.0);
        let xx = DenseVector::unit(n, 0);
        assert!(matches!(
            sherman_morrison_solve(&id, &yy, &xx, &b),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn rank1_resolvent_jacobian() {
        let mut rng = Rng::seeded(12);
        let n = 5;
        let a = rng.well_conditioned(n);
        let ai = lu_inverse(&a).unwrap();
        let (x, y, b) = (rng.gaussian_vector(n), rng.gaussian_vector(n), rng.gaussian_vector(n));
        let j = jacobian_rank1_resolvent(&ai, &y, &x, &b).unwrap();
        for i in 0..n {
            for k in 0..n {
                for p in i + 1..n {
                    for q in k + 1..n {
                        let m = j[(i, k)] * j[(p, q)] - j[(i, q)] * j[(p, k)];
                        assert!(m.abs() <= 1e-10);
                    }
                }
            }
        }
        let h = 1e-6;
        let f = |v: &DenseVector| sherman_morrison_solve(&ai, &y, v, &b).unwrap();
        let cols: Vec<_> = (0..n)
            .map(|k| (&f(&x.axpy(h, &DenseVector::unit(n, k))) - &f(&x)).scale(1.0 / h))
            .collect();
        let fd = DenseMatrix::from_columns(&cols).unwrap();
        assert!(mrel(&j, &fd) <= 1e-4);
    }

    #[test]
    fn rank1_resolvent_cost_is_quadratic() {
        let mut rng = Rng::seeded(13);
        let mut counts = Vec::new();
        for k in 5..=9 {
            let n = 1usize << k;
            let ai = rng.gaussian_matrix(n, n);
            let (x, y, b) = (rng.gaussian_vector(n), rng.gaussian_vector(n), rng.gaussian_vector(n));
            let (_, c) = counters::measure(|| jacobian_rank1_resolvent(&ai, &y, &x, &b));
            counts.push(c.flops as f64);
        }
        for w in counts.windows(2) {
            assert!(w[1] / w[0] <= 4.4, "ratio {}", w[1] / w[0]);
        }
    }

    #[test]
    fn diagm_quadratic_cases() {
        let x = DenseVector::new(vec![1.0, -2.0, 0.5]).unwrap();
        let g = grad_diagm_quadratic(&DenseMatrix::zeros(3, 3), &x).unwrap();
        assert!((&g - &x.map(|v| 4.0 * v * v * v)).norm() < 1e-14);
        let mut rng = Rng::seeded(14);
        let s = rng.symmetric_matrix(5);
        assert_eq!(grad_diagm_quadratic(&s, &DenseVector::zeros(5)).unwrap().norm(), 0.0);
        assert!(matches!(
            grad_diagm_quadratic(&rng.gaussian_matrix(5, 5), &DenseVector::zeros(5)),
            Err(Error::Contract(_))
        ));
        let x = rng.gaussian_vector(5);
        let f = |v: &DenseVector| {
            let m = &s + &DenseMatrix::diag(v.as_slice());
            let mv = m.matvec(v);
            mv.dot(&mv)
        };
        let g = grad_diagm_quadratic(&s, &x).unwrap();
        let h = fd_step(x.norm());
        let fd = DenseVector::from_fn(5, |i| {
            let e = DenseVector::unit(5, i);
            (f(&x.axpy(h, &e)) - f(&x.axpy(-h, &e))) / (2.0 * h)
        });
        assert!((&fd - &g).norm() <= 1e-5 * g.norm());
    }

    #[test]
    fn projection_rules() {
        let mut rng = Rng::seeded(15);
        let x = rng.gaussian_vector(4);
        assert!(d_projection(&x, &x).unwrap().max_abs() < 1e-14);
        let dx = rng.gaussian_vector(4);
        let d = d_projection(&x, &dx).unwrap();
        assert!((&d - &d.transpose()).max_abs() < 1e-15);
        let p = |v: &DenseVector| DenseMatrix::outer(v, v).scale(1.0 / v.dot(v));
        let h = fd_step(x.norm());
        let fd = (&p(&x.axpy(h, &dx)) - &p(&x.axpy(-h, &dx))).scale(0.5 / h);
        assert!(mrel(&d, &fd) <= 1e-5);
        assert!(d_projection(&DenseVector::zeros(4), &dx).is_err());

        let b = rng.gaussian_vector(4);
        let j = jacobian_projection_b(&x, &b).unwrap();
        assert!((&j.matvec(&dx) - &d.matvec(&b)).norm() <= 1e-13 * (1.0 + j.matvec(&dx).norm()));

        let hand = jacobian_projection_b(&DenseVector::unit(2, 0), &DenseVector::unit(2, 1)).unwrap();
        assert_eq!(hand, DenseMatrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]));

        for _ in 0..20 {
            let x = rng.gaussian_vector(4);
            let g = |v: &DenseVector| p(v).matvec(&b);
            let h = fd_step(x.norm());
            let cols: Vec<_> = (0..4)
                .map(|k| {
                    let e = DenseVector::unit(4, k);
                    (&g(&x.axpy(h, &e)) - &g(&x.axpy(-h, &e))).scale(0.5 / h)
                })
                .collect();
            let fd = DenseMatrix::from_columns(&cols).unwrap();
            assert!(mrel(&jacobian_projection_b(&x, &b).unwrap(), &fd) <= 1e-5);
        }
    }

    #[test]
    fn transform_jacobians() {
        let origin = DenseVector::zeros(2);
        assert_eq!(
            analytic_transform_jacobians(TransformKind::Rotate, 0.0, &origin).unwrap(),
            DenseMatrix::identity(2)
        );
        assert!(analytic_transform_jacobians(TransformKind::Warp, 1.0, &origin).is_err());
        let mut rng = Rng::seeded(16);
        for _ in 0..20 {
            let theta = rng.uniform(-3.0, 3.0);
            let pt = rng.gaussian_vector(2);
            let hyp = analytic_transform_jacobians(TransformKind::Hyperbolic, theta, &pt).unwrap();
            assert!((det(&hyp).unwrap() - 1.0).abs() <= 1e-12 * theta.cosh().powi(2));
            for kind in TransformKind::ALL {
                let j = analytic_transform_jacobians(kind, theta, &pt).unwrap();
                let ad = Transform { kind, theta }.jacobian_forward(&pt).unwrap();
                assert!(mrel(&j, &ad) <= 1e-9, "{kind:?}");
            }
        }
    }
}
