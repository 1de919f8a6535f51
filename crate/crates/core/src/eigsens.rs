//! First- and second-order perturbation of the symmetric eigenproblem.
//!
//! With `S = QΛQᵀ` and simple eigenvalues, differentiating `SQ = QΛ` and
//! projecting onto `Q` gives `QᵀdSQ = WΛ − ΛW + dΛ` for `W = QᵀdQ`. The
//! diagonal yields `dλᵢ = qᵢᵀ dS qᵢ`; off the diagonal,
//! `Wᵢⱼ = (QᵀdSQ)ᵢⱼ / (λⱼ − λᵢ)`. That orientation is the one the
//! eigensolver reconstruction tests confirm.

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, DenseMatrix, DenseVector, EigenDecomp};

/// Relative eigenvalue gap below which every operation here refuses.
pub const GAP_TOL: f64 = 1e-8;

/// First-order eigen-perturbation: `dΛ` and the antisymmetric `QᵀdQ`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigPerturbation {
    pub dlambda: DenseVector,
    pub qt_dq: DenseMatrix,
}

fn check_gap(decomp: &EigenDecomp) -> Result<()> {
    let scale = decomp.lambda.norm();
    let gap = decomp.min_gap();
    let threshold = GAP_TOL * scale;
    if gap <= threshold || (decomp.n() > 1 && scale == 0.0) {
        return Err(Error::Degenerate { gap, threshold });
    }
    Ok(())
}

fn check_perturbation(decomp: &EigenDecomp, ds: &DenseMatrix) -> Result<()> {
    let n = decomp.n();
    if ds.shape() != (n, n) {
        return crate::error::shape_err(format!(
            "perturbation is {}x{}, eigenproblem is {n}x{n}",
            ds.rows(),
            ds.cols()
        ));
    }
    if !ds.is_symmetric(1e-12) {
        return Err(Error::Contract("perturbation must be symmetric".into()));
    }
    check_gap(decomp)
}

/// `Qᵀ dS Q`.
fn rotated(decomp: &EigenDecomp, ds: &DenseMatrix) -> DenseMatrix {
    &(&decomp.q.transpose() * ds) * &decomp.q
}

/// `dλᵢ = qᵢᵀ dS qᵢ`.
pub fn dlambda(decomp: &EigenDecomp, ds: &DenseMatrix) -> Result<DenseVector> {
    check_perturbation(decomp, ds)?;
    Ok(DenseVector::from_fn(decomp.n(), |i| {
        let q = decomp.vector(i);
        q.dot(&ds.matvec(&q))
    }))
}

/// `∇λᵢ = qᵢqᵢᵀ` under the Frobenius inner product.
pub fn grad_lambda(decomp: &EigenDecomp, i: usize) -> Result<DenseMatrix> {
    if i >= decomp.n() {
        return Err(Error::Range {
            index: i,
            max: decomp.n().saturating_sub(1),
        });
    }
    check_gap(decomp)?;
    let q = decomp.vector(i);
    Ok(DenseMatrix::outer(&q, &q))
}

/// Both first-order pieces at once.
pub fn perturbation(decomp: &EigenDecomp, ds: &DenseMatrix) -> Result<EigPerturbation> {
    check_perturbation(decomp, ds)?;
    let r = rotated(decomp, ds);
    let lam = &decomp.lambda;
    let w = DenseMatrix::from_fn(decomp.n(), decomp.n(), |i, j| {
        if i == j {
            0.0
        } else {
            r[(i, j)] / (lam[j] - lam[i])
        }
    });
    Ok(EigPerturbation {
        dlambda: r.diagonal(),
        qt_dq: w,
    })
}

/// `dQ = Q W`.
pub fn dq(decomp: &EigenDecomp, ds: &DenseMatrix) -> Result<DenseMatrix> {
    let p = perturbation(decomp, ds)?;
    Ok(&decomp.q * &p.qt_dq)
}

fn min_pairwise_gap(lambda: &DenseVector) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..lambda.len() {
        for k in i + 1..lambda.len() {
            gap = gap.min((lambda[i] - lambda[k]).abs());
        }
    }
    gap
}

/// `λᵢ + εEᵢᵢ + ε² Σ_{k≠i} Eᵢₖ²/(λᵢ − λₖ)` for the base `Λ = diag(lambda)`.
pub fn second_order_taylor(lambda: &DenseVector, e: &DenseMatrix, eps: f64) -> Result<DenseVector> {
    let n = lambda.len();
    if e.shape() != (n, n) {
        return crate::error::shape_err(format!("E is {}x{}, expected {n}x{n}", e.rows(), e.cols()));
    }
    if !e.is_symmetric(1e-12) {
        return Err(Error::Contract("perturbation must be symmetric".into()));
    }
    let gap = min_pairwise_gap(lambda);
    let threshold = GAP_TOL * lambda.norm();
    if gap <= threshold || (n > 1 && lambda.norm() == 0.0) {
        return Err(Error::Degenerate { gap, threshold });
    }
    Ok(DenseVector::from_fn(n, |i| {
        let second: f64 = (0..n)
            .filter(|&k| k != i)
            .map(|k| e[(i, k)] * e[(i, k)] / (lambda[i] - lambda[k]))
            .sum();
        lambda[i] + eps * e[(i, i)] + eps * eps * second
    }))
}

/// The same series about a general symmetric base, by rotating `E` into
/// the eigenbasis first.
pub fn second_order_taylor_general(decomp: &EigenDecomp, e: &DenseMatrix, eps: f64) -> Result<DenseVector> {
    check_perturbation(decomp, e)?;
    second_order_taylor(&decomp.lambda, &rotated(decomp, e), eps)
}

/// Flips columns of `q` whose dot product with the matching column of
/// `reference` is negative.
pub fn align_signs(q: &DenseMatrix, reference: &DenseMatrix) -> DenseMatrix {
    let mut out = q.clone();
    for j in 0..q.cols() {
        if q.column(j).dot(&reference.column(j)) < 0.0 {
            out.set_column(j, &q.column(j).scale(-1.0));
        }
    }
    out
}

/// One row of the analytic-versus-difference eigenvalue table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigFdRow {
    pub index: usize,
    pub lambda: f64,
    pub analytic: f64,
    pub finite_difference: f64,
    pub rel_err: f64,
}

/// Compares `dλ` against `(λᵢ(S + hE) − λᵢ(S))/h`, matching eigenvalues by
/// ascending order.
pub fn fd_table(s: &DenseMatrix, e: &DenseMatrix, h: f64) -> Result<Vec<EigFdRow>> {
    let base = jacobi_eigen(s)?;
    let d = dlambda(&base, e)?;
    let moved = jacobi_eigen(&s.axpy(h, e))?;
    Ok((0..base.n())
        .map(|i| {
            let fd = (moved.lambda[i] - base.lambda[i]) / h;
            EigFdRow {
                index: i,
                lambda: base.lambda[i],
                analytic: d[i],
                finite_difference: fd,
                rel_err: (fd - d[i]).abs() / d[i].abs().max(f64::MIN_POSITIVE),
            }
        })
        .collect())
}

pub const FD_TABLE_HEADER: &str = "index,lambda,dlambda,fd,rel_err";

pub fn fd_table_csv(rows: &[EigFdRow]) -> String {
    let mut out = String::from(FD_TABLE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.index, r.lambda, r.analytic, r.finite_difference, r.rel_err
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::Rng;

    fn decomp(s: &DenseMatrix) -> EigenDecomp {
        jacobi_eigen(s).unwrap()
    }

    #[test]
    fn shift_and_scale() {
        let mut rng = Rng::seeded(3);
        let s = rng.symmetric_matrix(5);
        let d = decomp(&s);
        let ones = dlambda(&d, &DenseMatrix::identity(5)).unwrap();
        assert!((&ones - &DenseVector::ones(5)).norm_inf() <= 1e-12);
        let scaled = dlambda(&d, &s).unwrap();
        assert!((&scaled - &d.lambda).norm_inf() <= 1e-10);
    }

    #[test]
    fn fd_five_by_five() {
        let mut rng = Rng::seeded(11);
        let s = rng.symmetric_matrix(5);
        let e = rng.symmetric_matrix(5);
        for row in fd_table(&s, &e, 1e-6).unwrap() {
            assert!(row.rel_err <= 1e-4, "{row:?}");
        }
        let csv = fd_table_csv(&fd_table(&s, &e, 1e-6).unwrap());
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn gradient_projector() {
        let mut rng = Rng::seeded(5);
        let s = rng.symmetric_matrix(4);
        let d = decomp(&s);
        let ds = rng.symmetric_matrix(4);
        let dl = dlambda(&d, &ds).unwrap();
        for i in 0..4 {
            let g = grad_lambda(&d, i).unwrap();
            assert!((g.trace() - 1.0).abs() <= 1e-12);
            assert!((&(&g * &g) - &g).max_abs() <= 1e-12);
            assert!((g.frobenius_dot(&ds) - dl[i]).abs() <= 1e-12);
        }
        let diag = DenseMatrix::diag(&[3.0, -1.0, 2.0]);
        let g = grad_lambda(&decomp(&diag), 0).unwrap();
        assert!((&g - &DenseMatrix::unit(3, 3, 1, 1)).max_abs() <= 1e-14);
        assert!(matches!(grad_lambda(&decomp(&diag), 3), Err(Error::Range { .. })));
    }

    #[test]
    fn degenerate_refused() {
        let d = decomp(&DenseMatrix::diag(&[1.0, 1.0, 2.0]));
        let e = DenseMatrix::identity(3);
        assert!(matches!(dlambda(&d, &e), Err(Error::Degenerate { .. })));
        assert!(matches!(dq(&d, &e), Err(Error::Degenerate { .. })));
        assert!(matches!(grad_lambda(&d, 0), Err(Error::Degenerate { .. })));
        let lam = DenseVector::from_vec(vec![2.0, 2.0]);
        assert!(matches!(
            second_order_taylor(&lam, &DenseMatrix::identity(2), 0.1),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn asymmetric_perturbation_rejected() {
        let d = decomp(&DenseMatrix::diag(&[1.0, 2.0]));
        let e = DenseMatrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]);
        assert!(matches!(dlambda(&d, &e), Err(Error::Contract(_))));
    }

    #[test]
    fn commuting_perturbation_keeps_vectors() {
        let mut rng = Rng::seeded(8);
        let s = rng.symmetric_matrix(4);
        let d = decomp(&s);
        let ds = &(&s * &s) + &s.scale(0.5);
        assert!(dq(&d, &ds).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn dq_reconstruction_second_order() {
        let mut rng = Rng::seeded(21);
        let s = rng.symmetric_matrix(5);
        let e = rng.symmetric_matrix(5);
        let d = decomp(&s);
        let dqm = dq(&d, &e).unwrap();
        let err = |h: f64| {
            let moved = decomp(&s.axpy(h, &e));
            let predicted = d.q.axpy(h, &dqm);
            (&align_signs(&moved.q, &d.q) - &predicted).frobenius_norm()
        };
        let r = err(1e-4) / err(1e-5);
        assert!((50.0..=200.0).contains(&r), "ratio {r}");
        // the opposite orientation is first-order wrong
        let flipped = d.q.axpy(-1e-4, &dqm);
        let moved = decomp(&s.axpy(1e-4, &e));
        assert!((&align_signs(&moved.q, &d.q) - &flipped).frobenius_norm() > 100.0 * err(1e-4));
    }

    #[test]
    fn antisymmetry_trace_and_sphere() {
        let mut rng = Rng::seeded(2);
        for n in 2..7 {
            let s = rng.symmetric_matrix(n);
            let ds = rng.symmetric_matrix(n);
            let d = decomp(&s);
            let p = perturbation(&d, &ds).unwrap();
            assert!((&p.qt_dq + &p.qt_dq.transpose()).max_abs() <= 1e-12);
            assert!((p.dlambda.sum() - ds.trace()).abs() <= 1e-12 * (1.0 + ds.frobenius_norm()));
            let dqm = dq(&d, &ds).unwrap();
            let qtdq = &d.q.transpose() * &dqm;
            assert!((&qtdq + &qtdq.transpose()).max_abs() <= 1e-10);
            for j in 0..n {
                assert!(d.vector(j).dot(&dqm.column(j)).abs() <= 1e-10);
            }
            let h = 1e-5;
            let moved = d.q.axpy(h, &dqm);
            let defect = (&(&moved.transpose() * &moved) - &DenseMatrix::identity(n)).max_abs();
            assert!(defect <= 10.0 * h * h * dqm.frobenius_norm().powi(2) + 1e-13);
        }
    }

    #[test]
    fn taylor_diagonal_perturbation_is_exact() {
        let lam = DenseVector::from_vec(vec![1.0, -2.0, 4.0]);
        let e = DenseMatrix::diag(&[0.3, 0.5, -1.0]);
        let got = second_order_taylor(&lam, &e, 0.2).unwrap();
        let expect = DenseVector::from_vec(vec![1.06, -1.9, 3.8]);
        assert!((&got - &expect).norm_inf() <= 1e-15);
    }

    #[test]
    fn taylor_two_by_two() {
        let lam = DenseVector::from_vec(vec![0.0, 1.0]);
        let e = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let eps = 0.01;
        let series = second_order_taylor(&lam, &e, eps).unwrap();
        assert!((series[0] + 1e-4).abs() <= 1e-18);
        assert!((series[1] - (1.0 + 1e-4)).abs() <= 1e-15);
        // [[0, ε], [ε, 1]]: λ = (1 ∓ √(1 + 4ε²))/2
        let root = (1.0 + 4.0 * eps * eps).sqrt();
        let exact = [(1.0 - root) / 2.0, (1.0 + root) / 2.0];
        for i in 0..2 {
            assert!((series[i] - exact[i]).abs() <= 10.0 * eps.powi(3));
        }
    }

    #[test]
    fn taylor_third_order_remainder() {
        let mut rng = Rng::seeded(17);
        let lam = DenseVector::from_vec(vec![-1.5, 0.2, 1.1, 3.0]);
        let e = rng.symmetric_matrix(4);
        let base = DenseMatrix::diag(lam.as_slice());
        let err = |eps: f64| {
            let series = second_order_taylor(&lam, &e, eps).unwrap();
            let exact = decomp(&base.axpy(eps, &e)).lambda;
            (&series - &exact).norm_inf()
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        let c = e1 / 1e-6;
        assert!(e2 <= 1.5 * c * 5e-3f64.powi(3), "e1={e1} e2={e2}");
        let r = e1 / e2;
        assert!((5.0..=11.0).contains(&r), "ratio {r}");
    }

    #[test]
    fn taylor_general_base() {
        let mut rng = Rng::seeded(9);
        let s = rng.symmetric_matrix(4);
        let e = rng.symmetric_matrix(4);
        let d = decomp(&s);
        let eps = 1e-3;
        let series = second_order_taylor_general(&d, &e, eps).unwrap();
        let exact = decomp(&s.axpy(eps, &e)).lambda;
        assert!((&series - &exact).norm_inf() <= 1e-6);
    }
}
