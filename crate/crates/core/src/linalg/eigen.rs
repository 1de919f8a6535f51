use super::{DenseMatrix, DenseVector};
use crate::counters;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-12;
const OFF_TOL: f64 = 1e-12;

/// Symmetric eigendecomposition `S = Q Λ Qᵀ`.
///
/// Eigenvalues ascend. Each eigenvector column is signed so that its
/// largest-magnitude entry (first one on ties) is positive.
#[derive(Clone, Debug)]
pub struct EigenDecomp {
    pub q: DenseMatrix,
    pub lambda: DenseVector,
}

impl EigenDecomp {
    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    pub fn vector(&self, i: usize) -> DenseVector {
        self.q.column(i)
    }

    /// `Q Λ Qᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.n();
        let ql = DenseMatrix::from_fn(n, n, |i, j| self.q[(i, j)] * self.lambda[j]);
        &ql * &self.q.transpose()
    }

    /// Smallest gap between consecutive eigenvalues (infinite for n = 1).
    pub fn min_gap(&self) -> f64 {
        self.lambda
            .as_slice()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// `‖QᵀQ − I‖_F`.
    pub fn orthogonality_defect(&self) -> f64 {
        let qtq = &self.q.transpose() * &self.q;
        (&qtq - &DenseMatrix::identity(self.n())).frobenius_norm()
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
pub fn jacobi_eigen(s: &DenseMatrix) -> Result<EigenDecomp> {
    if !s.is_square() {
        return Err(Error::Contract(format!(
            "eigensolver needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    if !s.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::Contract("eigensolver input is not symmetric".into()));
    }
    let n = s.rows();
    let mut a = s.symmetric_part();
    let mut v = DenseMatrix::identity(n);
    let target = OFF_TOL * s.frobenius_norm();

    let off_norm = |a: &DenseMatrix| -> f64 {
        let mut sum = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    sum += a[(i, j)] * a[(i, j)];
                }
            }
        }
        sum.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&a) > target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Convergence {
                iterations: sweeps,
                last: None,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                rotate(&mut a, &mut v, p, q, c, sn);
            }
        }
        counters::flops((sweeps * n * n * n * 4) as u64);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let lambda = DenseVector::from_fn(n, |k| a[(order[k], order[k])]);
    let mut q = DenseMatrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    fix_signs(&mut q);
    Ok(EigenDecomp { q, lambda })
}

/// Applies the rotation in the (p, q) plane: `A ← JᵀAJ`, `V ← VJ`.
fn rotate(a: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Flips columns so the largest-magnitude entry of each is positive.
pub(crate) fn fix_signs(q: &mut DenseMatrix) {
    for j in 0..q.cols() {
        let mut best = 0;
        for i in 1..q.rows() {
            if q[(i, j)].abs() > q[(best, j)].abs() {
                best = i;
            }
        }
        if q[(best, j)] < 0.0 {
            for i in 0..q.rows() {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::Rng;

    /// Real roots of the monic cubic `t³ + b t² + c t + d`, bracketed by
    /// sign changes on a fine grid then refined by bisection.
    fn cubic_roots(b: f64, c: f64, d: f64, lo: f64, hi: f64) -> Vec<f64> {
        let p = |t: f64| ((t + b) * t + c) * t + d;
        let steps = 20_000;
        let h = (hi - lo) / steps as f64;
        let mut roots = Vec::new();
        for k in 0..steps {
            let (mut l, mut r) = (lo + k as f64 * h, lo + (k + 1) as f64 * h);
            if p(l) == 0.0 {
                roots.push(l);
                continue;
            }
            if p(l) * p(r) < 0.0 {
                for _ in 0..200 {
                    let m = 0.5 * (l + r);
                    if p(l) * p(m) <= 0.0 {
                        r = m;
                    } else {
                        l = m;
                    }
                }
                roots.push(0.5 * (l + r));
            }
        }
        roots
    }

    #[test]
    fn diagonal_input() {
        let e = jacobi_eigen(&DenseMatrix::diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.lambda.as_slice(), &[1.0, 2.0, 3.0]);
        let expected = DenseMatrix::from_rows(&[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(e.q, expected);
    }

    #[test]
    fn swap_matrix() {
        let e = jacobi_eigen(&DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]])).unwrap();
        assert!((e.lambda[0] + 1.0).abs() < 1e-14);
        assert!((e.lambda[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn squared_distance_matrix_matches_cubic_oracle() {
        let m = DenseMatrix::from_fn(3, 3, |i, j| (i as f64 - j as f64).powi(2));
        let e = jacobi_eigen(&m).unwrap();
        // det(tI − M) = t³ − tr(M) t² + c2 t − det(M)
        let tr = m.trace();
        let c2 = (0..3)
            .flat_map(|i| (i + 1..3).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, i)] * m[(j, j)] - m[(i, j)] * m[(j, i)])
            .sum::<f64>();
        let d = crate::linalg::laplace_det(&m);
        let roots = cubic_roots(-tr, c2, -d, -10.0, 10.0);
        assert_eq!(roots.len(), 3);
        for (l, r) in e.lambda.iter().zip(&roots) {
            assert!((l - r).abs() <= 1e-10, "{l} vs {r}");
        }
    }

    #[test]
    fn random_reconstruction_and_orthogonality() {
        let mut rng = Rng::seeded(17);
        for trial in 0..100 {
            let n = 1 + trial % 10;
            let s = rng.symmetric_matrix(n);
            let e = jacobi_eigen(&s).unwrap();
            let rec = (&e.reconstruct() - &s).frobenius_norm() / s.frobenius_norm();
            assert!(rec <= 1e-8, "reconstruction {rec}");
            assert!(e.orthogonality_defect() <= 1e-10 * n as f64);
            assert!(e.lambda.as_slice().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(jacobi_eigen(&a), Err(Error::Contract(_))));
    }

    #[test]
    fn sign_convention() {
        let mut rng = Rng::seeded(8);
        let e = jacobi_eigen(&rng.symmetric_matrix(5)).unwrap();
        for j in 0..5 {
            let col = e.vector(j);
            let big = col.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
            assert!(big > 0.0);
        }
    }
}
