//! Finite-difference approximation and derivative verification.
//!
//! Differences are taken in any [`FdSpace`] (scalars, vectors, matrices),
//! with errors measured in the Euclidean/Frobenius norm.

use std::fmt::Write as _;

use crate::error::{shape_err, Error, Result};
use crate::forward::{self, Dual};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::program::VectorProgram;
use crate::random::Rng;
use crate::reverse::{self, Var};

/// Double-precision machine epsilon, 2⁻⁵².
pub const MACHINE_EPSILON: f64 = f64::EPSILON;

/// A real vector space with a norm, as needed for differencing.
pub trait FdSpace: Clone {
    fn same_shape(&self, other: &Self) -> bool;
    /// `self + alpha·other`.
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self;
    fn norm(&self) -> f64;

    fn scaled(&self, alpha: f64) -> Self {
        self.add_scaled(alpha - 1.0, self)
    }
}

impl FdSpace for f64 {
    fn same_shape(&self, _: &Self) -> bool {
        true
    }
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        self + alpha * other
    }
    fn norm(&self) -> f64 {
        self.abs()
    }
    fn scaled(&self, alpha: f64) -> Self {
        alpha * self
    }
}

impl FdSpace for DenseVector {
    fn same_shape(&self, other: &Self) -> bool {
        self.len() == other.len()
    }
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        self.axpy(alpha, other)
    }
    fn norm(&self) -> f64 {
        DenseVector::norm(self)
    }
    fn scaled(&self, alpha: f64) -> Self {
        self.scale(alpha)
    }
}

impl FdSpace for DenseMatrix {
    fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        self.axpy(alpha, other)
    }
    fn norm(&self) -> f64 {
        self.frobenius_norm()
    }
    fn scaled(&self, alpha: f64) -> Self {
        self.scale(alpha)
    }
}

fn check_shape<X: FdSpace>(a: &X, b: &X, what: &str) -> Result<()> {
    if !a.same_shape(b) {
        return shape_err(format!("{what}: operands differ in shape"));
    }
    Ok(())
}

/// `f(x + dx) − f(x)`, undivided.
pub fn forward_diff<X, Y, F>(f: F, x: &X, dx: &X) -> Result<Y>
where
    X: FdSpace,
    Y: FdSpace,
    F: Fn(&X) -> Result<Y>,
{
    check_shape(x, dx, "forward_diff")?;
    let hi = f(&x.add_scaled(1.0, dx))?;
    let lo = f(x)?;
    check_shape(&hi, &lo, "forward_diff output")?;
    Ok(hi.add_scaled(-1.0, &lo))
}

/// `[f(x + dx) − f(x − dx)]/2`, undivided by `‖dx‖`.
pub fn central_diff<X, Y, F>(f: F, x: &X, dx: &X) -> Result<Y>
where
    X: FdSpace,
    Y: FdSpace,
    F: Fn(&X) -> Result<Y>,
{
    check_shape(x, dx, "central_diff")?;
    let hi = f(&x.add_scaled(1.0, dx))?;
    let lo = f(&x.add_scaled(-1.0, dx))?;
    check_shape(&hi, &lo, "central_diff output")?;
    Ok(hi.add_scaled(-1.0, &lo).scaled(0.5))
}

/// `‖approx − exact‖ / ‖exact‖`.
pub fn relative_error<Y: FdSpace>(approx: &Y, exact: &Y) -> Result<f64> {
    check_shape(approx, exact, "relative_error")?;
    let den = exact.norm();
    if den == 0.0 {
        return Err(Error::Domain("relative error against an exact value of 0".into()));
    }
    Ok(approx.add_scaled(-1.0, exact).norm() / den)
}

/// Relative error, falling back to the absolute error when `exact` is 0.
pub fn relative_or_absolute<Y: FdSpace>(approx: &Y, exact: &Y) -> Result<f64> {
    check_shape(approx, exact, "relative_or_absolute")?;
    let diff = approx.add_scaled(-1.0, exact).norm();
    let den = exact.norm();
    Ok(if den == 0.0 { diff } else { diff / den })
}

/// `√ε (1 + ‖x‖)`.
pub fn suggest_step<X: FdSpace>(x: &X) -> f64 {
    MACHINE_EPSILON.sqrt() * (1.0 + x.norm())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub scale: f64,
    pub perturbation_norm: f64,
    pub relative_error: f64,
}

/// Scales `10⁰, 10⁻¹, …, 10⁻¹⁶`.
pub fn default_scales() -> Vec<f64> {
    (0..=16).map(|k| 10f64.powi(-k)).collect()
}

/// Relative error of `forward_diff(f, x, s·direction)` against
/// `fprime_action(s·direction)` for each scale `s`.
pub fn error_sweep<X, Y, F, D>(f: F, fprime_action: D, x: &X, direction: &X, scales: &[f64]) -> Result<Vec<SweepRow>>
where
    X: FdSpace,
    Y: FdSpace,
    F: Fn(&X) -> Result<Y>,
    D: Fn(&X) -> Result<Y>,
{
    scales
        .iter()
        .map(|&s| {
            let dx = direction.scaled(s);
            let approx = forward_diff(&f, x, &dx)?;
            let exact = fprime_action(&dx)?;
            Ok(SweepRow {
                scale: s,
                perturbation_norm: dx.norm(),
                relative_error: relative_or_absolute(&approx, &exact)?,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "scale,perturbation_norm,relative_error";

/// CSV with a header line and one plain-decimal row per scale.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.scale, r.perturbation_norm, r.relative_error);
    }
    out
}

/// Where the error curve bottoms out and whether it rises on both sides.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepShape {
    pub argmin_index: usize,
    pub argmin_scale: f64,
    pub min_error: f64,
    /// Errors shrink (within a factor 2 of noise) from the first row to the minimum.
    pub decreasing_before: bool,
    /// The last row sits at least 10× above the minimum.
    pub increasing_after: bool,
}

impl SweepShape {
    pub fn is_valley(&self, n_rows: usize) -> bool {
        self.argmin_index > 0 && self.argmin_index + 1 < n_rows && self.decreasing_before && self.increasing_after
    }
}

pub fn sweep_shape(rows: &[SweepRow]) -> Option<SweepShape> {
    let (argmin_index, best) = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.relative_error.total_cmp(&b.1.relative_error))?;
    let before = &rows[..=argmin_index];
    let decreasing_before = before
        .windows(2)
        .all(|w| w[1].relative_error <= 2.0 * w[0].relative_error)
        && before[0].relative_error >= 10.0 * best.relative_error;
    let last = rows.last()?;
    Some(SweepShape {
        argmin_index,
        argmin_scale: best.scale,
        min_error: best.relative_error,
        decreasing_before,
        increasing_after: last.relative_error >= 10.0 * best.relative_error,
    })
}

/// Which AD mode the triple check compares against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdMode {
    Forward,
    Reverse,
}

impl std::str::FromStr for AdMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(AdMode::Forward),
            "reverse" => Ok(AdMode::Reverse),
            _ => Err(Error::Contract(format!("unknown AD mode '{s}'"))),
        }
    }
}

pub const TRIPLE_AD_TOL: f64 = 1e-10;
pub const TRIPLE_FD_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionCheck {
    pub ad_rel_err: f64,
    pub fd_rel_err: f64,
    pub passed: bool,
}

/// Outcome of comparing an analytic derivative with AD and with central
/// differences along random unit directions.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleReport {
    pub mode: AdMode,
    pub step: f64,
    pub directions: Vec<DirectionCheck>,
}

impl TripleReport {
    pub fn passed(&self) -> bool {
        self.directions.iter().all(|d| d.passed)
    }

    pub fn worst_ad(&self) -> f64 {
        self.directions.iter().map(|d| d.ad_rel_err).fold(0.0, f64::max)
    }

    pub fn worst_fd(&self) -> f64 {
        self.directions.iter().map(|d| d.fd_rel_err).fold(0.0, f64::max)
    }
}

/// Analytic vs AD vs finite differences on `n_directions` random unit
/// directions. Threshold violations are reported, not raised.
pub fn triple_check<P, A>(
    f: &P,
    analytic_action: A,
    mode: AdMode,
    x: &DenseVector,
    n_directions: usize,
    rng: &mut Rng,
) -> Result<TripleReport>
where
    P: VectorProgram,
    A: Fn(&DenseVector, &DenseVector) -> Result<DenseVector>,
{
    f.check_dim(x)?;
    let jac_rev = match mode {
        AdMode::Reverse => Some(reverse::jacobian_reverse(|v: &[Var<'_, f64>]| f.eval(v), x)?),
        AdMode::Forward => None,
    };
    let h = suggest_step(x);
    let value = |p: &DenseVector| f.value(p);
    let mut directions = Vec::with_capacity(n_directions);
    for _ in 0..n_directions {
        let d = rng.unit_vector(x.len());
        let exact = analytic_action(x, &d)?;
        let ad = match &jac_rev {
            Some(j) => j.matvec(&d),
            None => forward::directional_derivative(|v: &[Dual]| f.eval(v), x, &d)?,
        };
        let fd = central_diff(value, x, &d.scale(h))?.scale(1.0 / h);
        let ad_rel_err = relative_or_absolute(&ad, &exact)?;
        let fd_rel_err = relative_or_absolute(&fd, &exact)?;
        directions.push(DirectionCheck {
            ad_rel_err,
            fd_rel_err,
            passed: ad_rel_err <= TRIPLE_AD_TOL && fd_rel_err <= TRIPLE_FD_TOL,
        });
    }
    Ok(TripleReport {
        mode,
        step: h,
        directions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{AsVector, ScalarProgram};

    #[test]
    fn forward_diff_linear_and_constant() {
        let mut rng = Rng::seeded(1);
        let a = rng.gaussian_matrix(3, 3);
        let x = rng.gaussian_vector(3);
        let dx = rng.gaussian_vector(3);
        let d = forward_diff(|v: &DenseVector| Ok(a.matvec(v)), &x, &dx).unwrap();
        assert!((&d - &a.matvec(&dx)).norm() <= 1e-14 * (1.0 + d.norm()));
        let c = forward_diff(|_: &DenseVector| Ok(3.5), &x, &dx).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn forward_diff_square_residual_is_second_order() {
        let mut rng = Rng::seeded(2);
        let a = rng.gaussian_matrix(4, 4);
        let e = rng.unit_matrix(4, 4);
        let sq = |m: &DenseMatrix| Ok(m * m);
        for s in [1e-2, 1e-3] {
            let de = e.scale(s);
            let d = forward_diff(sq, &a, &de).unwrap();
            let lin = &(&a * &de) + &(&de * &a);
            let resid = (&d - &lin).frobenius_norm();
            assert!((resid - s * s * (&e * &e).frobenius_norm()).abs() <= 1e-12);
        }
    }

    #[test]
    fn central_diff_cases() {
        let x = 1.3;
        let d = central_diff(|t: &f64| Ok(t * t), &x, &1e-3).unwrap();
        assert!((d - 2.0 * x * 1e-3).abs() <= 1e-15);
        let d = central_diff(|t: &f64| Ok(t.sin()), &0.0, &0.1).unwrap();
        assert!((d - 0.1f64.sin()).abs() < 1e-17);
        // the central quotient of t³ is off by exactly h²
        let err = |h: f64| {
            let d = central_diff(|t: &f64| Ok(t.powi(3)), &x, &h).unwrap() / h;
            (d - 3.0 * x * x).abs()
        };
        let r = err(1e-2) / err(1e-3);
        assert!((50.0..=200.0).contains(&r), "ratio {r}");
    }

    #[test]
    fn relative_error_cases() {
        let v = DenseVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(relative_error(&v, &v).unwrap(), 0.0);
        assert_eq!(relative_error(&v.scale(2.0), &v).unwrap(), 1.0);
        let w = DenseVector::new(vec![3.0, 5.0]).unwrap();
        assert!((relative_error(&w, &v).unwrap() - 0.2).abs() < 1e-16);
        assert!(matches!(
            relative_error(&v, &DenseVector::zeros(2)),
            Err(Error::Domain(_))
        ));
        assert!(relative_error(&v, &DenseVector::zeros(3)).is_err());
    }

    #[test]
    fn step_rule() {
        assert_eq!(MACHINE_EPSILON, 2f64.powi(-52));
        assert_eq!(suggest_step(&0.0), MACHINE_EPSILON.sqrt());
        assert_eq!(suggest_step(&DenseVector::unit(3, 1)), 2.0 * MACHINE_EPSILON.sqrt());
    }

    fn square_sweep(derivative_is_wrong: bool) -> Vec<SweepRow> {
        let mut rng = Rng::seeded(3);
        let a = rng.gaussian_matrix(4, 4);
        let e = rng.unit_matrix(4, 4);
        error_sweep(
            |m: &DenseMatrix| Ok(m * m),
            |d: &DenseMatrix| {
                Ok(if derivative_is_wrong {
                    (&a * d).scale(2.0)
                } else {
                    &(&a * d) + &(d * &a)
                })
            },
            &a,
            &e,
            &default_scales(),
        )
        .unwrap()
    }

    #[test]
    fn sweep_valley() {
        let rows = square_sweep(false);
        let shape = sweep_shape(&rows).unwrap();
        assert!(shape.is_valley(rows.len()), "{shape:?}");
        assert!((1e-10..=1e-6).contains(&shape.argmin_scale));
        let at = rows.iter().find(|r| r.scale == 1e-8).unwrap();
        assert!(at.relative_error <= 1e-6);
        // first-order regime: a decade of scale is a decade of error
        for w in rows[1..5].windows(2) {
            let r = w[0].relative_error / w[1].relative_error;
            assert!((5.0..=20.0).contains(&r), "ratio {r}");
        }
        let wrong = square_sweep(true);
        assert!(wrong.iter().find(|r| r.scale == 1e-8).unwrap().relative_error >= 0.1);
    }

    #[test]
    fn csv_format() {
        let rows = vec![
            SweepRow {
                scale: 1.0,
                perturbation_norm: 2.0,
                relative_error: 0.5,
            },
            SweepRow {
                scale: 1e-16,
                perturbation_norm: 3e-16,
                relative_error: 1e-3,
            },
        ];
        let csv = sweep_to_csv(&rows);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], SWEEP_CSV_HEADER);
        assert_eq!(lines[1], "1,2,0.5");
        assert_eq!(lines[2], "0.0000000000000001,0.0000000000000003,0.001");
        assert!(lines[1..].iter().all(|l| !l.contains('e')));
    }

    struct SumSquares(usize);

    impl ScalarProgram for SumSquares {
        fn dim(&self) -> usize {
            self.0
        }
        fn eval<S: crate::Scalar>(&self, x: &[S]) -> S {
            crate::scalar::dot(x, x)
        }
    }

    #[test]
    fn triple_check_passes_and_fails_honestly() {
        let mut rng = Rng::seeded(4);
        let x = rng.gaussian_vector(5);
        let p = AsVector(SumSquares(5));
        let good = |x: &DenseVector, d: &DenseVector| Ok(DenseVector::from_vec(vec![2.0 * x.dot(d)]));
        for mode in [AdMode::Forward, AdMode::Reverse] {
            let rep = triple_check(&p, good, mode, &x, 5, &mut rng).unwrap();
            assert!(rep.passed(), "{rep:?}");
        }
        let bad = |x: &DenseVector, d: &DenseVector| Ok(DenseVector::from_vec(vec![x.dot(d)]));
        let rep = triple_check(&p, bad, AdMode::Reverse, &x, 5, &mut rng).unwrap();
        assert!(!rep.passed());
        assert!(rep.worst_ad() > 0.1);
    }
}
