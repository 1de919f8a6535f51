//! The verification suites: each one runs a fixed experiment and measures
//! numbered checks against hard bounds.
//!
//! Suites 1–11 are the acceptance criteria; [`SuiteId::Linalg`] adds the
//! numeric-core invariants for `matcalc check`. A [`Fault`] flips the sign
//! of one analytic quantity, so callers can confirm a broken rule turns
//! its suite red.

use std::fmt;
use std::str::FromStr;

use crate::adjoint_linear::{g_eval, random_dp, value_and_grad_g, TridiagProblem};
use crate::counters;
use crate::eigsens;
use crate::error::{Error, Result};
use crate::fdcheck::{self, AdMode, TripleReport};
use crate::forward::{self, Dual};
use crate::kron::{self, Spectral};
use crate::linalg::{det, jacobi_eigen, lu_inverse, lu_solve, thomas_solve, DenseMatrix, DenseVector};
use crate::matrixrules as rules;
use crate::odesens::{self, ReferenceProblem};
use crate::program::{
    AsVector, CubeSum, DiagmQuadratic, GeneratedProgram, InvNorm, ProjectionB, ProjectionMatrix, Rank1Resolvent,
    ScalarProgram, SinPoly, Transform, TransformKind, VectorProgram,
};
use crate::random::Rng;
use crate::second_order;

/// Reference Jacobian determinants for `f(M)` with `Mᵢⱼ = (i − j)²`.
pub const JACDET_REFERENCE: [(Spectral, f64, f64); 3] = [
    (Spectral::Square, 4096.0, 1e-3),
    (Spectral::Exp, 939.059, 1e-3),
    (Spectral::Sin, -8.41346e-6, 1e-2),
];

/// How a measured value is judged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    Between(f64, f64),
    Equals(f64),
}

impl Bound {
    pub fn admits(self, v: f64) -> bool {
        match self {
            Bound::AtMost(t) => v <= t,
            Bound::AtLeast(t) => v >= t,
            Bound::Between(lo, hi) => (lo..=hi).contains(&v),
            Bound::Equals(t) => v == t,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::AtMost(t) => write!(f, "<= {t:e}"),
            Bound::AtLeast(t) => write!(f, ">= {t:e}"),
            Bound::Between(lo, hi) => write!(f, "in [{lo}, {hi}]"),
            Bound::Equals(t) => write!(f, "== {t}"),
        }
    }
}

/// One measured quantity and its bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.bound.admits(self.value)
    }

    /// `value / threshold` for upper bounds: how much of the budget is used.
    pub fn usage(&self) -> Option<f64> {
        match self.bound {
            Bound::AtMost(t) if t > 0.0 => Some(self.value / t),
            _ => None,
        }
    }
}

fn at_most(name: impl Into<String>, value: f64, t: f64) -> Check {
    Check {
        name: name.into(),
        value,
        bound: Bound::AtMost(t),
    }
}

fn at_least(name: impl Into<String>, value: f64, t: f64) -> Check {
    Check {
        name: name.into(),
        value,
        bound: Bound::AtLeast(t),
    }
}

fn between(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Check {
    Check {
        name: name.into(),
        value,
        bound: Bound::Between(lo, hi),
    }
}

fn equals(name: impl Into<String>, value: f64, t: f64) -> Check {
    Check {
        name: name.into(),
        value,
        bound: Bound::Equals(t),
    }
}

fn flag(name: impl Into<String>, ok: bool) -> Check {
    equals(name, if ok { 1.0 } else { 0.0 }, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SuiteId {
    Babylonian,
    MatrixFunctionJacdet,
    Kronecker,
    DeterminantRules,
    TridiagAdjoint,
    OdeSensitivity,
    FdSweep,
    EigenPerturbation,
    Hessians,
    AdCrossMode,
    CostModel,
    Linalg,
}

impl SuiteId {
    /// The acceptance criteria in order.
    pub const CRITERIA: [SuiteId; 11] = [
        SuiteId::Babylonian,
        SuiteId::MatrixFunctionJacdet,
        SuiteId::Kronecker,
        SuiteId::DeterminantRules,
        SuiteId::TridiagAdjoint,
        SuiteId::OdeSensitivity,
        SuiteId::FdSweep,
        SuiteId::EigenPerturbation,
        SuiteId::Hessians,
        SuiteId::AdCrossMode,
        SuiteId::CostModel,
    ];

    /// Everything `matcalc check` runs.
    pub const ALL: [SuiteId; 12] = [
        SuiteId::Linalg,
        SuiteId::Babylonian,
        SuiteId::MatrixFunctionJacdet,
        SuiteId::Kronecker,
        SuiteId::DeterminantRules,
        SuiteId::TridiagAdjoint,
        SuiteId::OdeSensitivity,
        SuiteId::FdSweep,
        SuiteId::EigenPerturbation,
        SuiteId::Hessians,
        SuiteId::AdCrossMode,
        SuiteId::CostModel,
    ];

    pub fn key(self) -> &'static str {
        match self {
            SuiteId::Babylonian => "babylonian",
            SuiteId::MatrixFunctionJacdet => "matrix-function-jacdet",
            SuiteId::Kronecker => "kronecker",
            SuiteId::DeterminantRules => "determinant-rules",
            SuiteId::TridiagAdjoint => "tridiag-adjoint",
            SuiteId::OdeSensitivity => "ode-sensitivity",
            SuiteId::FdSweep => "fd-sweep",
            SuiteId::EigenPerturbation => "eigen-perturbation",
            SuiteId::Hessians => "hessians",
            SuiteId::AdCrossMode => "ad-cross-mode",
            SuiteId::CostModel => "cost-model",
            SuiteId::Linalg => "linalg",
        }
    }

    /// Acceptance-criterion number, if this suite is one.
    pub fn criterion(self) -> Option<usize> {
        SuiteId::CRITERIA.iter().position(|&s| s == self).map(|i| i + 1)
    }
}

impl FromStr for SuiteId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SuiteId::ALL
            .into_iter()
            .find(|id| id.key() == s)
            .ok_or_else(|| Error::Contract(format!("unknown suite '{s}'")))
    }
}

/// A deliberate sign flip in one analytic derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    DetGradient,
    TridiagAdjoint,
    OdeAdjoint,
    EigenDerivative,
    HessianVector,
}

impl Fault {
    pub const ALL: [Fault; 5] = [
        Fault::DetGradient,
        Fault::TridiagAdjoint,
        Fault::OdeAdjoint,
        Fault::EigenDerivative,
        Fault::HessianVector,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fault::DetGradient => "det-gradient",
            Fault::TridiagAdjoint => "tridiag-adjoint",
            Fault::OdeAdjoint => "ode-adjoint",
            Fault::EigenDerivative => "eigen-derivative",
            Fault::HessianVector => "hessian-vector",
        }
    }

    /// The suite that should catch this fault.
    pub fn target(self) -> SuiteId {
        match self {
            Fault::DetGradient => SuiteId::DeterminantRules,
            Fault::TridiagAdjoint => SuiteId::TridiagAdjoint,
            Fault::OdeAdjoint => SuiteId::OdeSensitivity,
            Fault::EigenDerivative => SuiteId::EigenPerturbation,
            Fault::HessianVector => SuiteId::Hessians,
        }
    }
}

impl FromStr for Fault {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Fault::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown fault '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SuiteOptions {
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl SuiteOptions {
    fn sign(&self, f: Fault) -> f64 {
        if self.fault == Some(f) {
            -1.0
        } else {
            1.0
        }
    }

    fn rng(&self, id: SuiteId) -> Rng {
        let salt = SuiteId::ALL.iter().position(|&s| s == id).unwrap_or(0) as u64;
        Rng::seeded(self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt))
    }
}

/// Result of one suite. `error` is set when the experiment itself failed.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub id: SuiteId,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    pub numeric_error: bool,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }

    /// The first failing check, else the upper-bounded check closest to its limit.
    pub fn worst(&self) -> Option<&Check> {
        self.failures().next().or_else(|| {
            self.checks
                .iter()
                .filter_map(|c| c.usage().map(|u| (u, c)))
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, c)| c)
        })
    }

    /// `PASS`/`FAIL`, the suite key, the check tally and the worst residual.
    pub fn summary_line(&self) -> String {
        let label = match self.id.criterion() {
            Some(n) => format!("criterion {n:>2} {}", self.id.key()),
            None => format!("suite        {}", self.id.key()),
        };
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let ok = self.checks.iter().filter(|c| c.passed()).count();
        let tail = match (&self.error, self.worst()) {
            (Some(e), _) => format!("error: {e}"),
            (None, Some(c)) => format!("worst: {} = {:e} ({})", c.name, c.value, c.bound),
            (None, None) => String::new(),
        };
        format!("{verdict} {label}: {ok}/{} checks; {tail}", self.checks.len())
    }
}

pub fn run_suite(id: SuiteId, opts: &SuiteOptions) -> SuiteReport {
    let mut rng = opts.rng(id);
    let out = match id {
        SuiteId::Babylonian => babylonian(),
        SuiteId::MatrixFunctionJacdet => matrix_function_jacdet(),
        SuiteId::Kronecker => kronecker(&mut rng),
        SuiteId::DeterminantRules => determinant_rules(&mut rng, opts),
        SuiteId::TridiagAdjoint => tridiag_adjoint(&mut rng, opts),
        SuiteId::OdeSensitivity => ode_sensitivity(opts),
        SuiteId::FdSweep => fd_sweep(&mut rng),
        SuiteId::EigenPerturbation => eigen_perturbation(&mut rng, opts),
        SuiteId::Hessians => hessians(&mut rng, opts),
        SuiteId::AdCrossMode => ad_cross_mode(&mut rng),
        SuiteId::CostModel => cost_model(&mut rng),
        SuiteId::Linalg => linalg(&mut rng),
    };
    match out {
        Ok(checks) => SuiteReport {
            id,
            checks,
            error: None,
            numeric_error: false,
        },
        Err(e) => SuiteReport {
            id,
            checks: Vec::new(),
            numeric_error: e.is_numeric(),
            error: Some(e.to_string()),
        },
    }
}

pub fn run_criteria(opts: &SuiteOptions) -> Vec<SuiteReport> {
    SuiteId::CRITERIA.iter().map(|&id| run_suite(id, opts)).collect()
}

pub fn run_all(opts: &SuiteOptions) -> Vec<SuiteReport> {
    SuiteId::ALL.iter().map(|&id| run_suite(id, opts)).collect()
}

fn srel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn vrel(a: &DenseVector, b: &DenseVector) -> f64 {
    (a - b).norm() / b.norm()
}

fn mrel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    (a - b).frobenius_norm() / b.frobenius_norm()
}

fn fd_step(scale: f64) -> f64 {
    fdcheck::MACHINE_EPSILON.sqrt() * (1.0 + scale)
}

fn babylonian() -> Result<Vec<Check>> {
    let golden = [
        (1, 2.5),
        (2, 2.05),
        (3, 2.000609756097561),
        (4, 2.0000000929222947),
        (10, 2.0),
    ];
    let mut checks = Vec::new();
    for (n, expect) in golden {
        let got = forward::babylonian(4.0, n)?;
        checks.push(at_most(
            format!("babylonian(4, {n}) relative error"),
            srel(got, expect),
            1e-15,
        ));
    }
    let d = forward::babylonian(Dual::variable(49.0), 10)?;
    checks.push(at_most(
        "dual derivative at 49 absolute error",
        (d.deriv - 0.07142857142857142).abs(),
        1e-15,
    ));
    Ok(checks)
}

/// Finite-difference and closed-form Jacobian determinants of `f(M)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacdetRow {
    pub function: Spectral,
    pub fd: f64,
    pub formula: f64,
    /// `|fd − formula| / |formula|`.
    pub rel_diff: f64,
    pub reference: f64,
    pub tolerance: f64,
}

pub fn jacdet_experiment() -> Result<Vec<JacdetRow>> {
    let m = kron::squared_distance_matrix(3);
    let lambda = jacobi_eigen(&m)?.lambda;
    JACDET_REFERENCE
        .iter()
        .map(|&(function, reference, tolerance)| {
            let fd = det(&kron::jacobian_matrix_function(&function, &m)?)?;
            let formula = kron::theoretical_jacdet(&function, &lambda)?;
            Ok(JacdetRow {
                function,
                fd,
                formula,
                rel_diff: srel(fd, formula),
                reference,
                tolerance,
            })
        })
        .collect()
}

fn matrix_function_jacdet() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for row in jacdet_experiment()? {
        let name = row.function.name();
        checks.push(at_most(
            format!("{name}: fd vs reference"),
            srel(row.fd, row.reference),
            row.tolerance,
        ));
        checks.push(at_most(
            format!("{name}: formula vs reference"),
            srel(row.formula, row.reference),
            row.tolerance,
        ));
        checks.push(at_most(format!("{name}: fd vs formula"), row.rel_diff, 1e-2));
        if row.function == Spectral::Sin {
            checks.push(flag(
                "sin: fd sign matches reference",
                row.fd.signum() == row.reference.signum(),
            ));
            checks.push(flag(
                "sin: formula sign matches reference",
                row.formula.signum() == row.reference.signum(),
            ));
        }
    }
    Ok(checks)
}

fn kronecker(rng: &mut Rng) -> Result<Vec<Check>> {
    let mut worst_symbolic: f64 = 0.0;
    for _ in 0..20 {
        let (p, q, r, s) = (rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian());
        let a = DenseMatrix::from_rows(&[[p, r], [q, s]]);
        let expect = DenseMatrix::from_rows(&[
            [2.0 * p, r, q, 0.0],
            [q, p + s, 0.0, q],
            [r, 0.0, p + s, r],
            [0.0, r, q, 2.0 * s],
        ]);
        worst_symbolic = worst_symbolic.max((&kron::jac_square_vec(&a)? - &expect).max_abs());
    }
    let mut worst_vec: f64 = 0.0;
    for _ in 0..200 {
        let dims: Vec<usize> = (0..4).map(|_| 1 + rng.index(5)).collect();
        let a = rng.gaussian_matrix(dims[0], dims[1]);
        let b = rng.gaussian_matrix(dims[2], dims[3]);
        let c = rng.gaussian_matrix(dims[3], dims[1]);
        worst_vec = worst_vec.max(kron::kron_vec_identity_check(&a, &b, &c)?);
    }
    let suite = kron::kron_identity_suite(rng, 50)?;
    let mut checks = vec![
        at_most("symbolic 2x2 square Jacobian max deviation", worst_symbolic, 1e-12),
        at_most("(A kron B) vec C = vec(B C A^T) worst residual", worst_vec, 1e-12),
    ];
    checks.extend(
        suite
            .entries
            .iter()
            .map(|e| at_most(format!("identity: {}", e.name), e.max_residual, 1e-10)),
    );
    Ok(checks)
}

fn determinant_rules(rng: &mut Rng, opts: &SuiteOptions) -> Result<Vec<Check>> {
    let sign = opts.sign(Fault::DetGradient);
    let mut worst_cof: f64 = 0.0;
    for _ in 0..20 {
        let (a, b, c, d) = (rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian());
        let m = DenseMatrix::from_rows(&[[a, b], [c, d]]);
        let g = rules::grad_det(&m)?.scale(sign);
        let expect = DenseMatrix::from_rows(&[[d, -c], [-b, a]]);
        worst_cof = worst_cof.max((&g - &expect).max_abs());
    }

    let a = rng.well_conditioned(4);
    let e = rng.gaussian_matrix(4, 4);
    let h = 1e-6;
    let fd_inv = (&lu_inverse(&a.axpy(h, &e))? - &lu_inverse(&a)?).scale(1.0 / h);
    let inv_err = mrel(&rules::d_inverse(&a, &e)?, &fd_inv);

    let hd = fd_step(a.frobenius_norm());
    let fd_det = (det(&a.axpy(hd, &e))? - det(&a.axpy(-hd, &e))?) / (2.0 * hd);
    let det_err = srel(rules::grad_det(&a)?.scale(sign).frobenius_dot(&e), fd_det);

    let spd = &(&a.transpose() * &a) + &DenseMatrix::identity(4);
    let hl = fd_step(spd.frobenius_norm());
    let ld = |m: &DenseMatrix| -> Result<f64> { Ok(det(m)?.ln()) };
    let fd_ld = (ld(&spd.axpy(hl, &e))? - ld(&spd.axpy(-hl, &e))?) / (2.0 * hl);
    let logdet_err = srel(rules::d_logdet(&spd, &e)?, fd_ld);

    let s = rng.symmetric_matrix(4);
    let lam = jacobi_eigen(&s)?.lambda;
    let x = lam[0] - 0.37;
    let hc = 1e-6 * (1.0 + x.abs());
    let fd_cp = (rules::charpoly(&s, x + hc)? - rules::charpoly(&s, x - hc)?) / (2.0 * hc);
    let charpoly_err = srel(rules::d_charpoly(&s, x)?, fd_cp);

    let f = rng.gaussian_matrix(4, 4);
    let h2 = 1e-4;
    let at = |se: f64, sf: f64| det(&a.axpy(se * h2, &e).axpy(sf * h2, &f));
    let sd = at(1.0, 1.0)? - at(1.0, -1.0)? - at(-1.0, 1.0)? + at(-1.0, -1.0)?;
    let second_err = srel(sd / (4.0 * h2 * h2), rules::second_det(&a, &e, &f)?);

    Ok(vec![
        at_most(
            "grad_det vs 2x2 cofactor [[d,-c],[-b,a]] max deviation",
            worst_cof,
            1e-12,
        ),
        at_most("d_inverse vs forward difference", inv_err, 1e-5),
        at_most("grad_det pairing vs central difference", det_err, 1e-5),
        at_most("d_logdet vs central difference", logdet_err, 1e-5),
        at_most("d_charpoly vs central difference", charpoly_err, 1e-5),
        at_most("second_det vs second difference", second_err, 1e-3),
    ])
}

fn tridiag_adjoint(rng: &mut Rng, opts: &SuiteOptions) -> Result<Vec<Check>> {
    let sign = opts.sign(Fault::TridiagAdjoint);
    let mut checks = Vec::new();
    for n in [10usize, 100, 1000] {
        let prob = TridiagProblem::random(rng, n)?;
        let (r, c) = counters::measure(|| value_and_grad_g(&prob));
        let (g0, grad) = r?;
        let grad = grad.scale(sign);
        let dp = random_dp(rng, &prob.p);
        let actual = g_eval(&prob.with_params(&prob.p + &dp)?)? - g0;
        let predicted = grad.dot(&dp);
        checks.push(at_most(
            format!("n={n}: directional derivative vs difference"),
            (predicted - actual).abs() / actual.abs().max(f64::MIN_POSITIVE),
            1e-3,
        ));
        checks.push(equals(
            format!("n={n}: tridiagonal solves"),
            c.tridiag_solves as f64,
            2.0,
        ));
    }
    let mut counts = Vec::new();
    for k in 8..=11 {
        let prob = TridiagProblem::random(rng, 1 << k)?;
        let (r, c) = counters::measure(|| value_and_grad_g(&prob));
        r?;
        counts.push(c.flops as f64);
    }
    for (i, w) in counts.windows(2).enumerate() {
        checks.push(between(
            format!("op count ratio n=2^{} -> 2^{}", 8 + i, 9 + i),
            w[1] / w[0],
            1.8,
            2.3,
        ));
    }
    let v = |xs: &[f64]| DenseVector::new(xs.to_vec());
    let hand = TridiagProblem::new(v(&[2.0, 2.0])?, v(&[1.0])?, v(&[1.0, 0.0])?, v(&[0.0, 1.0])?)?;
    let g = value_and_grad_g(&hand)?.1.scale(sign);
    checks.push(at_most(
        "hand instance dg/dp1 vs 10/27",
        (g[0] - 10.0 / 27.0).abs(),
        1e-12,
    ));
    Ok(checks)
}

fn ode_sensitivity(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let sign = opts.sign(Fault::OdeAdjoint);
    let prob = ReferenceProblem::default();
    let p = ReferenceProblem::reference_params();
    let mut checks = Vec::new();
    for (steps, tol) in [(2000usize, 1e-3), (8000, 1e-4)] {
        let fwd = odesens::grad_G_forward(&prob, &p, steps)?;
        let (adj, c) = counters::measure(|| odesens::grad_G_adjoint(&prob, &p, steps));
        let adj = adj?.scale(sign);
        let fd = odesens::grad_G_fd(&prob, &p, steps)?;
        checks.push(at_most(
            format!("{steps} steps: forward vs adjoint"),
            vrel(&fwd, &adj),
            tol,
        ));
        checks.push(at_most(format!("{steps} steps: forward vs fd"), vrel(&fwd, &fd), tol));
        checks.push(at_most(format!("{steps} steps: adjoint vs fd"), vrel(&adj, &fd), tol));
        checks.push(equals(
            format!("{steps} steps: adjoint integrations"),
            c.ode_integrations as f64,
            2.0,
        ));
    }
    Ok(checks)
}

/// The error sweep for `f(A) = A²` along a unit-Frobenius Gaussian direction,
/// with either the correct derivative `A δA + δA A` or the wrong `2A δA`.
pub fn square_sweep(rng: &mut Rng, n: usize, wrong: bool) -> Result<Vec<fdcheck::SweepRow>> {
    let a = rng.gaussian_matrix(n, n);
    let e = rng.unit_matrix(n, n);
    square_sweep_at(&a, &e, wrong)
}

pub fn square_sweep_at(a: &DenseMatrix, e: &DenseMatrix, wrong: bool) -> Result<Vec<fdcheck::SweepRow>> {
    fdcheck::error_sweep(
        |m: &DenseMatrix| Ok(m * m),
        |d: &DenseMatrix| Ok(if wrong { (a * d).scale(2.0) } else { &(a * d) + &(d * a) }),
        a,
        e,
        &fdcheck::default_scales(),
    )
}

fn fd_sweep(rng: &mut Rng) -> Result<Vec<Check>> {
    let a = rng.gaussian_matrix(4, 4);
    let e = rng.unit_matrix(4, 4);
    let rows = square_sweep_at(&a, &e, false)?;
    let shape = fdcheck::sweep_shape(&rows).ok_or_else(|| Error::Contract("empty sweep".into()))?;
    let at = |rows: &[fdcheck::SweepRow]| {
        rows.iter()
            .find(|r| r.scale == 1e-8)
            .map(|r| r.relative_error)
            .ok_or_else(|| Error::Contract("sweep lacks the 1e-8 scale".into()))
    };
    let wrong = square_sweep_at(&a, &e, true)?;
    Ok(vec![
        flag(
            "error decreases then increases with interior minimum",
            shape.is_valley(rows.len()),
        ),
        between("argmin scale", shape.argmin_scale, 1e-10, 1e-6),
        at_most("correct derivative relative error at 1e-8", at(&rows)?, 1e-6),
        at_least("wrong candidate relative error at 1e-8", at(&wrong)?, 0.1),
    ])
}

fn eigen_perturbation(rng: &mut Rng, opts: &SuiteOptions) -> Result<Vec<Check>> {
    let sign = opts.sign(Fault::EigenDerivative);
    let s = rng.symmetric_matrix(5);
    let e = rng.symmetric_matrix(5);
    let base = jacobi_eigen(&s)?;
    let dl = eigsens::dlambda(&base, &e)?.scale(sign);
    let h = 1e-6;
    let moved = jacobi_eigen(&s.axpy(h, &e))?;
    let fd = (&moved.lambda - &base.lambda).scale(1.0 / h);
    let fd_err = fdcheck::relative_error(&dl, &fd)?;
    let trace_err = (dl.sum() - e.trace()).abs();

    let lam = DenseVector::new(vec![-1.5, 0.2, 1.1, 3.0])?;
    let pert = rng.symmetric_matrix(4);
    let diag = DenseMatrix::diag(lam.as_slice());
    let taylor_err = |eps: f64| -> Result<f64> {
        let series = eigsens::second_order_taylor(&lam, &pert, eps)?;
        let exact = jacobi_eigen(&diag.axpy(eps, &pert))?.lambda;
        Ok((&series - &exact).norm_inf())
    };
    let (e1, e2) = (taylor_err(1e-2)?, taylor_err(5e-3)?);
    let c = e1 / 1e-6;

    let p = eigsens::perturbation(&base, &e)?;
    let anti = (&p.qt_dq + &p.qt_dq.transpose()).max_abs();
    Ok(vec![
        at_most("dlambda vs forward difference relative error", fd_err, 1e-4),
        at_most("sum of dlambda vs tr(dS)", trace_err, 1e-12),
        between("Taylor error ratio for eps halved", e1 / e2, 5.0, 11.0),
        at_most("Taylor error at eps/2 over C eps^3", e2 / (c * 5e-3f64.powi(3)), 1.5),
        at_most("Q^T dQ antisymmetry defect", anti, 1e-12),
    ])
}

fn fd_gradient_jacobian<P: ScalarProgram>(f: &P, x: &DenseVector) -> Result<DenseMatrix> {
    let n = x.len();
    let h = 1e-5;
    let cols: Result<Vec<DenseVector>> = (0..n)
        .map(|j| {
            let e = DenseVector::unit(n, j);
            Ok((&f.gradient_reverse(&x.axpy(h, &e))? - &f.gradient_reverse(&x.axpy(-h, &e))?).scale(0.5 / h))
        })
        .collect();
    DenseMatrix::from_columns(&cols?)
}

fn hessians(rng: &mut Rng, opts: &SuiteOptions) -> Result<Vec<Check>> {
    let sign = opts.sign(Fault::HessianVector);
    let x = rng.uniform_vector(2, -1.5, 1.5);
    let (a, b) = (x[0], x[1]);
    let closed = DenseMatrix::from_rows(&[
        [-a.sin() + 2.0 * b.powi(3), 6.0 * a * b * b],
        [6.0 * a * b * b, 6.0 * a * a * b],
    ]);
    let h = second_order::hessian(&SinPoly, &x)?.matrix.scale(sign);
    let mut checks = vec![at_most(
        "sin(x1) + x1^2 x2^3 Hessian max entry deviation",
        (&h - &closed).max_abs(),
        1e-10,
    )];

    let (mut sym, mut fd): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let n = 1 + rng.index(6);
        let f = GeneratedProgram::random(rng, n, 4);
        let x = rng.uniform_vector(n, -1.0, 1.0);
        let hs = second_order::hessian(&f, &x)?;
        sym = sym.max(hs.symmetry_defect);
        let m = hs.matrix.scale(sign);
        fd = fd.max((&m - &fd_gradient_jacobian(&f, &x)?).max_abs() / (1.0 + m.max_abs()));
    }
    checks.push(at_most("generated programs: worst Hessian symmetry defect", sym, 1e-10));
    checks.push(at_most("generated programs: worst Hessian vs FD of gradient", fd, 1e-5));

    let (f, g) = (InvNorm { n: 4 }, CubeSum { n: 4 });
    // g(grad f) = -(sum x)^3 / |x|^9 cancels near sum x = 0, where a
    // difference quotient keeps no digits, so stay clear of that plane.
    let x = loop {
        let x = rng.gaussian_vector(4);
        if x.sum().abs() >= 0.1 * x.norm() {
            break x;
        }
    };
    let grad = second_order::grad_of_grad_function(&f, &g, &x)?.scale(sign);
    let (sx, r) = (x.sum(), x.norm());
    let closed = DenseVector::ones(4)
        .scale(-3.0 * sx * sx / r.powi(9))
        .axpy(9.0 * sx.powi(3) / r.powi(11), &x);
    checks.push(at_most(
        "grad of g(grad f) vs closed form",
        fdcheck::relative_error(&grad, &closed)?,
        1e-10,
    ));
    let comp = |y: &DenseVector| second_order::grad_composite_value(&f, &g, y);
    let fd: Result<Vec<f64>> = (0..4)
        .map(|k| {
            // 1/|x| varies on the length scale |x|
            let h = 1e-5 * x.norm();
            let e = DenseVector::unit(4, k);
            Ok((comp(&x.axpy(h, &e))? - comp(&x.axpy(-h, &e))?) / (2.0 * h))
        })
        .collect();
    checks.push(at_most(
        "grad of g(grad f) vs central difference",
        fdcheck::relative_error(&grad, &DenseVector::new(fd?)?)?,
        1e-6,
    ));
    Ok(checks)
}

fn triple_checks(name: &str, rep: &TripleReport) -> [Check; 2] {
    [
        at_most(
            format!("{name}: analytic vs AD"),
            rep.worst_ad(),
            fdcheck::TRIPLE_AD_TOL,
        ),
        at_most(
            format!("{name}: analytic vs FD"),
            rep.worst_fd(),
            fdcheck::TRIPLE_FD_TOL,
        ),
    ]
}

fn ad_cross_mode(rng: &mut Rng) -> Result<Vec<Check>> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 1 + rng.index(6);
        let f = GeneratedProgram::random(rng, n, 8);
        let x = rng.uniform_vector(n, -1.0, 1.0);
        let r = f.gradient_reverse(&x)?;
        let fw = f.gradient_forward(&x)?;
        worst = worst.max((&r - &fw).norm() / (1.0 + fw.norm()));
    }
    let mut checks = vec![at_most("generated programs: reverse vs forward gradient", worst, 1e-10)];

    let mut worst_hyp: f64 = 0.0;
    for kind in TransformKind::ALL {
        let mut ad: f64 = 0.0;
        let mut fd: f64 = 0.0;
        for k in 0..20 {
            let theta = rng.uniform(-2.0, 2.0);
            let pt = rng.gaussian_vector(2);
            let t = Transform { kind, theta };
            let action =
                |x: &DenseVector, d: &DenseVector| Ok(rules::analytic_transform_jacobians(kind, theta, x)?.matvec(d));
            let mode = if k % 2 == 0 { AdMode::Forward } else { AdMode::Reverse };
            let rep = fdcheck::triple_check(&t, action, mode, &pt, 2, rng)?;
            ad = ad.max(rep.worst_ad());
            fd = fd.max(rep.worst_fd());
            if kind == TransformKind::Hyperbolic {
                let j = rules::analytic_transform_jacobians(kind, theta, &pt)?;
                worst_hyp = worst_hyp.max((det(&j)? - 1.0).abs() / theta.cosh().powi(2));
            }
        }
        checks.push(at_most(
            format!("{}: analytic vs AD", kind.name()),
            ad,
            fdcheck::TRIPLE_AD_TOL,
        ));
        checks.push(at_most(
            format!("{}: analytic vs FD", kind.name()),
            fd,
            fdcheck::TRIPLE_FD_TOL,
        ));
    }
    checks.push(at_most("hyperbolic: |det J - 1| / cosh^2", worst_hyp, 1e-12));

    let n = 4;
    let x = rng.gaussian_vector(n);
    let b = rng.gaussian_vector(n);
    let pb = ProjectionB { b: b.clone() };
    let rep = fdcheck::triple_check(
        &pb,
        |x: &DenseVector, d: &DenseVector| Ok(rules::jacobian_projection_b(x, &b)?.matvec(d)),
        AdMode::Reverse,
        &x,
        5,
        rng,
    )?;
    checks.extend(triple_checks("projection (x x^T / x^T x) b", &rep));

    let pm = ProjectionMatrix { n };
    let rep = fdcheck::triple_check(
        &pm,
        |x: &DenseVector, d: &DenseVector| Ok(kron::vec(&rules::d_projection(x, d)?).data),
        AdMode::Forward,
        &x,
        5,
        rng,
    )?;
    checks.extend(triple_checks("projection matrix x x^T / x^T x", &rep));

    let a = rng.well_conditioned(n);
    let ai = lu_inverse(&a)?;
    let (y, bb) = (rng.gaussian_vector(n), rng.gaussian_vector(n));
    let r1 = Rank1Resolvent::new(&ai, &y, &bb)?;
    let rep = fdcheck::triple_check(
        &r1,
        |x: &DenseVector, d: &DenseVector| Ok(rules::jacobian_rank1_resolvent(&ai, &y, x, &bb)?.matvec(d)),
        AdMode::Reverse,
        &x,
        5,
        rng,
    )?;
    checks.extend(triple_checks("rank-1 resolvent (A + y x^T)^-1 b", &rep));

    let s = rng.symmetric_matrix(n);
    let dq = AsVector(DiagmQuadratic { a: s.clone() });
    let rep = fdcheck::triple_check(
        &dq,
        |x: &DenseVector, d: &DenseVector| DenseVector::new(vec![rules::grad_diagm_quadratic(&s, x)?.dot(d)]),
        AdMode::Forward,
        &x,
        5,
        rng,
    )?;
    checks.extend(triple_checks("diagm quadratic", &rep));
    debug_assert_eq!(dq.dim_out(), 1);
    Ok(checks)
}

fn cost_model(rng: &mut Rng) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut counts = Vec::new();
    for k in 5..=9 {
        let n = 1usize << k;
        let ai = rng.gaussian_matrix(n, n);
        let (x, y, b) = (rng.gaussian_vector(n), rng.gaussian_vector(n), rng.gaussian_vector(n));
        let (r, c) = counters::measure(|| rules::jacobian_rank1_resolvent(&ai, &y, &x, &b));
        r?;
        counts.push((n, c.flops as f64));
    }
    for w in counts.windows(2) {
        checks.push(at_most(
            format!("rank-1 Jacobian op ratio n={} -> {}", w[0].0, w[1].0),
            w[1].1 / w[0].1,
            4.4,
        ));
    }
    let m = 32;
    let (a, b, c) = (
        rng.gaussian_matrix(m, m),
        rng.gaussian_matrix(m, m),
        rng.gaussian_matrix(m, m),
    );
    let (r1, slow) = counters::measure(|| kron::kron_apply_materialized(&a, &b, &c));
    let (r2, fast) = counters::measure(|| kron::kron_apply_direct(&a, &b, &c));
    r1?;
    r2?;
    checks.push(at_least(
        "m=32: materialized / direct op count",
        slow.flops as f64 / fast.flops as f64,
        m as f64 / 2.0,
    ));
    Ok(checks)
}

fn linalg(rng: &mut Rng) -> Result<Vec<Check>> {
    let mut det_inv: f64 = 0.0;
    for _ in 0..100 {
        let n = 1 + rng.index(6);
        let a = rng.uniform_matrix(n, n, -1.0, 1.0);
        let d = det(&a).unwrap_or(0.0);
        if d.abs() > 1e-6 {
            det_inv = det_inv.max((d * det(&lu_inverse(&a)?)? - 1.0).abs());
        }
    }
    let mut thomas: f64 = 0.0;
    for _ in 0..200 {
        let n = 3 + rng.index(62);
        let t = TridiagProblem::random(rng, n)?.matrix()?;
        let b = rng.gaussian_vector(n);
        let y = lu_solve(&t.densify(), &b)?;
        thomas = thomas.max(vrel(&thomas_solve(&t, &b)?, &y));
    }
    let (mut recon, mut orth): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let n = 1 + rng.index(10);
        let s = rng.symmetric_matrix(n);
        let e = jacobi_eigen(&s)?;
        recon = recon.max(mrel(&e.reconstruct(), &s));
        orth = orth.max(e.orthogonality_defect() / n as f64);
    }
    Ok(vec![
        at_most("det(A) det(A^-1) - 1", det_inv, 1e-8),
        at_most("thomas vs dense LU relative difference", thomas, 1e-9),
        at_most("eigen reconstruction relative residual", recon, 1e-8),
        at_most("eigenvector orthogonality defect / n", orth, 1e-10),
    ])
}
