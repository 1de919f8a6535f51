//! Programs written once against [`Scalar`] and run under every mode.
//!
//! A [`ScalarProgram`] or [`VectorProgram`] can be evaluated on `f64`,
//! pushed forward on duals, or recorded on a tape. The named programs here
//! are the fixed test subjects used by the check suites; [`GeneratedProgram`]
//! builds random expression trees whose domains are guarded so that every
//! input in ℝⁿ is admissible.

use crate::error::{shape_err, Result};
use crate::forward::{self, Dual};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::random::Rng;
use crate::reverse::{self, Var};
use crate::scalar::{self, Scalar};

/// A map ℝⁿ → ℝ.
pub trait ScalarProgram {
    fn dim(&self) -> usize;

    fn eval<S: Scalar>(&self, x: &[S]) -> S;

    fn value(&self, x: &DenseVector) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.eval(x.as_slice()))
    }

    /// One tape recording and one reverse sweep.
    fn gradient_reverse(&self, x: &DenseVector) -> Result<DenseVector> {
        self.check_dim(x)?;
        reverse::gradient(|v| self.eval(v), x)
    }

    /// `n` forward passes; the transpose of the 1×n Jacobian.
    fn gradient_forward(&self, x: &DenseVector) -> Result<DenseVector> {
        self.check_dim(x)?;
        let j = forward::jacobian_forward(|v: &[Dual]| vec![self.eval(v)], x)?;
        Ok(j.row(0))
    }

    fn check_dim(&self, x: &DenseVector) -> Result<()> {
        if x.len() != self.dim() {
            return shape_err(format!("program takes {} inputs, got {}", self.dim(), x.len()));
        }
        Ok(())
    }
}

/// A map ℝⁿ → ℝᵐ.
pub trait VectorProgram {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;

    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S>;

    fn value(&self, x: &DenseVector) -> Result<DenseVector> {
        self.check_dim(x)?;
        Ok(DenseVector::from_vec(self.eval(x.as_slice())))
    }

    fn jacobian_forward(&self, x: &DenseVector) -> Result<DenseMatrix> {
        self.check_dim(x)?;
        forward::jacobian_forward(|v: &[Dual]| self.eval(v), x)
    }

    fn jacobian_reverse(&self, x: &DenseVector) -> Result<DenseMatrix> {
        self.check_dim(x)?;
        reverse::jacobian_reverse(|v: &[Var<'_, f64>]| self.eval(v), x)
    }

    fn check_dim(&self, x: &DenseVector) -> Result<()> {
        if x.len() != self.dim_in() {
            return shape_err(format!("program takes {} inputs, got {}", self.dim_in(), x.len()));
        }
        Ok(())
    }
}

/// Node of a generated expression tree.
///
/// The guarded forms keep every operation finite and smooth on all of ℝ:
/// division is by `b² + 1`, logarithm and square root act on `a² + 1`, and
/// the exponential only sees `sin a`.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Input(usize),
    Const(f64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    SafeDiv(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    ExpSin(Box<Expr>),
    LogSq(Box<Expr>),
    SqrtSq(Box<Expr>),
    Square(Box<Expr>),
}

/// Generated nodes whose magnitude bound exceeds this become `sin` of a fresh subtree.
const MAGNITUDE_CAP: f64 = 100.0;

impl Expr {
    pub fn eval<S: Scalar>(&self, x: &[S]) -> S {
        match self {
            Expr::Input(i) => x[*i],
            Expr::Const(c) => S::constant(*c),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::SafeDiv(a, b) => a.eval(x) / (b.eval(x).square() + 1.0),
            Expr::Neg(a) => -a.eval(x),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
            Expr::ExpSin(a) => a.eval(x).sin().exp(),
            Expr::LogSq(a) => (a.eval(x).square() + 1.0).ln(),
            Expr::SqrtSq(a) => (a.eval(x).square() + 1.0).sqrt(),
            Expr::Square(a) => a.eval(x).powi(2),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Input(_) | Expr::Const(_) => 0,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::SafeDiv(a, b) => 1 + a.depth().max(b.depth()),
            Expr::Neg(a)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::ExpSin(a)
            | Expr::LogSq(a)
            | Expr::SqrtSq(a)
            | Expr::Square(a) => 1 + a.depth(),
        }
    }

    /// Upper bound on `|value|` for inputs in [−1, 1].
    fn bound(&self) -> f64 {
        match self {
            Expr::Input(_) => 1.0,
            Expr::Const(c) => c.abs(),
            Expr::Add(a, b) | Expr::Sub(a, b) => a.bound() + b.bound(),
            Expr::Mul(a, b) => a.bound() * b.bound(),
            Expr::SafeDiv(a, _) => a.bound(),
            Expr::Neg(a) => a.bound(),
            Expr::Sin(_) | Expr::Cos(_) => 1.0,
            Expr::ExpSin(_) => std::f64::consts::E,
            Expr::LogSq(a) => (a.bound().powi(2) + 1.0).ln(),
            Expr::SqrtSq(a) => (a.bound().powi(2) + 1.0).sqrt(),
            Expr::Square(a) => a.bound().powi(2),
        }
    }

    /// Random tree of depth at most `max_depth` over `n_inputs` inputs.
    pub fn random(rng: &mut Rng, n_inputs: usize, max_depth: usize) -> Expr {
        Self::grow(rng, n_inputs, max_depth, true)
    }

    fn grow(rng: &mut Rng, n: usize, depth: usize, root: bool) -> Expr {
        if depth == 0 || (!root && rng.uniform(0.0, 1.0) < 0.2) {
            return if n == 0 || rng.uniform(0.0, 1.0) < 0.25 {
                Expr::Const(rng.uniform(-1.0, 1.0))
            } else {
                Expr::Input(rng.index(n))
            };
        }
        let pick = rng.index(11);
        let flip = rng.index(2);
        let mut sub = || Box::new(Self::grow(rng, n, depth - 1, false));
        let e = match pick {
            0 => Expr::Add(sub(), sub()),
            1 => Expr::Sub(sub(), sub()),
            2 | 3 => Expr::Mul(sub(), sub()),
            4 => Expr::SafeDiv(sub(), sub()),
            5 => Expr::Sin(sub()),
            6 => Expr::Cos(sub()),
            7 => Expr::ExpSin(sub()),
            8 => Expr::LogSq(sub()),
            9 => Expr::SqrtSq(sub()),
            _ if flip == 0 => Expr::Square(sub()),
            _ => Expr::Neg(sub()),
        };
        if e.bound() > MAGNITUDE_CAP {
            Expr::Sin(sub())
        } else {
            e
        }
    }
}

/// A random scalar program: an expression tree plus its input count.
#[derive(Clone, Debug)]
pub struct GeneratedProgram {
    pub n_inputs: usize,
    pub expr: Expr,
}

impl GeneratedProgram {
    pub fn random(rng: &mut Rng, n_inputs: usize, max_depth: usize) -> Self {
        GeneratedProgram {
            n_inputs,
            expr: Expr::random(rng, n_inputs, max_depth),
        }
    }
}

impl ScalarProgram for GeneratedProgram {
    fn dim(&self) -> usize {
        self.n_inputs
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        self.expr.eval(x)
    }
}

/// A random vector program: one tree per output.
#[derive(Clone, Debug)]
pub struct GeneratedVectorProgram {
    pub n_inputs: usize,
    pub outputs: Vec<Expr>,
}

impl GeneratedVectorProgram {
    pub fn random(rng: &mut Rng, n_inputs: usize, n_outputs: usize, max_depth: usize) -> Self {
        GeneratedVectorProgram {
            n_inputs,
            outputs: (0..n_outputs).map(|_| Expr::random(rng, n_inputs, max_depth)).collect(),
        }
    }
}

impl VectorProgram for GeneratedVectorProgram {
    fn dim_in(&self) -> usize {
        self.n_inputs
    }
    fn dim_out(&self) -> usize {
        self.outputs.len()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.outputs.iter().map(|e| e.eval(x)).collect()
    }
}

/// `sin(x₁) + x₁² x₂³`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SinPoly;

impl ScalarProgram for SinPoly {
    fn dim(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        x[0].sin() + x[0].powi(2) * x[1].powi(3)
    }
}

/// `1/‖x‖`.
#[derive(Clone, Copy, Debug)]
pub struct InvNorm {
    pub n: usize,
}

impl ScalarProgram for InvNorm {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        scalar::dot(x, x).sqrt().recip()
    }
}

/// `(Σ zᵢ)³`.
#[derive(Clone, Copy, Debug)]
pub struct CubeSum {
    pub n: usize,
}

impl ScalarProgram for CubeSum {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        scalar::sum(x).powi(3)
    }
}

fn matvec_scalar<S: Scalar>(a: &DenseMatrix, x: &[S]) -> Vec<S> {
    (0..a.rows())
        .map(|i| {
            let mut acc = S::constant(0.0);
            for (j, xj) in x.iter().enumerate() {
                acc = acc + *xj * a[(i, j)];
            }
            acc
        })
        .collect()
}

/// `xᵀAx`.
#[derive(Clone, Debug)]
pub struct QuadForm {
    pub a: DenseMatrix,
}

impl ScalarProgram for QuadForm {
    fn dim(&self) -> usize {
        self.a.cols()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        scalar::dot(x, &matvec_scalar(&self.a, x))
    }
}

/// `xᵀ(A + diagm x)² x` for symmetric `A`, evaluated as `‖(A + diagm x)x‖²`.
#[derive(Clone, Debug)]
pub struct DiagmQuadratic {
    pub a: DenseMatrix,
}

impl ScalarProgram for DiagmQuadratic {
    fn dim(&self) -> usize {
        self.a.cols()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let ax = matvec_scalar(&self.a, x);
        let z: Vec<S> = ax.iter().zip(x).map(|(&p, &xi)| p + xi * xi).collect();
        scalar::dot(&z, &z)
    }
}

/// `g(x) = (xxᵀ/xᵀx) b`.
#[derive(Clone, Debug)]
pub struct ProjectionB {
    pub b: DenseVector,
}

impl VectorProgram for ProjectionB {
    fn dim_in(&self) -> usize {
        self.b.len()
    }
    fn dim_out(&self) -> usize {
        self.b.len()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let mut xb = S::constant(0.0);
        for (xi, bi) in x.iter().zip(self.b.iter()) {
            xb = xb + *xi * *bi;
        }
        let coef = xb / scalar::dot(x, x);
        x.iter().map(|&xi| xi * coef).collect()
    }
}

/// `vec(xxᵀ/xᵀx)`, n² outputs.
#[derive(Clone, Copy, Debug)]
pub struct ProjectionMatrix {
    pub n: usize,
}

impl VectorProgram for ProjectionMatrix {
    fn dim_in(&self) -> usize {
        self.n
    }
    fn dim_out(&self) -> usize {
        self.n * self.n
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let inv = scalar::dot(x, x).recip();
        let mut out = Vec::with_capacity(self.n * self.n);
        for j in 0..self.n {
            for i in 0..self.n {
                out.push(x[i] * x[j] * inv);
            }
        }
        out
    }
}

/// `f(x) = (A + yxᵀ)⁻¹ b` with `A`, `y`, `b` fixed.
///
/// Stored as `u = A⁻¹b` and `w = A⁻¹y`, so that the rank-1 identity gives
/// `f(x) = u − w (xᵀu)/(1 + xᵀw)` exactly.
#[derive(Clone, Debug)]
pub struct Rank1Resolvent {
    pub u: DenseVector,
    pub w: DenseVector,
}

impl Rank1Resolvent {
    pub fn new(a_inv: &DenseMatrix, y: &DenseVector, b: &DenseVector) -> Result<Self> {
        if !a_inv.is_square() || a_inv.rows() != y.len() || y.len() != b.len() {
            return shape_err("rank-1 resolvent: inconsistent dimensions");
        }
        Ok(Rank1Resolvent {
            u: a_inv.matvec(b),
            w: a_inv.matvec(y),
        })
    }
}

impl VectorProgram for Rank1Resolvent {
    fn dim_in(&self) -> usize {
        self.u.len()
    }
    fn dim_out(&self) -> usize {
        self.u.len()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let mut xu = S::constant(0.0);
        let mut xw = S::constant(1.0);
        for (i, &xi) in x.iter().enumerate() {
            xu = xu + xi * self.u[i];
            xw = xw + xi * self.w[i];
        }
        let coef = xu / xw;
        (0..x.len()).map(|i| -(coef * self.w[i]) + self.u[i]).collect()
    }
}

/// The planar maps with closed-form Jacobians.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformKind {
    /// `R(θ)x` with `R(θ) = [[cos θ, sin θ], [−sin θ, cos θ]]`.
    Rotate,
    /// `[[cosh θ, sinh θ], [sinh θ, cosh θ]] x`.
    Hyperbolic,
    /// `(x, y + θx²)`.
    Shear,
    /// `R(θ‖x‖) x`.
    Warp,
}

impl TransformKind {
    pub const ALL: [TransformKind; 4] = [
        TransformKind::Rotate,
        TransformKind::Hyperbolic,
        TransformKind::Shear,
        TransformKind::Warp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Rotate => "rotate",
            TransformKind::Hyperbolic => "hyperbolic",
            TransformKind::Shear => "shear",
            TransformKind::Warp => "warp",
        }
    }
}

impl std::str::FromStr for TransformKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| crate::Error::Contract(format!("unknown transform '{s}'")))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Transform {
    pub kind: TransformKind,
    pub theta: f64,
}

impl VectorProgram for Transform {
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let (a, b) = (x[0], x[1]);
        let t = self.theta;
        match self.kind {
            TransformKind::Rotate => {
                let (s, c) = t.sin_cos();
                vec![a * c + b * s, b * c - a * s]
            }
            TransformKind::Hyperbolic => {
                let (s, c) = (t.sinh(), t.cosh());
                vec![a * c + b * s, a * s + b * c]
            }
            TransformKind::Shear => vec![a, b + a * a * t],
            TransformKind::Warp => {
                let phi = (a * a + b * b).sqrt() * t;
                let (s, c) = (phi.sin(), phi.cos());
                vec![a * c + b * s, b * c - a * s]
            }
        }
    }
}

/// Adapts a [`ScalarProgram`] to the one-output [`VectorProgram`] interface.
#[derive(Clone, Debug)]
pub struct AsVector<P>(pub P);

impl<P: ScalarProgram> VectorProgram for AsVector<P> {
    fn dim_in(&self) -> usize {
        self.0.dim()
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        vec![self.0.eval(x)]
    }
}
