//! Forward-mode AD with dual numbers `a + bε`, `ε² = 0`.
//!
//! Arithmetic on [`Dual`] computes the primal exactly as real arithmetic
//! would and never reads the tangent to do so. The operator impls are the
//! unchecked fast path; [`dual_div`] and [`dual_elem`] are the checked
//! entry points that report domain errors. Drivers ([`derivative`],
//! [`jacobian_forward`], [`directional_derivative`]) treat any non-finite
//! primal or tangent in the output as a domain error.

use crate::error::{shape_err, Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::scalar::Scalar;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dual {
    pub val: f64,
    pub deriv: f64,
}

impl Dual {
    pub const EPSILON: Dual = Dual { val: 0.0, deriv: 1.0 };

    pub const fn new(val: f64, deriv: f64) -> Dual {
        Dual { val, deriv }
    }

    /// Promotes a constant: `(r, 0)`.
    pub const fn constant(val: f64) -> Dual {
        Dual { val, deriv: 0.0 }
    }

    /// Seeds an independent variable: `(x, 1)`.
    pub const fn variable(val: f64) -> Dual {
        Dual { val, deriv: 1.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.val.is_finite() && self.deriv.is_finite()
    }
}

impl fmt::Display for Dual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}ε", self.val, self.deriv)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.val + o.val, self.deriv + o.deriv)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.val - o.val, self.deriv - o.deriv)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.val * o.val, self.deriv * o.val + self.val * o.deriv)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual::new(
            self.val / o.val,
            (self.deriv * o.val - self.val * o.deriv) / (o.val * o.val),
        )
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.val, -self.deriv)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, c: f64) -> Dual {
        Dual::new(self.val + c, self.deriv)
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, c: f64) -> Dual {
        Dual::new(self.val - c, self.deriv)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, c: f64) -> Dual {
        Dual::new(self.val * c, self.deriv * c)
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    fn div(self, c: f64) -> Dual {
        Dual::new(self.val / c, self.deriv / c)
    }
}

impl Scalar for Dual {
    fn constant(c: f64) -> Self {
        Dual::constant(c)
    }
    fn value(&self) -> f64 {
        self.val
    }
    fn sin(self) -> Self {
        Dual::new(self.val.sin(), self.val.cos() * self.deriv)
    }
    fn cos(self) -> Self {
        Dual::new(self.val.cos(), -self.val.sin() * self.deriv)
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        Dual::new(e, e * self.deriv)
    }
    fn ln(self) -> Self {
        Dual::new(self.val.ln(), self.deriv / self.val)
    }
    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        Dual::new(r, self.deriv / (2.0 * r))
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual::constant(1.0);
        }
        Dual::new(self.val.powi(n), n as f64 * self.val.powi(n - 1) * self.deriv)
    }
}

pub fn dual_add(x: Dual, y: Dual) -> Dual {
    x + y
}

pub fn dual_sub(x: Dual, y: Dual) -> Dual {
    x - y
}

pub fn dual_mul(x: Dual, y: Dual) -> Dual {
    x * y
}

/// Quotient rule, `(a + bε)/(c + dε) = a/c + (bc − ad)/c² ε`.
pub fn dual_div(x: Dual, y: Dual) -> Result<Dual> {
    if y.val == 0.0 {
        return Err(Error::Domain("dual division by a zero primal".into()));
    }
    Ok(x / y)
}

/// Elementary functions available to dual programs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElemKind {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    PowInt(i32),
}

/// `(f(val), f'(val)·deriv)` with domain checks.
///
/// `sqrt` at zero is rejected: it has no derivative there.
pub fn dual_elem(kind: ElemKind, x: Dual) -> Result<Dual> {
    match kind {
        ElemKind::Sin => Ok(x.sin()),
        ElemKind::Cos => Ok(x.cos()),
        ElemKind::Exp => Ok(x.exp()),
        ElemKind::Log if x.val <= 0.0 => Err(Error::Domain(format!("log of {}", x.val))),
        ElemKind::Log => Ok(x.ln()),
        ElemKind::Sqrt if x.val <= 0.0 => Err(Error::Domain(format!("sqrt of {}", x.val))),
        ElemKind::Sqrt => Ok(x.sqrt()),
        ElemKind::PowInt(n) if n < 0 && x.val == 0.0 => Err(Error::Domain(format!("zero to the power {n}"))),
        ElemKind::PowInt(n) => Ok(x.powi(n)),
    }
}

/// Paired primal and tangent vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct DualVector {
    vals: DenseVector,
    derivs: DenseVector,
}

impl DualVector {
    pub fn new(vals: DenseVector, derivs: DenseVector) -> Result<Self> {
        if vals.len() != derivs.len() {
            return shape_err(format!(
                "dual vector with {} values and {} tangents",
                vals.len(),
                derivs.len()
            ));
        }
        Ok(DualVector { vals, derivs })
    }

    pub fn from_duals(d: &[Dual]) -> Self {
        DualVector {
            vals: DenseVector::from_fn(d.len(), |i| d[i].val),
            derivs: DenseVector::from_fn(d.len(), |i| d[i].deriv),
        }
    }

    pub fn to_duals(&self) -> Vec<Dual> {
        self.vals
            .iter()
            .zip(self.derivs.iter())
            .map(|(&v, &d)| Dual::new(v, d))
            .collect()
    }

    pub fn vals(&self) -> &DenseVector {
        &self.vals
    }

    pub fn derivs(&self) -> &DenseVector {
        &self.derivs
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }
}

fn check_finite(out: &[Dual]) -> Result<()> {
    match out.iter().position(|d| !d.is_finite()) {
        Some(i) => Err(Error::Domain(format!("non-finite value or derivative in output {i}"))),
        None => Ok(()),
    }
}

/// `f'(x)` for a scalar program, by seeding `D(x, 1)`.
pub fn derivative<F>(f: F, x: f64) -> Result<f64>
where
    F: Fn(Dual) -> Dual,
{
    let out = f(Dual::variable(x));
    check_finite(&[out])?;
    Ok(out.deriv)
}

/// The Babylonian square-root iteration `t ← (t + x/t)/2`, started at `t = 1`
/// (so one step gives `(1 + x)/2`).
pub fn babylonian<S: Scalar>(x: S, n_steps: usize) -> Result<S> {
    if x.value() <= 0.0 {
        return Err(Error::Domain(format!("babylonian square root of {}", x.value())));
    }
    if n_steps == 0 {
        return Err(Error::Contract("babylonian needs at least one step".into()));
    }
    let mut t = (x + 1.0) / 2.0;
    for _ in 1..n_steps {
        t = (t + x / t) / 2.0;
    }
    Ok(t)
}

/// Jacobian by one forward pass per input, seeding unit tangents.
pub fn jacobian_forward<F>(f: F, x: &DenseVector) -> Result<DenseMatrix>
where
    F: Fn(&[Dual]) -> Vec<Dual>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut m = None;
    for j in 0..n {
        let args: Vec<Dual> = (0..n)
            .map(|i| Dual::new(x[i], if i == j { 1.0 } else { 0.0 }))
            .collect();
        let out = f(&args);
        check_finite(&out)?;
        if *m.get_or_insert(out.len()) != out.len() {
            return shape_err("program output length changed between passes");
        }
        cols.push(DenseVector::from_fn(out.len(), |i| out[i].deriv));
    }
    if n == 0 {
        let out = f(&[]);
        return Ok(DenseMatrix::zeros(out.len(), 0));
    }
    DenseMatrix::from_columns(&cols)
}

/// `f'(x)[v]` in a single dual pass with tangent `v`.
pub fn directional_derivative<F>(f: F, x: &DenseVector, v: &DenseVector) -> Result<DenseVector>
where
    F: Fn(&[Dual]) -> Vec<Dual>,
{
    if x.len() != v.len() {
        return shape_err(format!("point has {} entries, direction {}", x.len(), v.len()));
    }
    let dv = DualVector::new(x.clone(), v.clone())?;
    let out = f(&dv.to_duals());
    check_finite(&out)?;
    Ok(DualVector::from_duals(&out).derivs().clone())
}

/// Value and derivative in one pass, for callers that need both.
pub fn value_and_directional<F>(f: F, x: &DenseVector, v: &DenseVector) -> Result<DualVector>
where
    F: Fn(&[Dual]) -> Vec<Dual>,
{
    if x.len() != v.len() {
        return shape_err(format!("point has {} entries, direction {}", x.len(), v.len()));
    }
    let out = f(&DualVector::new(x.clone(), v.clone())?.to_duals());
    check_finite(&out)?;
    Ok(DualVector::from_duals(&out))
}
