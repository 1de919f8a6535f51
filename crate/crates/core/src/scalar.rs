//! The scalar abstraction shared by plain evaluation, forward mode and the tape.
//!
//! A program written once against [`Scalar`] can be evaluated on `f64`,
//! differentiated forward on [`Dual`](crate::forward::Dual), recorded on a
//! [`Tape`](crate::reverse::Tape), or recorded on a tape of duals for
//! forward-over-reverse second derivatives. Branches must read only
//! [`Scalar::value`].

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(c: f64) -> Self;

    /// Primal value.
    fn value(&self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;

    fn recip(self) -> Self {
        Self::constant(1.0) / self
    }

    fn square(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// Sum of a slice of scalars; zero for an empty slice.
pub fn sum<S: Scalar>(xs: &[S]) -> S {
    let mut it = xs.iter().copied();
    match it.next() {
        Some(first) => it.fold(first, |a, b| a + b),
        None => S::constant(0.0),
    }
}

/// Inner product `xᵀy` over scalars.
pub fn dot<S: Scalar>(x: &[S], y: &[S]) -> S {
    assert_eq!(x.len(), y.len(), "dot: length mismatch");
    let mut acc = S::constant(0.0);
    for (a, b) in x.iter().zip(y) {
        acc = acc + *a * *b;
    }
    acc
}
