//! Thread-local operation counters used to observe cost models.
//!
//! Every kernel that matters for an asymptotic claim bumps one of these
//! counters. Counters are per thread, so tests running in parallel do not
//! interfere with each other. Use [`measure`] to get the delta produced by a
//! closure.

use std::cell::Cell;

thread_local! {
    static FLOPS: Cell<u64> = const { Cell::new(0) };
    static TRIDIAG_SOLVES: Cell<u64> = const { Cell::new(0) };
    static DENSE_SOLVES: Cell<u64> = const { Cell::new(0) };
    static ODE_INTEGRATIONS: Cell<u64> = const { Cell::new(0) };
    static RHS_EVALS: Cell<u64> = const { Cell::new(0) };
}

/// Snapshot of all counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    /// Scalar arithmetic operations.
    pub flops: u64,
    pub tridiag_solves: u64,
    /// Dense LU solves (including transposed solves against an existing factorization).
    pub dense_solves: u64,
    pub ode_integrations: u64,
    /// Right-hand-side evaluations; an evaluation that also carries N
    /// sensitivity columns counts as 1 + N.
    pub rhs_evals: u64,
}

impl std::ops::Sub for Counts {
    type Output = Counts;
    fn sub(self, o: Counts) -> Counts {
        Counts {
            flops: self.flops - o.flops,
            tridiag_solves: self.tridiag_solves - o.tridiag_solves,
            dense_solves: self.dense_solves - o.dense_solves,
            ode_integrations: self.ode_integrations - o.ode_integrations,
            rhs_evals: self.rhs_evals - o.rhs_evals,
        }
    }
}

pub fn snapshot() -> Counts {
    Counts {
        flops: FLOPS.with(Cell::get),
        tridiag_solves: TRIDIAG_SOLVES.with(Cell::get),
        dense_solves: DENSE_SOLVES.with(Cell::get),
        ode_integrations: ODE_INTEGRATIONS.with(Cell::get),
        rhs_evals: RHS_EVALS.with(Cell::get),
    }
}

/// Runs `f` and returns its result together with the counter delta.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, Counts) {
    let before = snapshot();
    let out = f();
    (out, snapshot() - before)
}

#[inline]
fn bump(c: &'static std::thread::LocalKey<Cell<u64>>, n: u64) {
    c.with(|v| v.set(v.get().wrapping_add(n)));
}

#[inline]
pub(crate) fn flops(n: u64) {
    bump(&FLOPS, n);
}

pub(crate) fn tridiag_solve() {
    bump(&TRIDIAG_SOLVES, 1);
}

pub(crate) fn dense_solve() {
    bump(&DENSE_SOLVES, 1);
}

pub(crate) fn ode_integration() {
    bump(&ODE_INTEGRATIONS, 1);
}

pub(crate) fn rhs_evals(n: u64) {
    bump(&RHS_EVALS, n);
}
