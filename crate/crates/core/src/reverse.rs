//! Tape-based reverse-mode AD.
//!
//! A [`Tape`] records every primitive application as a node holding up to
//! two parent indices and the local partials `∂node/∂parent` evaluated at
//! the recorded primals. Parents always precede children, so one reverse
//! sweep over the node list accumulates all adjoints.
//!
//! The tape is generic over its scalar type. `Tape<f64>` gives ordinary
//! gradients; `Tape<Dual>` differentiates the whole reverse sweep forward,
//! which is how [`crate::second_order`] gets Hessian-vector products.

use crate::error::{shape_err, Error, Result};
use crate::linalg::DenseVector;
use crate::scalar::Scalar;
use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Recordable primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prim {
    Input,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Powi(i32),
}

impl Prim {
    pub fn arity(self) -> usize {
        match self {
            Prim::Input => 0,
            Prim::Add | Prim::Sub | Prim::Mul | Prim::Div => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TapeNode<T> {
    pub op: Prim,
    /// Number of live parents (0, 1 or 2).
    pub arity: usize,
    pub parents: [usize; 2],
    pub partials: [T; 2],
    pub value: T,
}

/// Stable identity of a recorded value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VarHandle {
    pub tape_id: u64,
    pub index: usize,
}

pub struct Tape<T: Scalar = f64> {
    id: u64,
    nodes: RefCell<Vec<TapeNode<T>>>,
    fault: RefCell<Option<Error>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
            fault: RefCell::new(None),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub fn node(&self, i: usize) -> TapeNode<T> {
        self.nodes.borrow()[i]
    }

    /// First error raised by an operator-overloaded recording, if any.
    pub fn fault(&self) -> Option<Error> {
        self.fault.borrow().clone()
    }

    fn set_fault(&self, e: Error) {
        let mut f = self.fault.borrow_mut();
        if f.is_none() {
            *f = Some(e);
        }
    }

    fn push(&self, node: TapeNode<T>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    pub fn input(&self, value: T) -> Var<'_, T> {
        let index = self.push(TapeNode {
            op: Prim::Input,
            arity: 0,
            parents: [0; 2],
            partials: [T::constant(0.0); 2],
            value,
        });
        Var {
            tape: Some(self),
            index,
            value,
        }
    }

    pub fn inputs(&self, values: &[T]) -> Vec<Var<'_, T>> {
        values.iter().map(|&v| self.input(v)).collect()
    }

    /// Appends one primitive application. Constant arguments (vars not on
    /// any tape) contribute no parent edge. If every argument is constant
    /// the result is a constant and nothing is recorded.
    pub fn record<'t>(&'t self, prim: Prim, args: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        if prim == Prim::Input || args.len() != prim.arity() {
            return Err(Error::Contract(format!(
                "{prim:?} takes {} arguments, got {}",
                prim.arity(),
                args.len()
            )));
        }
        for a in args {
            if let Some(t) = a.tape {
                if t.id != self.id {
                    return Err(Error::Contract(format!(
                        "variable from tape {} used on tape {}",
                        t.id, self.id
                    )));
                }
            }
        }
        let vals: Vec<T> = args.iter().map(|a| a.value).collect();
        let (value, partials) = local_rule(prim, &vals)?;
        if args.iter().all(|a| a.tape.is_none()) {
            return Ok(Var::constant_of(value));
        }
        let mut node = TapeNode {
            op: prim,
            arity: 0,
            parents: [0; 2],
            partials: [T::constant(0.0); 2],
            value,
        };
        for (a, p) in args.iter().zip(partials) {
            if a.tape.is_some() {
                node.parents[node.arity] = a.index;
                node.partials[node.arity] = p;
                node.arity += 1;
            }
        }
        let index = self.push(node);
        Ok(Var {
            tape: Some(self),
            index,
            value,
        })
    }

    /// Reverse sweep from seeded output adjoints. Returns one adjoint per node.
    pub fn backward(&self, seeds: &[(Var<'_, T>, T)]) -> Result<Adjoints<T>> {
        if let Some(e) = self.fault() {
            return Err(e);
        }
        let nodes = self.nodes.borrow();
        let mut adj = vec![T::constant(0.0); nodes.len()];
        for (v, w) in seeds {
            match v.tape {
                None => {}
                Some(t) if t.id == self.id => adj[v.index] = adj[v.index] + *w,
                Some(t) => {
                    return Err(Error::Contract(format!(
                        "seed variable from tape {} on tape {}",
                        t.id, self.id
                    )))
                }
            }
        }
        let mut visited = 0;
        for i in (0..nodes.len()).rev() {
            visited += 1;
            let node = &nodes[i];
            let a = adj[i];
            for k in 0..node.arity {
                let p = node.parents[k];
                adj[p] = adj[p] + node.partials[k] * a;
            }
        }
        Ok(Adjoints { values: adj, visited })
    }
}

/// Adjoints from a reverse sweep.
#[derive(Clone, Debug)]
pub struct Adjoints<T> {
    pub values: Vec<T>,
    /// Nodes processed by the sweep; equals the tape length.
    pub visited: usize,
}

impl<T: Scalar> Adjoints<T> {
    pub fn of(&self, v: &Var<'_, T>) -> T {
        match v.tape {
            Some(_) => self.values[v.index],
            None => T::constant(0.0),
        }
    }
}

/// Primal value and local partials of one primitive.
fn local_rule<T: Scalar>(prim: Prim, a: &[T]) -> Result<(T, [T; 2])> {
    let zero = T::constant(0.0);
    let one = T::constant(1.0);
    Ok(match prim {
        Prim::Input => unreachable!("inputs are not recorded through local_rule"),
        Prim::Add => (a[0] + a[1], [one, one]),
        Prim::Sub => (a[0] - a[1], [one, -one]),
        Prim::Mul => (a[0] * a[1], [a[1], a[0]]),
        Prim::Div => {
            if a[1].value() == 0.0 {
                return Err(Error::Domain("division by zero".into()));
            }
            let inv = one / a[1];
            (a[0] / a[1], [inv, -(a[0] * inv * inv)])
        }
        Prim::Neg => (-a[0], [-one, zero]),
        Prim::Sin => (a[0].sin(), [a[0].cos(), zero]),
        Prim::Cos => (a[0].cos(), [-a[0].sin(), zero]),
        Prim::Exp => {
            let e = a[0].exp();
            (e, [e, zero])
        }
        Prim::Ln => {
            if a[0].value() <= 0.0 {
                return Err(Error::Domain(format!("log of {}", a[0].value())));
            }
            (a[0].ln(), [one / a[0], zero])
        }
        Prim::Sqrt => {
            if a[0].value() <= 0.0 {
                return Err(Error::Domain(format!("sqrt of {}", a[0].value())));
            }
            let r = a[0].sqrt();
            (r, [one / (r * 2.0), zero])
        }
        Prim::Powi(n) => {
            if n < 0 && a[0].value() == 0.0 {
                return Err(Error::Domain(format!("zero to the power {n}")));
            }
            if n == 0 {
                (one, [zero, zero])
            } else {
                (a[0].powi(n), [a[0].powi(n - 1) * n as f64, zero])
            }
        }
    })
}

/// A value that is either recorded on a tape or a free constant.
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar = f64> {
    tape: Option<&'t Tape<T>>,
    index: usize,
    value: T,
}

impl<T: Scalar> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("handle", &self.handle())
            .field("value", &self.value)
            .finish()
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn constant_of(value: T) -> Self {
        Var {
            tape: None,
            index: usize::MAX,
            value,
        }
    }

    pub fn primal(&self) -> T {
        self.value
    }

    pub fn handle(&self) -> Option<VarHandle> {
        self.tape.map(|t| VarHandle {
            tape_id: t.id,
            index: self.index,
        })
    }

    /// Records through the tape of whichever argument has one; recording
    /// errors are parked on that tape and surface in [`Tape::backward`].
    fn apply(prim: Prim, args: &[Var<'t, T>]) -> Var<'t, T> {
        match args.iter().find_map(|a| a.tape) {
            Some(t) => t.record(prim, args).unwrap_or_else(|e| {
                t.set_fault(e);
                Var::constant_of(T::constant(f64::NAN))
            }),
            None => {
                let vals: Vec<T> = args.iter().map(|a| a.value).collect();
                match local_rule(prim, &vals) {
                    Ok((v, _)) => Var::constant_of(v),
                    Err(_) => Var::constant_of(T::constant(f64::NAN)),
                }
            }
        }
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $prim:expr) => {
        impl<'t, T: Scalar> $tr for Var<'t, T> {
            type Output = Var<'t, T>;
            fn $m(self, o: Var<'t, T>) -> Var<'t, T> {
                Var::apply($prim, &[self, o])
            }
        }
        impl<'t, T: Scalar> $tr<f64> for Var<'t, T> {
            type Output = Var<'t, T>;
            fn $m(self, c: f64) -> Var<'t, T> {
                Var::apply($prim, &[self, Var::constant_of(T::constant(c))])
            }
        }
    };
}

binop!(Add, add, Prim::Add);
binop!(Sub, sub, Prim::Sub);
binop!(Mul, mul, Prim::Mul);
binop!(Div, div, Prim::Div);

impl<'t, T: Scalar> Neg for Var<'t, T> {
    type Output = Var<'t, T>;
    fn neg(self) -> Var<'t, T> {
        Var::apply(Prim::Neg, &[self])
    }
}

impl<'t, T: Scalar> Scalar for Var<'t, T> {
    fn constant(c: f64) -> Self {
        Var::constant_of(T::constant(c))
    }
    fn value(&self) -> f64 {
        self.value.value()
    }
    fn sin(self) -> Self {
        Var::apply(Prim::Sin, &[self])
    }
    fn cos(self) -> Self {
        Var::apply(Prim::Cos, &[self])
    }
    fn exp(self) -> Self {
        Var::apply(Prim::Exp, &[self])
    }
    fn ln(self) -> Self {
        Var::apply(Prim::Ln, &[self])
    }
    fn sqrt(self) -> Self {
        Var::apply(Prim::Sqrt, &[self])
    }
    fn powi(self, n: i32) -> Self {
        Var::apply(Prim::Powi(n), &[self])
    }
}

fn finite_or_domain<T: Scalar>(vals: &[T]) -> Result<()> {
    if vals.iter().any(|v| !v.value().is_finite()) {
        return Err(Error::Domain("non-finite value in reverse sweep".into()));
    }
    Ok(())
}

/// Pins a closure to the higher-ranked signature expected by [`vjp`] and
/// [`jacobian_reverse`], so it can be stored in a variable first.
pub fn vector_program<F>(f: F) -> F
where
    F: for<'t> Fn(&[Var<'t, f64>]) -> Vec<Var<'t, f64>>,
{
    f
}

/// Scalar-output counterpart of [`vector_program`].
pub fn scalar_program<T: Scalar, F>(f: F) -> F
where
    F: for<'t> Fn(&[Var<'t, T>]) -> Var<'t, T>,
{
    f
}

/// Gradient over any tape scalar: one recording pass, one reverse sweep.
pub fn gradient_generic<T, F>(f: F, x: &[T]) -> Result<Vec<T>>
where
    T: Scalar,
    F: for<'t> Fn(&[Var<'t, T>]) -> Var<'t, T>,
{
    let tape = Tape::new();
    let vars = tape.inputs(x);
    let out = f(&vars);
    finite_or_domain(&[out.value])?;
    let adj = tape.backward(&[(out, T::constant(1.0))])?;
    let g: Vec<T> = vars.iter().map(|v| adj.of(v)).collect();
    finite_or_domain(&g)?;
    Ok(g)
}

/// `∇f(x)` for a scalar program.
pub fn gradient<F>(f: F, x: &DenseVector) -> Result<DenseVector>
where
    F: for<'t> Fn(&[Var<'t, f64>]) -> Var<'t, f64>,
{
    DenseVector::new(gradient_generic(f, x.as_slice())?)
}

/// Value and gradient together.
pub fn value_and_gradient<F>(f: F, x: &DenseVector) -> Result<(f64, DenseVector)>
where
    F: for<'t> Fn(&[Var<'t, f64>]) -> Var<'t, f64>,
{
    let tape = Tape::new();
    let vars = tape.inputs(x.as_slice());
    let out = f(&vars);
    finite_or_domain(&[out.value])?;
    let adj = tape.backward(&[(out, 1.0)])?;
    let g = DenseVector::new(vars.iter().map(|v| adj.of(v)).collect())?;
    Ok((out.value, g))
}

/// Vector-Jacobian product `wᵀ f'(x)`, returned as a column vector.
pub fn vjp<F>(f: F, x: &DenseVector, w: &DenseVector) -> Result<DenseVector>
where
    F: for<'t> Fn(&[Var<'t, f64>]) -> Vec<Var<'t, f64>>,
{
    let tape = Tape::new();
    let vars = tape.inputs(x.as_slice());
    let outs = f(&vars);
    if outs.len() != w.len() {
        return shape_err(format!("{} outputs but weight of length {}", outs.len(), w.len()));
    }
    finite_or_domain(&outs.iter().map(|o| o.value).collect::<Vec<_>>())?;
    let seeds: Vec<_> = outs.iter().zip(w.iter()).map(|(o, &wi)| (*o, wi)).collect();
    let adj = tape.backward(&seeds)?;
    DenseVector::new(vars.iter().map(|v| adj.of(v)).collect())
}

/// Full Jacobian assembled row by row from `m` vector-Jacobian products.
pub fn jacobian_reverse<F>(f: F, x: &DenseVector) -> Result<crate::linalg::DenseMatrix>
where
    F: for<'t> Fn(&[Var<'t, f64>]) -> Vec<Var<'t, f64>>,
{
    let m = {
        let tape = Tape::<f64>::new();
        let vars = tape.inputs(x.as_slice());
        f(&vars).len()
    };
    let rows: Result<Vec<DenseVector>> = (0..m).map(|i| vjp(&f, x, &DenseVector::unit(m, i))).collect();
    Ok(crate::linalg::DenseMatrix::from_columns(&rows?)?.transpose())
}
