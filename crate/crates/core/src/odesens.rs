//! Forward and adjoint sensitivities of ODE initial-value problems.
//!
//! For `u' = f(u, p, t)`, `u(0) = u₀(p)` on `[0, T]` and
//! `G(p) = ∫₀ᵀ g(u, p, t) dt`, the forward route integrates `∂u/∂p`
//! alongside `u`; the adjoint route integrates
//! `v' = (∂g/∂u)ᵀ − (∂f/∂u)ᵀ v` backwards from `v(T) = 0` and forms
//! `∇G = −(∂u₀/∂p)ᵀ v(0) + ∫₀ᵀ [(∂g/∂p)ᵀ − (∂f/∂p)ᵀ v] dt`.
//!
//! All integrators are fixed-step on a uniform grid and the whole forward
//! trajectory is kept in memory.

#![allow(non_snake_case)]

use std::fmt::Write as _;
use std::sync::Arc;

use crate::counters;
use crate::error::{shape_err, Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};

/// An initial-value problem with an integral objective and all the partial
/// derivatives the sensitivity methods need. Parameters are passed
/// explicitly so that callers can vary them.
pub trait OdeProblem {
    fn n_state(&self) -> usize;
    fn n_params(&self) -> usize;
    fn t_final(&self) -> f64;

    fn f(&self, u: &DenseVector, p: &DenseVector, t: f64) -> DenseVector;
    fn dfdu(&self, u: &DenseVector, p: &DenseVector, t: f64) -> DenseMatrix;
    fn dfdp(&self, u: &DenseVector, p: &DenseVector, t: f64) -> DenseMatrix;
    fn u0(&self, p: &DenseVector) -> DenseVector;
    fn du0dp(&self, p: &DenseVector) -> DenseMatrix;

    fn g(&self, u: &DenseVector, p: &DenseVector, t: f64) -> f64;
    fn dgdu(&self, u: &DenseVector, p: &DenseVector, t: f64) -> DenseVector;
    fn dgdp(&self, u: &DenseVector, p: &DenseVector, t: f64) -> DenseVector;
}

/// States on the uniform grid `tᵢ = i·T/n`, with `f` stored at each node.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DenseVector>,
    pub slopes: Vec<DenseVector>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.times[self.times.len() - 1] / self.n_steps() as f64
    }

    pub fn last(&self) -> &DenseVector {
        &self.states[self.states.len() - 1]
    }

    /// Cubic Hermite value at the midpoint of step `i`:
    /// `(uᵢ + uᵢ₊₁)/2 + Δt (fᵢ − fᵢ₊₁)/8`.
    pub fn midpoint(&self, i: usize) -> DenseVector {
        let dt = self.dt();
        let avg = (&self.states[i] + &self.states[i + 1]).scale(0.5);
        avg.axpy(dt / 8.0, &(&self.slopes[i] - &self.slopes[i + 1]))
    }
}

/// Adjoint values `v(tᵢ)` on the forward grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DenseVector>,
}

/// A trajectory together with `∂u/∂p` (n×N) at every node.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityTrajectory {
    pub trajectory: Trajectory,
    pub sensitivities: Vec<DenseMatrix>,
}

fn check_params<P: OdeProblem + ?Sized>(prob: &P, p: &DenseVector) -> Result<()> {
    if p.len() != prob.n_params() {
        return shape_err(format!("problem has {} parameters, got {}", prob.n_params(), p.len()));
    }
    if !(prob.t_final() > 0.0) {
        return Err(Error::Contract("final time must be positive".into()));
    }
    Ok(())
}

fn check_steps(n_steps: usize) -> Result<()> {
    if n_steps < 4 {
        return Err(Error::Contract(format!("need at least 4 steps, got {n_steps}")));
    }
    Ok(())
}

fn grid(t_final: f64, n: usize) -> Vec<f64> {
    let dt = t_final / n as f64;
    let mut t: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    t[n] = t_final;
    t
}

fn finite_or_blowup(y: &[f64], step: usize) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::BlowUp { step })
    }
}

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// One classical RK4 step; also returns the first stage `k₁ = F(t, y)`.
fn rk4_step<F>(rhs: &mut F, t: f64, y: &[f64], h: f64) -> (Vec<f64>, Vec<f64>)
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    let k1 = rhs(t, y);
    let k2 = rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k1));
    let k3 = rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k2));
    let k4 = rhs(t + h, &axpy(y, h, &k3));
    let next = (0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    (next, k1)
}

fn eval_f<P: OdeProblem + ?Sized>(prob: &P, u: &DenseVector, p: &DenseVector, t: f64) -> DenseVector {
    counters::rhs_evals(1);
    prob.f(u, p, t)
}

/// Classical fourth-order Runge–Kutta on `n_steps` uniform steps.
pub fn integrate_rk4<P: OdeProblem + ?Sized>(prob: &P, p: &DenseVector, n_steps: usize) -> Result<Trajectory> {
    check_params(prob, p)?;
    check_steps(n_steps)?;
    counters::ode_integration();
    let times = grid(prob.t_final(), n_steps);
    let dt = prob.t_final() / n_steps as f64;
    let mut states = vec![prob.u0(p)];
    let mut slopes = Vec::with_capacity(n_steps + 1);
    let mut rhs = |t: f64, y: &[f64]| eval_f(prob, &DenseVector::from_vec(y.to_vec()), p, t).into_vec();
    for (i, &t) in times.iter().take(n_steps).enumerate() {
        let (next, k1) = rk4_step(&mut rhs, t, states[i].as_slice(), dt);
        finite_or_blowup(&next, i + 1)?;
        slopes.push(DenseVector::from_vec(k1));
        states.push(DenseVector::from_vec(next));
    }
    slopes.push(eval_f(prob, &states[n_steps], p, prob.t_final()));
    Ok(Trajectory { times, states, slopes })
}

/// Forward Euler on `n_steps` uniform steps.
pub fn integrate_euler<P: OdeProblem + ?Sized>(prob: &P, p: &DenseVector, n_steps: usize) -> Result<Trajectory> {
    check_params(prob, p)?;
    if n_steps == 0 {
        return Err(Error::Contract("need at least one step".into()));
    }
    counters::ode_integration();
    let times = grid(prob.t_final(), n_steps);
    let dt = prob.t_final() / n_steps as f64;
    let mut states = vec![prob.u0(p)];
    let mut slopes = Vec::with_capacity(n_steps + 1);
    for i in 0..n_steps {
        let k = eval_f(prob, &states[i], p, times[i]);
        let next = states[i].axpy(dt, &k);
        finite_or_blowup(next.as_slice(), i + 1)?;
        slopes.push(k);
        states.push(next);
    }
    slopes.push(eval_f(prob, &states[n_steps], p, prob.t_final()));
    Ok(Trajectory { times, states, slopes })
}

/// `∂/∂t(∂u/∂p) = (∂f/∂u)(∂u/∂p) + ∂f/∂p`.
pub fn sensitivity_rhs<P: OdeProblem + ?Sized>(
    prob: &P,
    p: &DenseVector,
    u: &DenseVector,
    s: &DenseMatrix,
    t: f64,
) -> DenseMatrix {
    &(&prob.dfdu(u, p, t) * s) + &prob.dfdp(u, p, t)
}

/// Integrates the combined system `(u, ∂u/∂p)` with RK4 on the same grid.
pub fn forward_sensitivity<P: OdeProblem + ?Sized>(
    prob: &P,
    p: &DenseVector,
    n_steps: usize,
) -> Result<SensitivityTrajectory> {
    check_params(prob, p)?;
    check_steps(n_steps)?;
    counters::ode_integration();
    let (n, np) = (prob.n_state(), prob.n_params());
    let times = grid(prob.t_final(), n_steps);
    let dt = prob.t_final() / n_steps as f64;
    let split = |y: &[f64]| {
        let u = DenseVector::from_vec(y[..n].to_vec());
        let s = DenseMatrix::new(n, np, y[n..].to_vec()).expect("finite sensitivity block");
        (u, s)
    };
    let mut rhs = |t: f64, y: &[f64]| {
        // one state evaluation plus one linearized evaluation per parameter
        counters::rhs_evals(1 + np as u64);
        let (u, s) = split(y);
        let mut out = prob.f(&u, p, t).into_vec();
        out.extend_from_slice(sensitivity_rhs(prob, p, &u, &s, t).as_slice());
        out
    };
    let mut y: Vec<f64> = prob.u0(p).into_vec();
    y.extend_from_slice(prob.du0dp(p).as_slice());
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut sens = Vec::with_capacity(n_steps + 1);
    let mut slopes = Vec::with_capacity(n_steps + 1);
    for (i, &t) in times.iter().take(n_steps).enumerate() {
        let (u, s) = split(&y);
        states.push(u);
        sens.push(s);
        let (next, k1) = rk4_step(&mut rhs, t, &y, dt);
        finite_or_blowup(&next, i + 1)?;
        slopes.push(DenseVector::from_vec(k1[..n].to_vec()));
        y = next;
    }
    let (u, s) = split(&y);
    slopes.push(prob.f(&u, p, prob.t_final()));
    states.push(u);
    sens.push(s);
    Ok(SensitivityTrajectory {
        trajectory: Trajectory { times, states, slopes },
        sensitivities: sens,
    })
}

/// Composite Simpson weights for `n` (even) intervals of width `dt`.
fn simpson_weights(n: usize, dt: f64) -> Result<Vec<f64>> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::Contract(format!(
            "Simpson quadrature needs an even step count, got {n}"
        )));
    }
    Ok((0..=n)
        .map(|i| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * dt / 3.0
        })
        .collect())
}

/// `G = ∫₀ᵀ g dt` by composite Simpson on the trajectory grid.
pub fn loss_G<P: OdeProblem + ?Sized>(prob: &P, p: &DenseVector, traj: &Trajectory) -> Result<f64> {
    let w = simpson_weights(traj.n_steps(), traj.dt())?;
    Ok(traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(&w)
        .map(|((&t, u), wi)| wi * prob.g(u, p, t))
        .sum())
}

/// `∇G = ∫₀ᵀ [(∂u/∂p)ᵀ(∂g/∂u)ᵀ + (∂g/∂p)ᵀ] dt` from forward sensitivities.
pub fn grad_G_forward<P: OdeProblem + ?Sized>(prob: &P, p: &DenseVector, n_steps: usize) -> Result<DenseVector> {
    simpson_weights(n_steps, 1.0)?;
    let st = forward_sensitivity(prob, p, n_steps)?;
    let tr = &st.trajectory;
    let w = simpson_weights(n_steps, tr.dt())?;
    let mut acc = DenseVector::zeros(prob.n_params());
    for i in 0..=n_steps {
        let (t, u) = (tr.times[i], &tr.states[i]);
        let integrand = &st.sensitivities[i].matvec_transpose(&prob.dgdu(u, p, t)) + &prob.dgdp(u, p, t);
        acc = acc.axpy(w[i], &integrand);
    }
    Ok(acc)
}

/// `(∂g/∂u)ᵀ − (∂f/∂u)ᵀ v`.
pub fn adjoint_rhs<P: OdeProblem + ?Sized>(
    prob: &P,
    p: &DenseVector,
    u: &DenseVector,
    v: &DenseVector,
    t: f64,
) -> DenseVector {
    &prob.dgdu(u, p, t) - &prob.dfdu(u, p, t).matvec_transpose(v)
}

/// One backward RK4 step of `v' = F(u(t), v, t)` from node `i + 1` to `i`,
/// with the midpoint state from cubic Hermite interpolation.
fn backward_step<F>(traj: &Trajectory, i: usize, y: &[f64], rhs: &mut F) -> Vec<f64>
where
    F: FnMut(&DenseVector, &[f64], f64) -> Vec<f64>,
{
    let h = -traj.dt();
    let (t1, t0) = (traj.times[i + 1], traj.times[i]);
    let tm = 0.5 * (t0 + t1);
    let um = traj.midpoint(i);
    let k1 = rhs(&traj.states[i + 1], y, t1);
    let k2 = rhs(&um, &axpy(y, 0.5 * h, &k1), tm);
    let k3 = rhs(&um, &axpy(y, 0.5 * h, &k2), tm);
    let k4 = rhs(&traj.states[i], &axpy(y, h, &k3), t0);
    (0..y.len())
        .map(|j| y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
        .collect()
}

/// Integrates the adjoint equation backwards from `v(T) = 0`.
pub fn adjoint_solve<P: OdeProblem + ?Sized>(
    prob: &P,
    p: &DenseVector,
    traj: &Trajectory,
) -> Result<AdjointTrajectory> {
    check_params(prob, p)?;
    counters::ode_integration();
    let n = traj.n_steps();
    let mut states = vec![DenseVector::zeros(prob.n_state()); n + 1];
    let mut rhs = |u: &DenseVector, v: &[f64], t: f64| {
        counters::rhs_evals(1);
        adjoint_rhs(prob, p, u, &DenseVector::from_vec(v.to_vec()), t).into_vec()
    };
    for i in (0..n).rev() {
        let next = backward_step(traj, i, states[i + 1].as_slice(), &mut rhs);
        finite_or_blowup(&next, i)?;
        states[i] = DenseVector::from_vec(next);
    }
    Ok(AdjointTrajectory {
        times: traj.times.clone(),
        states,
    })
}

/// Objective value, gradient and the trajectories behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointGradient {
    pub value: f64,
    pub grad: DenseVector,
    pub trajectory: Trajectory,
    pub adjoint: AdjointTrajectory,
}

/// Adjoint gradient from one forward and one backward integration.
pub fn adjoint_gradient<P: OdeProblem + ?Sized>(prob: &P, p: &DenseVector, n_steps: usize) -> Result<AdjointGradient> {
    simpson_weights(n_steps, 1.0)?;
    let traj = integrate_rk4(prob, p, n_steps)?;
    let adj = adjoint_solve(prob, p, &traj)?;
    let w = simpson_weights(n_steps, traj.dt())?;
    let mut acc = prob.du0dp(p).matvec_transpose(&adj.states[0]).scale(-1.0);
    for i in 0..=n_steps {
        let (t, u, v) = (traj.times[i], &traj.states[i], &adj.states[i]);
        let integrand = &prob.dgdp(u, p, t) - &prob.dfdp(u, p, t).matvec_transpose(v);
        acc = acc.axpy(w[i], &integrand);
    }
    Ok(AdjointGradient {
        value: loss_G(prob, p, &traj)?,
        grad: acc,
        trajectory: traj,
        adjoint: adj,
    })
}

pub fn grad_G_adjoint<P: OdeProblem + ?Sized>(prob: &P, p: &DenseVector, n_steps: usize) -> Result<DenseVector> {
    Ok(adjoint_gradient(prob, p, n_steps)?.grad)
}

/// Central differences of `G` with step `10⁻⁶(1 + |p_k|)` per component.
pub fn grad_G_fd<P: OdeProblem + ?Sized>(prob: &P, p: &DenseVector, n_steps: usize) -> Result<DenseVector> {
    let g = |q: &DenseVector| -> Result<f64> { loss_G(prob, q, &integrate_rk4(prob, q, n_steps)?) };
    let parts: Result<Vec<f64>> = (0..p.len())
        .map(|k| {
            let h = 1e-6 * (1.0 + p[k].abs());
            let e = DenseVector::unit(p.len(), k);
            Ok((g(&p.axpy(h, &e))? - g(&p.axpy(-h, &e))?) / (2.0 * h))
        })
        .collect();
    DenseVector::new(parts?)
}

/// A point objective `g_k(u, p)` evaluated at one sample time.
pub trait PointObjective {
    fn value(&self, u: &DenseVector, p: &DenseVector) -> f64;
    fn dgdu(&self, u: &DenseVector, p: &DenseVector) -> DenseVector;
    fn dgdp(&self, u: &DenseVector, p: &DenseVector) -> DenseVector;
}

/// `‖u − target‖²`, with no explicit parameter dependence.
#[derive(Clone, Debug, PartialEq)]
pub struct SquaredMisfit {
    pub target: DenseVector,
}

impl PointObjective for SquaredMisfit {
    fn value(&self, u: &DenseVector, _: &DenseVector) -> f64 {
        let r = u - &self.target;
        r.dot(&r)
    }
    fn dgdu(&self, u: &DenseVector, _: &DenseVector) -> DenseVector {
        (u - &self.target).scale(2.0)
    }
    fn dgdp(&self, _: &DenseVector, p: &DenseVector) -> DenseVector {
        DenseVector::zeros(p.len())
    }
}

/// A sample time paired with its objective term.
pub struct DataSample<'a> {
    pub time: f64,
    pub term: &'a dyn PointObjective,
}

fn sample_nodes(t_final: f64, n_steps: usize, samples: &[DataSample<'_>]) -> Result<Vec<usize>> {
    let dt = t_final / n_steps as f64;
    samples
        .iter()
        .map(|s| {
            let k = (s.time / dt).round();
            if !(0.0..=n_steps as f64).contains(&k) || (s.time - k * dt).abs() > 1e-9 * (1.0 + t_final) {
                return Err(Error::Contract(format!("sample time {} is not a grid node", s.time)));
            }
            Ok(k as usize)
        })
        .collect()
}

/// `G = Σₖ gₖ(u(tₖ), p)` on an RK4 trajectory.
pub fn loss_G_discrete<P: OdeProblem + ?Sized>(
    prob: &P,
    p: &DenseVector,
    samples: &[DataSample<'_>],
    n_steps: usize,
) -> Result<f64> {
    let nodes = sample_nodes(prob.t_final(), n_steps, samples)?;
    let traj = integrate_rk4(prob, p, n_steps)?;
    Ok(samples
        .iter()
        .zip(&nodes)
        .map(|(s, &k)| s.term.value(&traj.states[k], p))
        .sum())
}

/// Gradient of `Σₖ gₖ(u(tₖ), p)`.
///
/// The adjoint solves `v' = −(∂f/∂u)ᵀ v` backwards from `v(T⁺) = 0` and
/// jumps by `v(tₖ⁻) = v(tₖ⁺) − (∂gₖ/∂u)ᵀ` at each sample node. The
/// quadrature `∫ (∂f/∂p)ᵀ v dt` rides along as extra backward state, so the
/// jumps never sit inside a quadrature panel.
pub fn grad_G_discrete_data<P: OdeProblem + ?Sized>(
    prob: &P,
    p: &DenseVector,
    samples: &[DataSample<'_>],
    n_steps: usize,
) -> Result<DenseVector> {
    check_params(prob, p)?;
    check_steps(n_steps)?;
    let nodes = sample_nodes(prob.t_final(), n_steps, samples)?;
    let np = prob.n_params();
    if samples.is_empty() {
        return Ok(DenseVector::zeros(np));
    }
    let traj = integrate_rk4(prob, p, n_steps)?;
    counters::ode_integration();
    let n = prob.n_state();
    let jump = |y: &mut [f64], node: usize| {
        for (s, &k) in samples.iter().zip(&nodes) {
            if k == node {
                let gu = s.term.dgdu(&traj.states[k], p);
                for j in 0..n {
                    y[j] -= gu[j];
                }
            }
        }
    };
    let mut rhs = |u: &DenseVector, y: &[f64], t: f64| {
        counters::rhs_evals(1);
        let v = DenseVector::from_vec(y[..n].to_vec());
        let mut out = prob.dfdu(u, p, t).matvec_transpose(&v).scale(-1.0).into_vec();
        // dq/dt with q(t) = −∫ₜᵀ (∂f/∂p)ᵀ v, so that q(0) is the full integral
        out.extend_from_slice(prob.dfdp(u, p, t).matvec_transpose(&v).scale(-1.0).as_slice());
        out
    };
    let mut y = vec![0.0; n + np];
    jump(&mut y, n_steps);
    for i in (0..n_steps).rev() {
        y = backward_step(&traj, i, &y, &mut rhs);
        finite_or_blowup(&y, i)?;
        jump(&mut y, i);
    }
    let v0 = DenseVector::from_vec(y[..n].to_vec());
    let q = DenseVector::from_vec(y[n..].to_vec());
    let mut grad = &prob.du0dp(p).matvec_transpose(&v0).scale(-1.0) - &q;
    for (s, &k) in samples.iter().zip(&nodes) {
        grad = &grad + &s.term.dgdp(&traj.states[k], p);
    }
    Ok(grad)
}

/// `t,u,v` rows (or `t,u_0,…,v_0,…` for vector states).
pub fn trajectory_csv(traj: &Trajectory, adj: &AdjointTrajectory) -> String {
    let n = traj.states[0].len();
    let mut out = String::from("t");
    if n == 1 {
        out.push_str(",u,v");
    } else {
        for j in 0..n {
            let _ = write!(out, ",u_{j}");
        }
        for j in 0..n {
            let _ = write!(out, ",v_{j}");
        }
    }
    out.push('\n');
    for i in 0..traj.times.len() {
        let _ = write!(out, "{}", traj.times[i]);
        for x in traj.states[i].iter().chain(adj.states[i].iter()) {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    out
}

/// The scalar reference problem `u' = p₁ + p₂u + p₃u²`, `u(0) = 0`, with
/// `g = (u − u*(t))²`. The default target is `u* = t³` on `[0, 1]`.
#[derive(Clone)]
pub struct ReferenceProblem {
    pub t_final: f64,
    pub target: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for ReferenceProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferenceProblem")
            .field("t_final", &self.t_final)
            .finish_non_exhaustive()
    }
}

impl Default for ReferenceProblem {
    fn default() -> Self {
        ReferenceProblem {
            t_final: 1.0,
            target: Arc::new(|t: f64| t * t * t),
        }
    }
}

impl ReferenceProblem {
    /// The parameter point used by the check suites.
    pub fn reference_params() -> DenseVector {
        DenseVector::from_vec(vec![1.0, 0.5, -0.2])
    }
}

fn scalar(x: f64) -> DenseVector {
    DenseVector::from_vec(vec![x])
}

impl OdeProblem for ReferenceProblem {
    fn n_state(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        3
    }
    fn t_final(&self) -> f64 {
        self.t_final
    }
    fn f(&self, u: &DenseVector, p: &DenseVector, _: f64) -> DenseVector {
        scalar(p[0] + p[1] * u[0] + p[2] * u[0] * u[0])
    }
    fn dfdu(&self, u: &DenseVector, p: &DenseVector, _: f64) -> DenseMatrix {
        DenseMatrix::from_rows(&[[p[1] + 2.0 * p[2] * u[0]]])
    }
    fn dfdp(&self, u: &DenseVector, _: &DenseVector, _: f64) -> DenseMatrix {
        DenseMatrix::from_rows(&[[1.0, u[0], u[0] * u[0]]])
    }
    fn u0(&self, _: &DenseVector) -> DenseVector {
        scalar(0.0)
    }
    fn du0dp(&self, _: &DenseVector) -> DenseMatrix {
        DenseMatrix::zeros(1, 3)
    }
    fn g(&self, u: &DenseVector, _: &DenseVector, t: f64) -> f64 {
        let r = u[0] - (self.target)(t);
        r * r
    }
    fn dgdu(&self, u: &DenseVector, _: &DenseVector, t: f64) -> DenseVector {
        scalar(2.0 * (u[0] - (self.target)(t)))
    }
    fn dgdp(&self, _: &DenseVector, _: &DenseVector, _: f64) -> DenseVector {
        DenseVector::zeros(3)
    }
}

/// Integrand choices for [`ExpDecay`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayObjective {
    Zero,
    Linear,
    Square,
}

/// `u' = −p u`, `u(0) = u₀`, with `g ∈ {0, u, u²}`. Closed form `u = u₀e^{−pt}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpDecay {
    pub u0: f64,
    pub t_final: f64,
    pub objective: DecayObjective,
}

impl OdeProblem for ExpDecay {
    fn n_state(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        1
    }
    fn t_final(&self) -> f64 {
        self.t_final
    }
    fn f(&self, u: &DenseVector, p: &DenseVector, _: f64) -> DenseVector {
        scalar(-p[0] * u[0])
    }
    fn dfdu(&self, _: &DenseVector, p: &DenseVector, _: f64) -> DenseMatrix {
        DenseMatrix::from_rows(&[[-p[0]]])
    }
    fn dfdp(&self, u: &DenseVector, _: &DenseVector, _: f64) -> DenseMatrix {
        DenseMatrix::from_rows(&[[-u[0]]])
    }
    fn u0(&self, _: &DenseVector) -> DenseVector {
        scalar(self.u0)
    }
    fn du0dp(&self, _: &DenseVector) -> DenseMatrix {
        DenseMatrix::zeros(1, 1)
    }
    fn g(&self, u: &DenseVector, _: &DenseVector, _: f64) -> f64 {
        match self.objective {
            DecayObjective::Zero => 0.0,
            DecayObjective::Linear => u[0],
            DecayObjective::Square => u[0] * u[0],
        }
    }
    fn dgdu(&self, u: &DenseVector, _: &DenseVector, _: f64) -> DenseVector {
        scalar(match self.objective {
            DecayObjective::Zero => 0.0,
            DecayObjective::Linear => 1.0,
            DecayObjective::Square => 2.0 * u[0],
        })
    }
    fn dgdp(&self, _: &DenseVector, _: &DenseVector, _: f64) -> DenseVector {
        DenseVector::zeros(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(objective: DecayObjective) -> ExpDecay {
        ExpDecay {
            u0: 1.0,
            t_final: 1.0,
            objective,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn vrel(a: &DenseVector, b: &DenseVector) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn rk4_exponential() {
        let prob = decay(DecayObjective::Zero);
        let tr = integrate_rk4(&prob, &scalar(1.0), 100).unwrap();
        assert!((tr.last()[0] - (-1.0f64).exp()).abs() <= 1e-8);
        assert_eq!(tr.times[0], 0.0);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
        for w in tr.times.windows(2) {
            assert!((w[1] - w[0] - 0.01).abs() <= 1e-12);
        }
        let p = 2.3;
        let tr = integrate_rk4(&prob, &scalar(p), 200).unwrap();
        for (t, u) in tr.times.iter().zip(&tr.states) {
            assert!((u[0] - (-p * t).exp()).abs() <= 1e-9);
        }
    }

    #[test]
    fn rk4_fourth_order_and_euler_first_order() {
        let prob = decay(DecayObjective::Zero);
        let exact = (-1.0f64).exp();
        let err = |n, rk: bool| {
            let tr = if rk {
                integrate_rk4(&prob, &scalar(1.0), n).unwrap()
            } else {
                integrate_euler(&prob, &scalar(1.0), n).unwrap()
            };
            (tr.last()[0] - exact).abs()
        };
        let r = err(20, true) / err(40, true);
        assert!((14.0..=18.0).contains(&r), "rk4 ratio {r}");
        let r = err(200, false) / err(400, false);
        assert!((1.8..=2.2).contains(&r), "euler ratio {r}");
    }

    #[test]
    fn euler_exact_for_constant_rhs_and_close_to_rk4() {
        let prob = ReferenceProblem::default();
        let p = DenseVector::new(vec![2.0, 0.0, 0.0]).unwrap();
        let tr = integrate_euler(&prob, &p, 7).unwrap();
        assert!((tr.last()[0] - 2.0).abs() <= 1e-14);
        let q = ReferenceProblem::reference_params();
        let e = integrate_euler(&prob, &q, 100_000).unwrap().last()[0];
        let r = integrate_rk4(&prob, &q, 100).unwrap().last()[0];
        assert!((e - r).abs() <= 1e-4);
    }

    #[test]
    fn too_few_steps_and_blowup() {
        let prob = ReferenceProblem::default();
        assert!(matches!(
            integrate_rk4(&prob, &ReferenceProblem::reference_params(), 3),
            Err(Error::Contract(_))
        ));
        // u' = 1 + u² blows up at π/2
        let blow = ReferenceProblem {
            t_final: 3.0,
            ..ReferenceProblem::default()
        };
        let p = DenseVector::new(vec![1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(integrate_rk4(&blow, &p, 40), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn forward_sensitivity_closed_form() {
        let prob = decay(DecayObjective::Zero);
        let p = 0.8;
        let st = forward_sensitivity(&prob, &scalar(p), 1000).unwrap();
        for (i, &t) in st.trajectory.times.iter().enumerate().skip(1) {
            let exact = -t * (-p * t).exp();
            assert!(rel(st.sensitivities[i][(0, 0)], exact) <= 1e-6);
        }
        let last = st.sensitivities.last().unwrap()[(0, 0)];
        assert!(rel(last, -(-p).exp()) <= 1e-7);
    }

    #[test]
    fn reference_sensitivity_rhs() {
        let prob = ReferenceProblem::default();
        let p = ReferenceProblem::reference_params();
        let u = scalar(0.7);
        let s = DenseMatrix::from_rows(&[[0.1, -0.2, 0.3]]);
        let got = sensitivity_rhs(&prob, &p, &u, &s, 0.4);
        let a = p[1] + 2.0 * p[2] * 0.7;
        let expect = DenseMatrix::from_rows(&[[a * 0.1 + 1.0, a * -0.2 + 0.7, a * 0.3 + 0.49]]);
        assert!((&got - &expect).max_abs() <= 1e-15);
        let v = scalar(-1.3);
        let t = 0.4;
        let adj = adjoint_rhs(&prob, &p, &u, &v, t);
        let expect = 2.0 * (0.7 - t * t * t) - a * -1.3;
        assert!((adj[0] - expect).abs() <= 1e-15);
    }

    #[test]
    fn sensitivity_costs_one_plus_n() {
        let prob = ReferenceProblem::default();
        let p = ReferenceProblem::reference_params();
        let (_, plain) = counters::measure(|| integrate_rk4(&prob, &p, 100).unwrap());
        let (_, aug) = counters::measure(|| forward_sensitivity(&prob, &p, 100).unwrap());
        let r = aug.rhs_evals as f64 / plain.rhs_evals as f64;
        assert!((3.5..=4.5).contains(&r), "ratio {r}");
    }

    #[test]
    fn loss_values() {
        let prob = decay(DecayObjective::Linear);
        let p = 1.4;
        let tr = integrate_rk4(&prob, &scalar(p), 200).unwrap();
        let g = loss_G(&prob, &scalar(p), &tr).unwrap();
        assert!(rel(g, (1.0 - (-p).exp()) / p) <= 1e-9);
        struct One;
        impl OdeProblem for One {
            fn n_state(&self) -> usize {
                1
            }
            fn n_params(&self) -> usize {
                0
            }
            fn t_final(&self) -> f64 {
                2.5
            }
            fn f(&self, _: &DenseVector, _: &DenseVector, _: f64) -> DenseVector {
                scalar(0.0)
            }
            fn dfdu(&self, _: &DenseVector, _: &DenseVector, _: f64) -> DenseMatrix {
                DenseMatrix::zeros(1, 1)
            }
            fn dfdp(&self, _: &DenseVector, _: &DenseVector, _: f64) -> DenseMatrix {
                DenseMatrix::zeros(1, 0)
            }
            fn u0(&self, _: &DenseVector) -> DenseVector {
                scalar(0.0)
            }
            fn du0dp(&self, _: &DenseVector) -> DenseMatrix {
                DenseMatrix::zeros(1, 0)
            }
            fn g(&self, _: &DenseVector, _: &DenseVector, _: f64) -> f64 {
                1.0
            }
            fn dgdu(&self, _: &DenseVector, _: &DenseVector, _: f64) -> DenseVector {
                scalar(0.0)
            }
            fn dgdp(&self, _: &DenseVector, _: &DenseVector, _: f64) -> DenseVector {
                DenseVector::zeros(0)
            }
        }
        let none = DenseVector::zeros(0);
        let tr = integrate_rk4(&One, &none, 10).unwrap();
        assert!((loss_G(&One, &none, &tr).unwrap() - 2.5).abs() <= 1e-14);
        let odd = integrate_rk4(&One, &none, 11).unwrap();
        assert!(matches!(loss_G(&One, &none, &odd), Err(Error::Contract(_))));

        let r = ReferenceProblem::default();
        let q = ReferenceProblem::reference_params();
        let coarse = loss_G(&r, &q, &integrate_rk4(&r, &q, 1000).unwrap()).unwrap();
        let fine = loss_G(&r, &q, &integrate_rk4(&r, &q, 4000).unwrap()).unwrap();
        assert!(coarse.is_finite() && rel(coarse, fine) <= 1e-10);
    }

    #[test]
    fn adjoint_closed_form() {
        let prob = decay(DecayObjective::Square);
        let p = 0.9;
        let tr = integrate_rk4(&prob, &scalar(p), 400).unwrap();
        let adj = adjoint_solve(&prob, &scalar(p), &tr).unwrap();
        assert_eq!(adj.states.last().unwrap()[0], 0.0);
        let t_end = prob.t_final;
        for (t, v) in adj.times.iter().zip(&adj.states).take(390) {
            let exact = -(1.0 / p) * ((-p * t).exp() - (-2.0 * p * t_end).exp() * (p * t).exp());
            assert!(rel(v[0], exact) <= 1e-6, "t={t}");
        }
        let zero = decay(DecayObjective::Zero);
        let adj = adjoint_solve(&zero, &scalar(p), &tr).unwrap();
        assert!(adj.states.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn reference_gradients_agree() {
        let prob = ReferenceProblem::default();
        let p = ReferenceProblem::reference_params();
        let (fwd, _) = counters::measure(|| grad_G_forward(&prob, &p, 2000).unwrap());
        let (adj, c) = counters::measure(|| grad_G_adjoint(&prob, &p, 2000).unwrap());
        assert_eq!(c.ode_integrations, 2);
        let fd = grad_G_fd(&prob, &p, 2000).unwrap();
        assert!(vrel(&fwd, &adj) <= 1e-4);
        assert!(vrel(&fwd, &fd) <= 1e-4);
        assert!(vrel(&adj, &fd) <= 1e-4);
        for k in 0..3 {
            assert!(rel(adj[k], fwd[k]) <= 1e-4);
        }
    }

    #[test]
    fn zero_gradient_at_exact_fit() {
        // p = (1, 0, 0) gives u = t exactly
        let prob = ReferenceProblem {
            t_final: 1.0,
            target: Arc::new(|t| t),
        };
        let p = DenseVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(grad_G_forward(&prob, &p, 200).unwrap().norm() <= 1e-10);
        assert!(grad_G_adjoint(&prob, &p, 200).unwrap().norm() <= 1e-10);
    }

    #[test]
    fn grid_refinement_converges() {
        let prob = ReferenceProblem::default();
        let p = ReferenceProblem::reference_params();
        let grads: Vec<_> = [500, 1000, 2000, 4000]
            .iter()
            .map(|&n| grad_G_adjoint(&prob, &p, n).unwrap())
            .collect();
        let diffs: Vec<f64> = grads.windows(2).map(|w| (&w[1] - &w[0]).norm()).collect();
        assert!(diffs.windows(2).all(|d| d[1] <= d[0]), "{diffs:?}");
    }

    fn discrete_fd(prob: &ReferenceProblem, p: &DenseVector, samples: &[DataSample<'_>], n: usize) -> DenseVector {
        DenseVector::from_fn(p.len(), |k| {
            let h = 1e-6 * (1.0 + p[k].abs());
            let e = DenseVector::unit(p.len(), k);
            let hi = loss_G_discrete(prob, &p.axpy(h, &e), samples, n).unwrap();
            let lo = loss_G_discrete(prob, &p.axpy(-h, &e), samples, n).unwrap();
            (hi - lo) / (2.0 * h)
        })
    }

    #[test]
    fn discrete_data_gradients() {
        let prob = ReferenceProblem::default();
        let p = ReferenceProblem::reference_params();
        assert_eq!(grad_G_discrete_data(&prob, &p, &[], 100).unwrap().norm(), 0.0);

        let end = SquaredMisfit { target: scalar(0.3) };
        let one = [DataSample { time: 1.0, term: &end }];
        let g = grad_G_discrete_data(&prob, &p, &one, 400).unwrap();
        assert!(vrel(&g, &discrete_fd(&prob, &p, &one, 400)) <= 1e-6);

        let terms: Vec<SquaredMisfit> = [0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&t: &f64| SquaredMisfit {
                target: scalar(t.powi(3)),
            })
            .collect();
        let samples: Vec<DataSample<'_>> = [0.25, 0.5, 0.75, 1.0]
            .iter()
            .zip(&terms)
            .map(|(&time, term)| DataSample { time, term })
            .collect();
        let g = grad_G_discrete_data(&prob, &p, &samples, 400).unwrap();
        assert!(vrel(&g, &discrete_fd(&prob, &p, &samples, 400)) <= 1e-3);

        let off = [DataSample {
            time: 0.3333,
            term: &end,
        }];
        assert!(matches!(
            grad_G_discrete_data(&prob, &p, &off, 400),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn csv_columns() {
        let prob = ReferenceProblem::default();
        let res = adjoint_gradient(&prob, &ReferenceProblem::reference_params(), 8).unwrap();
        let csv = trajectory_csv(&res.trajectory, &res.adjoint);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "t,u,v");
        assert_eq!(lines.len(), 10);
        assert!(lines[9].starts_with("1,"));
    }
}
