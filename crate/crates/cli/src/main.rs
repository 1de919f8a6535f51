//! `matcalc`: runs the verification suites and the experiment reproductions.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 usage error, 3 numeric error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use matcalc::adjoint_linear::{directional_check, random_dp, value_and_grad_g, TridiagProblem};
use matcalc::counters;
use matcalc::criteria::{self, Fault, SuiteId, SuiteOptions, SuiteReport};
use matcalc::eigsens;
use matcalc::error::Error;
use matcalc::fdcheck;
use matcalc::linalg::{jacobi_eigen, DenseMatrix, DenseVector};
use matcalc::odesens::{self, ReferenceProblem};
use matcalc::program::{GeneratedProgram, ScalarProgram, SinPoly};
use matcalc::random::Rng;
use matcalc::second_order;

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(
    name = "matcalc",
    version,
    about = "Matrix-calculus derivative checks and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for the ChaCha8 generator.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Problem size (meaning depends on the subcommand).
    #[arg(long, global = true)]
    n: Option<usize>,

    /// Integration steps; even and at least 4.
    #[arg(long, global = true)]
    steps: Option<usize>,

    /// Write the artifact here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Eq)]
enum Command {
    /// Run every verification suite.
    Check {
        /// Flip the sign of one analytic derivative (for testing the harness).
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Finite-difference error sweep for f(A) = A².
    Fdsweep,
    /// Adjoint gradient of the tridiagonal objective.
    Tridiag,
    /// Forward, adjoint and difference gradients on the reference ODE.
    Odegrad,
    /// Jacobian determinants of matrix functions on M_ij = (i - j)².
    Jacdet,
    /// Eigenvalue derivatives against differences.
    Eig,
    /// Hessians, Hessian-vector products and a Newton step.
    HessianDemo,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check { .. } => "check",
            Command::Fdsweep => "fdsweep",
            Command::Tridiag => "tridiag",
            Command::Odegrad => "odegrad",
            Command::Jacdet => "jacdet",
            Command::Eig => "eig",
            Command::HessianDemo => "hessian-demo",
        }
    }

    fn default_format(&self) -> Format {
        match self {
            Command::Fdsweep | Command::Eig => Format::Csv,
            _ => Format::Json,
        }
    }

    fn supports_csv(&self) -> bool {
        matches!(self, Command::Fdsweep | Command::Eig | Command::Odegrad)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

/// Why a run did not pass.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Numeric(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

/// Resolved run settings; recorded verbatim in every report.
struct RunConfig {
    command: Command,
    seed: u64,
    n: Option<usize>,
    steps: Option<usize>,
    format: Format,
    out: Option<PathBuf>,
}

impl RunConfig {
    fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("subcommand".into(), json!(self.command.name()));
        m.insert("format".into(), json!(self.format.name()));
        if let Some(n) = self.n {
            m.insert("n".into(), json!(n));
        }
        if let Some(s) = self.steps {
            m.insert("steps".into(), json!(s));
        }
        if let Command::Check { inject_fault: Some(f) } = &self.command {
            m.insert("inject_fault".into(), json!(f));
        }
        Value::Object(m)
    }

    /// The common envelope plus subcommand-specific fields.
    fn report(&self, residuals: Value, passed: bool, extra: Value) -> Value {
        let mut m = Map::new();
        m.insert("tool_version".into(), json!(TOOL_VERSION));
        m.insert("seed".into(), json!(self.seed));
        m.insert("config".into(), self.to_json());
        m.insert("residuals".into(), residuals);
        m.insert("passed".into(), json!(passed));
        if let Value::Object(e) = extra {
            m.extend(e);
        }
        Value::Object(m)
    }

    /// Writes the main artifact. A CSV artifact cannot carry the run
    /// metadata, so its JSON report goes to `<out>.meta.json` (or stderr).
    fn emit(&self, report: &Value, csv: Option<String>) -> io::Result<()> {
        let json_text = serde_json::to_string_pretty(report).expect("reports are plain JSON") + "\n";
        match (csv, &self.out) {
            (Some(text), Some(path)) => {
                fs::write(path, text)?;
                fs::write(meta_path(path), json_text)
            }
            (Some(text), None) => {
                io::stdout().write_all(text.as_bytes())?;
                io::stderr().write_all(json_text.as_bytes())
            }
            (None, Some(path)) => fs::write(path, json_text),
            (None, None) => io::stdout().write_all(json_text.as_bytes()),
        }
    }
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn residual_map<'a>(items: impl IntoIterator<Item = (&'a str, f64)>) -> Value {
    Value::Object(items.into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect())
}

fn vec_json(v: &DenseVector) -> Value {
    json!(v.as_slice())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let format = cli.format.unwrap_or(cli.command.default_format());
    let cfg = RunConfig {
        command: cli.command,
        seed: cli.seed,
        n: cli.n,
        steps: cli.steps,
        format,
        out: cli.out,
    };
    let outcome = if format == Format::Csv && !cfg.command.supports_csv() {
        Err(Failure::Usage(format!("{} has no CSV output", cfg.command.name())))
    } else {
        dispatch(&cfg)
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("matcalc: usage error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("matcalc: numeric error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("matcalc: i/o error: {m}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cfg: &RunConfig) -> Outcome {
    match &cfg.command {
        Command::Check { inject_fault } => run_check(cfg, inject_fault.as_deref()),
        Command::Fdsweep => run_fdsweep(cfg),
        Command::Tridiag => run_tridiag(cfg),
        Command::Odegrad => run_odegrad(cfg),
        Command::Jacdet => run_jacdet(cfg),
        Command::Eig => run_eig(cfg),
        Command::HessianDemo => run_hessian_demo(cfg),
    }
}

fn suite_json(r: &SuiteReport) -> Value {
    let checks: Vec<Value> = r
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "value": c.value,
                "bound": c.bound.to_string(),
                "passed": c.passed(),
            })
        })
        .collect();
    json!({
        "suite": r.id.key(),
        "criterion": r.id.criterion(),
        "passed": r.passed(),
        "error": r.error,
        "worst": r.worst().map(|c| json!({"name": c.name, "value": c.value})),
        "checks": checks,
    })
}

fn run_check(cfg: &RunConfig, fault: Option<&str>) -> Outcome {
    let fault = fault
        .map(|f| {
            f.parse::<Fault>().map_err(|_| {
                let names: Vec<&str> = Fault::ALL.iter().map(|f| f.name()).collect();
                Failure::Usage(format!("unknown fault '{f}' (expected one of {})", names.join(", ")))
            })
        })
        .transpose()?;
    let reports = criteria::run_all(&SuiteOptions { seed: cfg.seed, fault });
    for r in &reports {
        eprintln!("{}", r.summary_line());
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.id.key()).collect();
    let numeric = reports.iter().any(|r| r.numeric_error);
    if failed.is_empty() {
        eprintln!("all {} suites passed", reports.len());
    } else {
        eprintln!("failing suites: {}", failed.join(", "));
    }
    let residuals = Value::Object(
        reports
            .iter()
            .map(|r| (r.id.key().to_string(), json!(r.worst().map(|c| c.value))))
            .collect(),
    );
    let report = cfg.report(
        residuals,
        failed.is_empty(),
        json!({
            "failed_suites": failed,
            "suites": reports.iter().map(suite_json).collect::<Vec<_>>(),
        }),
    );
    cfg.emit(&report, None)?;
    if numeric {
        return Err(Failure::Numeric("a suite stopped on a numeric error".into()));
    }
    Ok(failed.is_empty())
}

fn run_fdsweep(cfg: &RunConfig) -> Outcome {
    let n = cfg.n.unwrap_or(4);
    if n == 0 {
        return Err(Failure::Usage("--n must be positive".into()));
    }
    let mut rng = Rng::seeded(cfg.seed);
    let rows = criteria::square_sweep(&mut rng, n, false)?;
    let shape = fdcheck::sweep_shape(&rows).ok_or_else(|| Failure::Usage("empty sweep".into()))?;
    let valley = shape.is_valley(rows.len());
    let report = cfg.report(
        residuals_from_sweep(&shape),
        valley,
        json!({
            "rows": rows.iter().map(|r| json!({
                "scale": r.scale,
                "perturbation_norm": r.perturbation_norm,
                "relative_error": r.relative_error,
            })).collect::<Vec<_>>(),
            "argmin_scale": shape.argmin_scale,
            "valley": valley,
        }),
    );
    let csv = (cfg.format == Format::Csv).then(|| fdcheck::sweep_to_csv(&rows));
    cfg.emit(&report, csv)?;
    Ok(valley)
}

fn residuals_from_sweep(shape: &fdcheck::SweepShape) -> Value {
    residual_map([("min_relative_error", shape.min_error)])
}

fn run_tridiag(cfg: &RunConfig) -> Outcome {
    let n = cfg.n.unwrap_or(100);
    if n < 2 {
        return Err(Failure::Usage("--n must be at least 2".into()));
    }
    let mut rng = Rng::seeded(cfg.seed);
    let prob = TridiagProblem::random(&mut rng, n)?;
    let (r, counts) = counters::measure(|| value_and_grad_g(&prob));
    let (g, grad) = r?;
    let dp = random_dp(&mut rng, &prob.p);
    let check = directional_check(&prob, &dp)?;
    let solves = counts.tridiag_solves;
    let passed = check.rel_err <= 1e-3 && solves == 2;
    let report = cfg.report(
        residual_map([("directional_rel_err", check.rel_err)]),
        passed,
        json!({
            "g": g,
            "grad": vec_json(&grad),
            "fd_directional": check.actual,
            "adjoint_directional": check.predicted,
            "rel_err": check.rel_err,
            "solve_count": solves,
            "op_count": counts.flops,
        }),
    );
    cfg.emit(&report, None)?;
    Ok(passed)
}

fn run_odegrad(cfg: &RunConfig) -> Outcome {
    let steps = cfg.steps.unwrap_or(2000);
    if steps < 4 || !steps.is_multiple_of(2) {
        return Err(Failure::Usage("--steps must be even and at least 4".into()));
    }
    let prob = ReferenceProblem::default();
    let p = ReferenceProblem::reference_params();
    let fwd = odesens::grad_G_forward(&prob, &p, steps)?;
    let (adj, counts) = counters::measure(|| odesens::adjoint_gradient(&prob, &p, steps));
    let adj = adj?;
    let fd = odesens::grad_G_fd(&prob, &p, steps)?;
    let rel = |a: &DenseVector, b: &DenseVector| fdcheck::relative_error(a, b);
    let fa = rel(&fwd, &adj.grad)?;
    let ff = rel(&fwd, &fd)?;
    let af = rel(&adj.grad, &fd)?;
    let passed = fa.max(ff).max(af) <= 1e-3 && counts.ode_integrations == 2;
    let report = cfg.report(
        residual_map([("forward_vs_adjoint", fa), ("forward_vs_fd", ff), ("adjoint_vs_fd", af)]),
        passed,
        json!({
            "p": vec_json(&p),
            "n_steps": steps,
            "G": adj.value,
            "grad_forward": vec_json(&fwd),
            "grad_adjoint": vec_json(&adj.grad),
            "grad_fd": vec_json(&fd),
            "pairwise_rel_err": {
                "forward_adjoint": fa,
                "forward_fd": ff,
                "adjoint_fd": af,
            },
            "adjoint_integrations": counts.ode_integrations,
        }),
    );
    let csv = (cfg.format == Format::Csv).then(|| odesens::trajectory_csv(&adj.trajectory, &adj.adjoint));
    cfg.emit(&report, csv)?;
    Ok(passed)
}

fn run_jacdet(cfg: &RunConfig) -> Outcome {
    let rows = criteria::jacdet_experiment()?;
    let report_rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "function": r.function.name(),
                "fd": r.fd,
                "formula": r.formula,
                "rel_diff": r.rel_diff,
                "reference": r.reference,
                "reference_tolerance": r.tolerance,
                "fd_matches_reference": (r.fd - r.reference).abs() <= r.tolerance * r.reference.abs(),
                "formula_matches_reference": (r.formula - r.reference).abs() <= r.tolerance * r.reference.abs(),
            })
        })
        .collect();
    let suite = criteria::run_suite(SuiteId::MatrixFunctionJacdet, &SuiteOptions::default());
    let residuals = Value::Object(
        rows.iter()
            .map(|r| (format!("{}_fd_vs_formula", r.function.name()), json!(r.rel_diff)))
            .collect(),
    );
    let report = cfg.report(residuals, suite.passed(), json!({ "rows": report_rows }));
    cfg.emit(&report, None)?;
    Ok(suite.passed())
}

fn run_eig(cfg: &RunConfig) -> Outcome {
    let n = cfg.n.unwrap_or(5);
    if n == 0 {
        return Err(Failure::Usage("--n must be positive".into()));
    }
    let mut rng = Rng::seeded(cfg.seed);
    let s = rng.symmetric_matrix(n);
    let e = rng.symmetric_matrix(n);
    let h = 1e-6;
    let rows = eigsens::fd_table(&s, &e, h)?;
    let decomp = jacobi_eigen(&s)?;
    let pert = eigsens::perturbation(&decomp, &e)?;
    let analytic = DenseVector::new(rows.iter().map(|r| r.analytic).collect())?;
    let fd = DenseVector::new(rows.iter().map(|r| r.finite_difference).collect())?;
    let fd_err = fdcheck::relative_error(&analytic, &fd)?;
    let trace_err = (analytic.sum() - e.trace()).abs();
    let anti = (&pert.qt_dq + &pert.qt_dq.transpose()).max_abs();
    let passed = fd_err <= 1e-4 && trace_err <= 1e-12 && anti <= 1e-12;
    let report = cfg.report(
        residual_map([
            ("fd_rel_err", fd_err),
            ("trace_rule", trace_err),
            ("antisymmetry", anti),
        ]),
        passed,
        json!({
            "h": h,
            "rows": rows.iter().map(|r| json!({
                "index": r.index,
                "lambda": r.lambda,
                "dlambda": r.analytic,
                "fd": r.finite_difference,
                "rel_err": r.rel_err,
            })).collect::<Vec<_>>(),
        }),
    );
    let csv = (cfg.format == Format::Csv).then(|| eigsens::fd_table_csv(&rows));
    cfg.emit(&report, csv)?;
    Ok(passed)
}

fn run_hessian_demo(cfg: &RunConfig) -> Outcome {
    let n = cfg.n.unwrap_or(4);
    if n == 0 || n > second_order::HESSIAN_MAX_DIM {
        return Err(Failure::Usage(format!(
            "--n must be in 1..={}",
            second_order::HESSIAN_MAX_DIM
        )));
    }
    let mut rng = Rng::seeded(cfg.seed);

    let x = rng.uniform_vector(2, -1.5, 1.5);
    let (a, b) = (x[0], x[1]);
    let closed = DenseMatrix::from_rows(&[
        [-a.sin() + 2.0 * b.powi(3), 6.0 * a * b * b],
        [6.0 * a * b * b, 6.0 * a * a * b],
    ]);
    let h = second_order::hessian(&SinPoly, &x)?;
    let closed_err = (&h.matrix - &closed).max_abs();
    let newton = second_order::newton_min_step(&SinPoly, &x)?;

    let prog = GeneratedProgram::random(&mut rng, n, 4);
    let y = rng.uniform_vector(n, -1.0, 1.0);
    let hg = second_order::hessian(&prog, &y)?;
    let dx = rng.unit_vector(n);
    let dx2 = rng.unit_vector(n);
    let bilinear = second_order::bilinear_identity_check(&prog, &y, &dx, &dx2, 1e-4)?;
    let dirs = [dx.clone(), dx2.clone()];
    let model = second_order::quadratic_model_check(&prog, &y, &dirs, &[1e-1, 1e-2, 1e-3])?;
    let decreasing = model.decreasing(1e-8);
    let g = prog.gradient_reverse(&y)?;

    let passed = closed_err <= 1e-10 && hg.symmetry_defect <= 1e-10 && decreasing;
    let report = cfg.report(
        residual_map([
            ("sinpoly_closed_form", closed_err),
            ("symmetry_defect", hg.symmetry_defect),
            ("bilinear_identity", bilinear),
        ]),
        passed,
        json!({
            "sinpoly": {
                "x": vec_json(&x),
                "hessian": rows_json(&h.matrix),
                "newton_step": vec_json(&newton.step),
                "eigenvalues": vec_json(&newton.eigenvalues),
                "classification": newton.classification.name(),
            },
            "generated": {
                "n": n,
                "x": vec_json(&y),
                "value": prog.value(&y)?,
                "gradient": vec_json(&g),
                "hessian": rows_json(&hg.matrix),
                "quadratic_model": model.rows.iter().map(|r| json!({
                    "direction": r.direction,
                    "scale": r.scale,
                    "remainder_ratio": r.remainder_ratio,
                })).collect::<Vec<_>>(),
                "quadratic_model_decreasing": decreasing,
            },
        }),
    );
    cfg.emit(&report, None)?;
    Ok(passed)
}

fn rows_json(m: &DenseMatrix) -> Value {
    json!((0..m.rows()).map(|i| m.row(i).into_vec()).collect::<Vec<_>>())
}
