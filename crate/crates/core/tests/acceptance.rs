//! Acceptance run: every criterion at its stated tolerance, one line each.

use matcalc::criteria::{run_suite, SuiteId, SuiteOptions};

const SEED: u64 = 20240611;

fn run(id: SuiteId) {
    let report = run_suite(
        id,
        &SuiteOptions {
            seed: SEED,
            fault: None,
        },
    );
    println!("{}", report.summary_line());
    for c in report.failures() {
        println!("    failed: {} = {:e} (want {})", c.name, c.value, c.bound);
    }
    assert!(report.passed(), "{}", report.summary_line());
}

#[test]
fn criterion_01_babylonian() {
    run(SuiteId::Babylonian);
}

#[test]
fn criterion_02_matrix_function_jacdet() {
    run(SuiteId::MatrixFunctionJacdet);
}

#[test]
fn criterion_03_kronecker() {
    run(SuiteId::Kronecker);
}

#[test]
fn criterion_04_determinant_rules() {
    run(SuiteId::DeterminantRules);
}

#[test]
fn criterion_05_tridiag_adjoint() {
    run(SuiteId::TridiagAdjoint);
}

#[test]
fn criterion_06_ode_sensitivity() {
    run(SuiteId::OdeSensitivity);
}

#[test]
fn criterion_07_fd_sweep() {
    run(SuiteId::FdSweep);
}

#[test]
fn criterion_08_eigen_perturbation() {
    run(SuiteId::EigenPerturbation);
}

#[test]
fn criterion_09_hessians() {
    run(SuiteId::Hessians);
}

#[test]
fn criterion_10_ad_cross_mode() {
    run(SuiteId::AdCrossMode);
}

#[test]
fn criterion_11_cost_model() {
    run(SuiteId::CostModel);
}

#[test]
fn numeric_core_invariants() {
    run(SuiteId::Linalg);
}
