use std::io::BufReader;

use dgsem_tau::solver::{read_snapshot, stable_time_step, write_snapshot};
use dgsem_tau::*;

fn setup(n: usize) -> (Discretization64, Mesh64) {
    let disc = Discretization::manufactured(GasParameters::default());
    let mesh = build_cartesian_mesh(2, 2, Orders::uniform(n)).unwrap();
    (disc, mesh)
}

#[test]
fn coarse_problem_converges_and_records_history() {
    let (disc, mesh) = setup(3);
    let init = disc.sample_exact(&mesh).unwrap();
    let opts = SolverOptions {
        tolerance: 1e-8,
        ..SolverOptions::default()
    };
    let (q, report) = solve_steady(&disc, &mesh, init, &opts).unwrap();
    assert!(report.converged);
    assert!(report.final_residual_inf <= 1e-8);
    assert!(!report.history.is_empty());
    assert!(report.history.windows(2).all(|w| w[0].0 < w[1].0));
    let residual = disc
        .residual(&q, &mesh, Flavor::NonIsolated)
        .unwrap()
        .elements
        .iter()
        .map(|e| e.max_abs())
        .fold(0.0, f64::max);
    assert!((residual - report.final_residual_inf).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.csv");
    report.write_history_csv(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().next(), Some("iteration,residual_inf"));
    assert_eq!(text.lines().count(), report.history.len() + 1);
}

#[test]
fn exhausted_budget_reports_non_convergence() {
    let (disc, mesh) = setup(3);
    let init = GlobalSolution::uniform(&mesh, State::from_primitive(1.0, 1.0, 1.0, 1.0, 1.4));
    let opts = SolverOptions {
        max_iterations: 5,
        ..SolverOptions::default()
    };
    let (_, report) = solve_steady(&disc, &mesh, init, &opts).unwrap();
    assert!(!report.converged);
    assert_eq!(report.iterations, 5);
}

#[test]
fn invalid_options_are_rejected() {
    let (disc, mesh) = setup(2);
    let init = disc.sample_exact(&mesh).unwrap();
    let opts = SolverOptions {
        cfl: 0.0,
        ..SolverOptions::default()
    };
    assert!(solve_steady(&disc, &mesh, init, &opts).is_err());
}

#[test]
fn time_step_shrinks_with_order() {
    let disc = Discretization64::manufactured(GasParameters::default());
    let steps: Vec<f64> = [2, 4, 8]
        .iter()
        .map(|&n| {
            let mesh = build_cartesian_mesh(2, 2, Orders::uniform(n)).unwrap();
            let q = disc.sample_exact(&mesh).unwrap();
            stable_time_step(&disc, &q, &mesh, 0.8)
        })
        .collect();
    assert!(steps.windows(2).all(|w| w[1] < w[0]), "{steps:?}");
}

#[test]
fn interpolation_error_of_exact_samples_decays() {
    let errors: Vec<ErrorNorms<f64>> = [4, 8]
        .iter()
        .map(|&n| {
            let (disc, mesh) = setup(n);
            let q = disc.sample_exact(&mesh).unwrap();
            discretization_error(&disc, &q, &mesh).unwrap()
        })
        .collect();
    assert!(errors[1].l2 < 0.05 * errors[0].l2, "{errors:?}");
    let e = &errors[1];
    assert_eq!(e.per_element_linf.len(), 4);
    assert_eq!(
        e.linf,
        e.per_element_linf.iter().cloned().fold(0.0, f64::max)
    );
}

#[test]
fn snapshot_round_trip_is_exact() {
    let disc = Discretization64::manufactured(GasParameters::default());
    let orders = (0..4).map(|k| Orders::new(1 + k, 4 - k)).collect();
    let mesh = build_cartesian_mesh(2, 2, OrderLayout::PerElement(orders)).unwrap();
    let q = disc.sample_exact(&mesh).unwrap();
    let mut buf = Vec::new();
    write_snapshot(&q, &mut buf).unwrap();
    let back: GlobalSolution64 = read_snapshot(BufReader::new(buf.as_slice())).unwrap();
    assert_eq!(back, q);
}

#[test]
fn snapshot_rejects_garbage() {
    let text = "# dgsem-tau solution v1\nelements 1\nelement 0 1 1\n1 2 3\n";
    assert!(read_snapshot::<f64>(BufReader::new(text.as_bytes())).is_err());
    assert!(read_snapshot::<f64>(BufReader::new("hello\n".as_bytes())).is_err());
}
