use std::sync::Arc;

use nalgebra::DMatrix;
use ocplab::costs::RunningCost;
use ocplab::dissipativity::{check_differential, DissipationGrid, RefineOptions, StorageCertificate};
use ocplab::dynamics::ControlAffineSystem;
use ocplab::problem::Problem;
use ocplab::problems;
use ocplab::regulator::{qr_horizon_experiment, riccati_finite, QROptions, QRProblem, QRVerdict};
use ocplab::signals::ControlValueSet;
use ocplab::solvers::{solve_direct, DirectOptions};

fn scalar_linear(a: f64, b: f64) -> Problem {
    let sys = ControlAffineSystem::linear(1, 1, vec![a], vec![b]);
    let cost = RunningCost::new(Arc::new(|_, x| x[0] * x[0]), Arc::new(|_, _, u| u[0] * u[0]));
    Problem::new("scalar", sys, cost, vec![1.0], ControlValueSet::full_space(1, 2.0).unwrap(), vec![0.0]).unwrap()
}

#[test]
fn detects_linear_quadratic_data() {
    let qr = QRProblem::from_problem(problems::lqr().unwrap()).unwrap();
    let lin = qr.linear.as_ref().unwrap();
    assert!((lin.a[(0, 0)]).abs() < 1e-12);
    assert!((lin.b[(0, 0)] - 1.0).abs() < 1e-12);
    assert!((lin.q[(0, 0)] - 1.0).abs() < 1e-12);
    assert!((qr.r[(0, 0)] - 1.0).abs() < 1e-12);
    assert!((qr.problem.cost.growth.as_ref().unwrap().alpha - 1.0).abs() < 1e-12);
}

#[test]
fn rejects_indefinite_or_bounded_regulators() {
    let mut p = problems::lqr().unwrap();
    p.cost = RunningCost::new(Arc::new(|_, x| x[0] * x[0]), Arc::new(|_, _, u| -u[0] * u[0]));
    assert!(QRProblem::from_problem(p).is_err());
    assert!(QRProblem::from_problem(problems::ex41().unwrap()).is_err());
}

#[test]
fn direct_cost_dominates_riccati_cost() {
    let p = problems::lqr().unwrap();
    let s = |v: f64| DMatrix::from_element(1, 1, v);
    for t in [1.0, 3.0] {
        let riccati = riccati_finite(&s(0.0), &s(1.0), &s(1.0), &s(1.0), t, 1e-12).unwrap().p_at(0.0)[(0, 0)];
        let direct = solve_direct(&p, t, 200, &DirectOptions::default()).unwrap();
        assert!(direct.cost >= riccati * (1.0 - 1e-4), "T={t}: {} < {riccati}", direct.cost);
        assert!(direct.cost <= riccati * (1.0 + 1e-3));
    }
}

#[test]
fn stabilizable_instance_settles_on_the_window() {
    let qr = QRProblem::from_problem(problems::lqr().unwrap()).unwrap();
    let opts = QROptions { cells_per_unit: 20.0, ..QROptions::default() };
    let rep = qr_horizon_experiment(&qr, &[2.0, 5.0, 10.0, 20.0], &opts).unwrap();
    assert_eq!(rep.verdict, QRVerdict::AlternativeB, "{}", rep.to_csv());
    let last = rep.rows.last().unwrap();
    assert!(last.window_distance.unwrap() < 1e-3);
    assert!(last.riccati_distance.unwrap() < 2e-2);
    assert!((rep.feasible_cost.unwrap() - 1.0).abs() < 1e-8);
    assert!(rep.summary().contains("subsequence"));
}

#[test]
fn unstabilizable_instance_reports_infinite_cost() {
    let qr = QRProblem::from_problem(scalar_linear(1.0, 0.0)).unwrap();
    let opts = QROptions { cells_per_unit: 10.0, ..QROptions::default() };
    let rep = qr_horizon_experiment(&qr, &[2.0, 4.0, 6.0, 8.0], &opts).unwrap();
    assert_eq!(rep.verdict, QRVerdict::AlternativeA, "{}", rep.to_csv());
    assert!(rep.feasible_cost.is_none());
    for r in &rep.rows {
        let exact = ((2.0 * r.horizon).exp() - 1.0) / 2.0;
        assert!((r.riccati_cost.unwrap() - exact).abs() < 1e-6 * exact);
    }
}

#[test]
fn cubic_damping_is_dissipative_with_quadratic_storage() {
    let sys = ControlAffineSystem::new(1, 1, Arc::new(|_, x| vec![-x[0].powi(3)]), Arc::new(|_, _| vec![1.0]));
    let cost = RunningCost::new(Arc::new(|_, x| x[0] * x[0]), Arc::new(|_, _, u| u[0] * u[0]));
    let set = ControlValueSet::full_space(1, 2.0).unwrap();
    let cert = StorageCertificate::new("x1^2/2", Arc::new(|x| 0.5 * x[0] * x[0]), vec![-10.0], vec![10.0]);
    let grid = DissipationGrid::for_problem(1.0, &[], &[-10.0], &[10.0], &set, 10.0, 41);
    let rep = check_differential(&cert, &sys, &cost, &grid, RefineOptions::default()).unwrap();
    assert!(rep.ok, "{rep}");

    let p = Problem::new("cubic", sys, cost, vec![1.0], set, vec![0.0]).unwrap();
    let qr = QRProblem::from_problem(p).unwrap();
    assert!(qr.linear.is_none());
    let opts = QROptions { cells_per_unit: 20.0, ..QROptions::default() };
    let rep = qr_horizon_experiment(&qr, &[2.0, 5.0, 10.0], &opts).unwrap();
    let d = rep.rows.last().unwrap().window_distance.unwrap();
    assert!(d < 1e-3, "{}", rep.to_csv());
}
