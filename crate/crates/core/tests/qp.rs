mod common;

use common::family;
use dcafolio::dca::build_subproblem;
use dcafolio::qp::{kkt_residuals, solve_qp, QpProblem, QpSettings, QpStatus};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Sort-and-threshold Euclidean projection onto the probability simplex.
fn project_simplex(c: &[f64]) -> Vec<f64> {
    let mut u = c.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            tau = t;
        }
    }
    c.iter().map(|v| (v - tau).max(0.0)).collect()
}

fn projection_qp(c: &[f64]) -> QpProblem {
    let n = c.len();
    QpProblem::new(DMatrix::identity(n, n), c.iter().map(|v| -v).collect())
        .with_equalities(DMatrix::from_element(1, n, 1.0), vec![1.0])
        .with_bounds(vec![0.0; n], vec![f64::INFINITY; n])
}

/// Random convex QP with a known feasible point `y0` in the unit box.
fn random_qp(n: usize, rows: usize, data: &[f64]) -> (QpProblem, Vec<f64>) {
    let mut it = data.iter().copied().cycle();
    let mut next = move || it.next().unwrap();
    let b = DMatrix::from_fn(n, n, |_, _| next() - 0.5);
    let p = &b * b.transpose();
    let q: Vec<f64> = (0..n).map(|_| next() - 0.5).collect();
    let raw: Vec<f64> = (0..n).map(|_| next() + 0.1).collect();
    let total: f64 = raw.iter().sum();
    let y0: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let a_in = DMatrix::from_fn(rows, n, |_, _| next() - 0.5);
    let h_in: Vec<f64> = (0..rows)
        .map(|i| (0..n).map(|j| a_in[(i, j)] * y0[j]).sum::<f64>() + next() * 0.1)
        .collect();
    let qp = QpProblem::new(p, q)
        .with_equalities(DMatrix::from_element(1, n, 1.0), vec![1.0])
        .with_inequalities(a_in, h_in)
        .with_bounds(vec![0.0; n], vec![1.0; n]);
    (qp, y0)
}

#[test]
fn simplex_projection_reference_case() {
    let c = [0.8, 0.3, -0.1];
    let sol = solve_qp(&projection_qp(&c), &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    for (got, want) in sol.y.iter().zip([0.75, 0.25, 0.0]) {
        assert!((got - want).abs() <= 1e-8, "{:?}", sol.y);
    }
    // The oracle itself agrees with the hand value.
    for (got, want) in project_simplex(&c).into_iter().zip([0.75, 0.25, 0.0]) {
        assert!((got - want).abs() <= 1e-15);
    }
}

#[test]
fn contradictory_rows_are_infeasible() {
    let qp = projection_qp(&[0.2, 0.2])
        .with_inequalities(DMatrix::from_element(1, 2, 1.0), vec![0.5]);
    let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Infeasible);
    assert!(sol.certificate.is_some());
}

#[test]
fn asymmetric_hessian_is_rejected() {
    let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(solve_qp(&QpProblem::new(p, vec![0.0; 2]), &QpSettings::default()).is_err());
}

#[test]
fn dca_subproblems_are_certified() {
    for i in 0..20 {
        let inst = family(i);
        let v: Vec<f64> = (0..inst.n).map(|j| if j % 2 == 0 { 2.0 } else { -2.0 }).collect();
        let qp = build_subproblem(&inst, &v);
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "instance {i}");
        assert!(kkt_residuals(&qp, &sol.y, &sol.duals).unwrap().within(1e-8), "instance {i}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn projection_matches_oracle(c in prop::collection::vec(-2.0f64..2.0, 1..12)) {
        let sol = solve_qp(&projection_qp(&c), &QpSettings::default()).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        for (got, want) in sol.y.iter().zip(project_simplex(&c)) {
            prop_assert!((got - want).abs() <= 1e-8);
        }
    }

    #[test]
    fn optimal_solutions_recheck_and_beat_feasible_points(
        n in 2usize..8,
        rows in 0usize..4,
        data in prop::collection::vec(0.0f64..1.0, 64),
    ) {
        let (qp, y0) = random_qp(n, rows, &data);
        let settings = QpSettings::default();
        let sol = solve_qp(&qp, &settings).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        let res = kkt_residuals(&qp, &sol.y, &sol.duals).unwrap();
        prop_assert!(res.within(settings.tol), "{:?}", res);
        let obj = qp.objective(&sol.y);
        prop_assert!(obj <= qp.objective(&y0) + 10.0 * settings.tol * (1.0 + obj.abs()));
    }

    #[test]
    fn scaling_the_objective_keeps_the_minimizer(
        n in 2usize..7,
        data in prop::collection::vec(0.0f64..1.0, 64),
        scale in 0.01f64..100.0,
    ) {
        let (qp, _) = random_qp(n, 2, &data);
        let mut scaled = qp.clone();
        scaled.p *= scale;
        scaled.q.iter_mut().for_each(|v| *v *= scale);
        let a = solve_qp(&qp, &QpSettings::default()).unwrap();
        let b = solve_qp(&scaled, &QpSettings::default()).unwrap();
        // Only a strictly convex objective pins the minimizer down.
        let min_eig = qp.p.clone().symmetric_eigenvalues().min();
        if min_eig > 1e-3 {
            for (u, v) in a.y.iter().zip(&b.y) {
                prop_assert!((u - v).abs() <= 1e-6);
            }
        }
        prop_assert!((b.objective - scale * a.objective).abs() <= 1e-6 * (1.0 + b.objective.abs()));
    }

    #[test]
    fn solves_are_deterministic(n in 2usize..7, data in prop::collection::vec(0.0f64..1.0, 64)) {
        let (qp, _) = random_qp(n, 3, &data);
        let a = solve_qp(&qp, &QpSettings::default()).unwrap();
        let b = solve_qp(&qp, &QpSettings::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}
