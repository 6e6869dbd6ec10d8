use std::sync::Arc;

use impulse_qvi::*;

#[test]
fn single_precision_obstacle_solve() {
    let g: Arc<Grid32> = Arc::new(Grid::new(&[-1.0], &[1.0], &[41]).unwrap());
    let p: ObstacleProblem32 = ObstacleProblem::new(
        OperatorSpec::laplace(),
        ObstacleSide::Lower,
        GridFunction::from_fn(g.clone(), |x| 0.5 - x[0] * x[0]),
        GridFunction::zeros(g.clone()),
        GridFunction::zeros(g.clone()),
    )
    .unwrap();
    let (u, rep) = solve_obstacle(&p, &SolverOptions::new(1e-3, 100_000)).unwrap();
    assert!(rep.converged);
    let a = 1.0 - std::f32::consts::FRAC_1_SQRT_2;
    let exact = GridFunction::from_fn(g, |x| {
        if x[0].abs() <= a {
            0.5 - x[0] * x[0]
        } else {
            2.0 * a * (1.0 - x[0].abs())
        }
    });
    assert!(u.sup_distance(&exact).unwrap() < 1e-2);
}

#[test]
fn single_precision_qvi_and_probes() {
    let g: Arc<Grid32> = Arc::new(Grid::new(&[-1.0], &[1.0], &[41]).unwrap());
    let p: QviProblem32 = QviProblem::new(
        OperatorSpec::laplace(),
        CostFunction::constant(g.clone(), 1.0).unwrap(),
        GridFunction::constant(g.clone(), 1.0),
        GridFunction::zeros(g.clone()),
    )
    .unwrap();
    let o = QviOptions {
        outer_tol: 1e-4,
        max_outer: 50,
        inner: SolverOptions::new(1e-3, 100_000),
    };
    let (u, rep) = solve_qvi(&p, &o).unwrap();
    assert!(rep.converged);
    assert!((u.min_value() + 0.5).abs() < 1e-3);
    let region = NodeSet::from_predicate(g.clone(), |x| !g.is_boundary(x));
    let r = semiconcavity_modulus(&u, &region, &[1, 2]).unwrap();
    assert!((r.value("semiconcavity_constant").unwrap() - 1.0).abs() < 0.05);
}
