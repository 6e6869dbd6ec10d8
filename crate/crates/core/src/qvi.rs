//! Impulse-control QVI `F(D²u) >= f`, `u <= Mu`, complementarity, solved by
//! freezing the obstacle `Mu^k` and solving an upper obstacle problem per outer
//! step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elliptic::{apply_operator, ObstacleSide, OperatorError, OperatorSpec};
use crate::grid::{GridError, GridFunction};
use crate::intervention::{intervention_operator, CostFunction, InterventionError};
use crate::obstacle::{
    solve_obstacle_from, solve_unconstrained, ObstacleProblem, SolveError, SolverOptions,
};
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QviError {
    #[error("tolerances must be positive")]
    BadTolerance,
    #[error("inner solve did not converge at outer iteration {0}")]
    InnerFailure(usize),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Intervention(#[from] InterventionError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone)]
pub struct QviProblem<T> {
    pub spec: OperatorSpec<T>,
    pub cost: CostFunction<T>,
    pub f: GridFunction<T>,
    pub boundary_data: GridFunction<T>,
}

impl<T: Real> QviProblem<T> {
    pub fn new(
        spec: OperatorSpec<T>,
        cost: CostFunction<T>,
        f: GridFunction<T>,
        boundary_data: GridFunction<T>,
    ) -> Result<Self, QviError> {
        f.check_same_grid(cost.phi())?;
        f.check_same_grid(&boundary_data)?;
        Ok(QviProblem {
            spec,
            cost,
            f,
            boundary_data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QviOptions<T> {
    pub outer_tol: T,
    pub max_outer: usize,
    pub inner: SolverOptions<T>,
}

impl<T: Real> QviOptions<T> {
    /// `outer_tol = 1e-6 |φ|_∞`, 200 outer steps, default inner options.
    pub fn default_for(p: &QviProblem<T>) -> Self {
        QviOptions {
            outer_tol: lit::<T>(1e-6) * p.cost.phi().sup_norm(),
            max_outer: 200,
            inner: SolverOptions::default_for(&p.f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QviReport {
    pub outer_iterations: usize,
    /// `|u^{k+1} - u^k|_∞` per outer step.
    pub sup_differences: Vec<f64>,
    /// `max |min(F(D²u) - f, Mu - u)|` with `Mu` recomputed from the final `u`.
    pub final_residual: f64,
    /// Whether `u^{k+1} <= u^k + inner_tol` held for every `k >= 1`.
    pub monotone: bool,
    pub inner_sweeps: usize,
    pub converged: bool,
}

/// Outer fixed-point iteration. Starting from the unconstrained solution,
/// `u^{k+1}` solves the upper obstacle problem with obstacle `M u^k`; stops
/// when successive iterates differ by at most `outer_tol`. The obstacle is
/// imposed at interior nodes only. Hitting `max_outer` is reported through
/// `QviReport::converged`.
pub fn solve_qvi<T: Real>(
    p: &QviProblem<T>,
    opts: &QviOptions<T>,
) -> Result<(GridFunction<T>, QviReport), QviError> {
    if !(opts.outer_tol > T::zero() && opts.inner.tol > T::zero()) {
        return Err(QviError::BadTolerance);
    }
    let (mut u, rep0) = solve_unconstrained(&p.spec, &p.f, &p.boundary_data, &opts.inner)?;
    if !rep0.converged {
        return Err(QviError::InnerFailure(0));
    }
    let mut sweeps = rep0.iterations;
    let mut diffs = Vec::new();
    let mut monotone = true;
    let mut converged = false;
    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        let obstacle = intervention_operator(&u, &p.cost)?;
        let problem = ObstacleProblem::unchecked(
            p.spec.clone(),
            ObstacleSide::Upper,
            obstacle,
            p.f.clone(),
            p.boundary_data.clone(),
        )?;
        let (next, rep) = solve_obstacle_from(&problem, u.clone(), &opts.inner)?;
        if !rep.converged {
            return Err(QviError::InnerFailure(outer));
        }
        sweeps += rep.iterations;
        let diff = next.sup_distance(&u)?;
        if outer >= 2 {
            let rises = next
                .values()
                .iter()
                .zip(u.values())
                .any(|(&a, &b)| a > b + opts.inner.tol);
            monotone &= !rises;
        }
        diffs.push(to_f64(diff));
        u = next;
        if diff <= opts.outer_tol {
            converged = true;
            break;
        }
    }
    let check = check_qvi(&u, p, opts.inner.tol)?;
    Ok((
        u,
        QviReport {
            outer_iterations: outer,
            sup_differences: diffs,
            final_residual: check.complementarity,
            monotone,
            inner_sweeps: sweeps,
            converged,
        },
    ))
}

/// Constraint-by-constraint violations of a candidate QVI solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QviCheck {
    /// `max (f - F(D²u))^+` over interior nodes.
    pub equation: f64,
    /// `max (u - Mu)^+` over interior nodes.
    pub obstacle: f64,
    /// `max |min(F(D²u) - f, Mu - u)|` over interior nodes.
    pub complementarity: f64,
    /// `max |u - boundary_data|` over boundary nodes.
    pub boundary: f64,
    /// Interior node with the largest complementarity violation.
    pub worst_node: Option<usize>,
    pub tol: f64,
}

impl QviCheck {
    pub fn equation_ok(&self) -> bool {
        self.equation <= self.tol
    }

    pub fn obstacle_ok(&self) -> bool {
        self.obstacle <= self.tol
    }

    pub fn complementarity_ok(&self) -> bool {
        self.complementarity <= self.tol
    }

    pub fn boundary_ok(&self) -> bool {
        self.boundary <= self.tol
    }
}

pub fn check_qvi<T: Real>(
    u: &GridFunction<T>,
    p: &QviProblem<T>,
    tol: T,
) -> Result<QviCheck, QviError> {
    u.check_same_grid(&p.f)?;
    let fu = apply_operator(&p.spec, u)?;
    let mu = intervention_operator(u, &p.cost)?;
    let g = u.grid();
    let (mut eq, mut obs, mut comp, mut bd) = (T::zero(), T::zero(), T::zero(), T::zero());
    let mut worst = None;
    for x in g.interior_nodes() {
        let e = fu.get(x) - p.f.get(x);
        let gap = mu.get(x) - u.get(x);
        eq = eq.max(-e);
        obs = obs.max(-gap);
        let c = e.min(gap).abs();
        if c > comp || worst.is_none() {
            comp = comp.max(c);
            worst = Some(x);
        }
    }
    for b in g.boundary_nodes() {
        bd = bd.max((u.get(b) - p.boundary_data.get(b)).abs());
    }
    Ok(QviCheck {
        equation: to_f64(eq),
        obstacle: to_f64(obs),
        complementarity: to_f64(comp),
        boundary: to_f64(bd),
        worst_node: worst,
        tol: to_f64(tol),
    })
}
