//! Nonlinear Gauss–Seidel for `F(D²u) = f` and its projected variant for the
//! obstacle problem in either orientation.
//!
//! Every sweep visits the interior nodes in lexicographic order. At each node
//! the scalar equation in the node value is solved with the neighbours frozen,
//! then over-relaxed and projected. The nodal residual is strictly
//! decreasing in the node value with slope at most `-2 n lambda / h²`, which
//! gives an explicit bracket for a safeguarded Newton iteration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elliptic::{
    complementarity_residual, discrete_hessian, interior_sup, ObstacleSide, OperatorError,
    OperatorKind, OperatorSpec, SymMat,
};
use crate::grid::{GridError, GridFunction};
use crate::penalty::PenaltyFamily;
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error("obstacle violates the boundary data at node {0}")]
    Inadmissible(usize),
    #[error("penalised obstacle must be negative on the boundary (node {0})")]
    BoundarySign(usize),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    /// Target for the final residual.
    pub tol: T,
    pub max_sweeps: usize,
    /// Over-relaxation factor; 1 is plain Gauss–Seidel. The solver drops to 1
    /// when the residual stops improving short of `tol`.
    pub relaxation: T,
}

impl<T: Real> SolverOptions<T> {
    pub fn new(tol: T, max_sweeps: usize) -> Self {
        SolverOptions {
            tol,
            max_sweeps,
            relaxation: T::one(),
        }
    }

    /// `tol = 1e-8 (1 + max|f|) diam²`, at least a million sweeps.
    pub fn default_for(f: &GridFunction<T>) -> Self {
        let diam = f.grid().diameter();
        SolverOptions {
            tol: lit::<T>(1e-8) * (T::one() + f.sup_norm()) * diam * diam,
            max_sweeps: 1_000_000usize.max(4 * f.grid().len()),
            relaxation: T::one(),
        }
    }

    pub fn with_relaxation(mut self, omega: T) -> Self {
        self.relaxation = omega;
        self
    }

    /// Textbook optimal SOR factor for the Laplacian on this grid.
    pub fn with_optimal_relaxation(self, f: &GridFunction<T>) -> Self {
        let m = f.grid().counts().iter().copied().max().unwrap_or(3);
        let rho = (T::from(std::f64::consts::PI).unwrap() / lit::<T>((m - 1) as f64)).cos();
        let omega = lit::<T>(2.0) / (T::one() + (T::one() - rho * rho).sqrt());
        self.with_relaxation(omega)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub sup_update: f64,
    pub converged: bool,
}

/// Discrete obstacle problem. The lower side asks for `u >= obstacle` with
/// `F(D²u) <= f`, the upper side for `u <= obstacle` with `F(D²u) >= f`;
/// both with `u = boundary_data` on boundary nodes.
#[derive(Debug, Clone)]
pub struct ObstacleProblem<T> {
    pub spec: OperatorSpec<T>,
    pub side: ObstacleSide,
    pub obstacle: GridFunction<T>,
    pub f: GridFunction<T>,
    pub boundary_data: GridFunction<T>,
}

impl<T: Real> ObstacleProblem<T> {
    pub fn new(
        spec: OperatorSpec<T>,
        side: ObstacleSide,
        obstacle: GridFunction<T>,
        f: GridFunction<T>,
        boundary_data: GridFunction<T>,
    ) -> Result<Self, SolveError> {
        let p = Self::unchecked(spec, side, obstacle, f, boundary_data)?;
        let g = p.obstacle.grid();
        for b in g.boundary_nodes() {
            let (obs, data) = (p.obstacle.get(b), p.boundary_data.get(b));
            let ok = match side {
                ObstacleSide::Lower => obs <= data,
                ObstacleSide::Upper => obs >= data,
            };
            if !ok {
                return Err(SolveError::Inadmissible(b));
            }
        }
        Ok(p)
    }

    /// Skips the boundary admissibility check; the constraint is only ever
    /// imposed at interior nodes.
    pub(crate) fn unchecked(
        spec: OperatorSpec<T>,
        side: ObstacleSide,
        obstacle: GridFunction<T>,
        f: GridFunction<T>,
        boundary_data: GridFunction<T>,
    ) -> Result<Self, SolveError> {
        obstacle.check_same_grid(&f)?;
        obstacle.check_same_grid(&boundary_data)?;
        Ok(ObstacleProblem {
            spec,
            side,
            obstacle,
            f,
            boundary_data,
        })
    }

    /// The dual problem solved by `-u`.
    pub fn dual(&self) -> Self {
        ObstacleProblem {
            spec: self.spec.dual(),
            side: self.side.flip(),
            obstacle: self.obstacle.map(|v| -v),
            f: self.f.map(|v| -v),
            boundary_data: self.boundary_data.map(|v| -v),
        }
    }

    pub fn residual(&self, u: &GridFunction<T>) -> Result<T, SolveError> {
        Ok(interior_sup(&complementarity_residual(
            &self.spec,
            u,
            &self.obstacle,
            &self.f,
            self.side,
        )?))
    }
}

/// Solves `F(D²u) = f` in the interior with `u = boundary_data` on the boundary.
/// Non-convergence is reported through `SolveReport::converged`.
pub fn solve_unconstrained<T: Real>(
    spec: &OperatorSpec<T>,
    f: &GridFunction<T>,
    boundary_data: &GridFunction<T>,
    opts: &SolverOptions<T>,
) -> Result<(GridFunction<T>, SolveReport), SolveError> {
    f.check_same_grid(boundary_data)?;
    let init = initial_guess(boundary_data, None);
    let residual = |u: &GridFunction<T>| -> Result<T, SolveError> {
        let g = u.grid();
        let mut worst = T::zero();
        for x in g.interior_nodes() {
            let fu = spec.eval(&discrete_hessian(u, x)?, g.dim());
            worst = worst.max((fu - f.get(x)).abs());
        }
        Ok(worst)
    };
    let nodal = NodalSystem {
        spec,
        f,
        constraint: None,
        penalty: None,
    };
    nodal.run(init, opts, residual)
}

/// Projected nonlinear Gauss–Seidel for the obstacle problem.
pub fn solve_obstacle<T: Real>(
    p: &ObstacleProblem<T>,
    opts: &SolverOptions<T>,
) -> Result<(GridFunction<T>, SolveReport), SolveError> {
    let init = initial_guess(&p.boundary_data, Some((&p.obstacle, p.side)));
    solve_obstacle_from(p, init, opts)
}

/// As [`solve_obstacle`], starting from `init` (boundary values are reset to the data).
pub fn solve_obstacle_from<T: Real>(
    p: &ObstacleProblem<T>,
    mut init: GridFunction<T>,
    opts: &SolverOptions<T>,
) -> Result<(GridFunction<T>, SolveReport), SolveError> {
    init.check_same_grid(&p.obstacle)?;
    let g = init.grid().clone();
    for b in g.boundary_nodes() {
        init.values_mut()[b] = p.boundary_data.get(b);
    }
    for x in g.interior_nodes() {
        init.values_mut()[x] = project(init.get(x), p.obstacle.get(x), p.side);
    }
    let nodal = NodalSystem {
        spec: &p.spec,
        f: &p.f,
        constraint: Some((&p.obstacle, p.side)),
        penalty: None,
    };
    nodal.run(init, opts, |u| p.residual(u))
}

fn project<T: Real>(v: T, obstacle: T, side: ObstacleSide) -> T {
    match side {
        ObstacleSide::Lower => v.max(obstacle),
        ObstacleSide::Upper => v.min(obstacle),
    }
}

fn initial_guess<T: Real>(
    boundary: &GridFunction<T>,
    constraint: Option<(&GridFunction<T>, ObstacleSide)>,
) -> GridFunction<T> {
    let g = boundary.grid().clone();
    let mut u = GridFunction::zeros(g.clone());
    for b in g.boundary_nodes() {
        u.values_mut()[b] = boundary.get(b);
    }
    if let Some((obs, side)) = constraint {
        for x in g.interior_nodes() {
            u.values_mut()[x] = project(T::zero(), obs.get(x), side);
        }
    }
    u
}

/// The per-node equation `F(D²u) - f - beta(u - obstacle) = 0`, optionally
/// followed by projection onto a one-sided constraint.
pub(crate) struct NodalSystem<'a, T> {
    pub spec: &'a OperatorSpec<T>,
    pub f: &'a GridFunction<T>,
    pub constraint: Option<(&'a GridFunction<T>, ObstacleSide)>,
    pub penalty: Option<(&'a PenaltyFamily<T>, &'a GridFunction<T>)>,
}

impl<'a, T: Real> NodalSystem<'a, T> {
    pub fn run(
        &self,
        mut u: GridFunction<T>,
        opts: &SolverOptions<T>,
        residual: impl Fn(&GridFunction<T>) -> Result<T, SolveError>,
    ) -> Result<(GridFunction<T>, SolveReport), SolveError> {
        if !(opts.tol > T::zero()) {
            return Err(SolveError::BadTolerance);
        }
        self.f.check_same_grid(&u)?;
        let g = u.grid().clone();
        let interior: Vec<usize> = g.interior_nodes().collect();
        if interior.is_empty() {
            return Err(OperatorError::NoInterior.into());
        }
        let h2 = g.spacing() * g.spacing();
        let update_gate = opts.tol * h2;
        let mut sup_update = T::infinity();
        let mut last_residual = T::infinity();
        let mut omega = opts.relaxation;
        let mut best_residual = T::infinity();
        let mut stalled = 0;
        for sweep in 1..=opts.max_sweeps {
            sup_update = T::zero();
            for &x in &interior {
                let old = u.get(x);
                let target = self.solve_node(&u, x)?;
                let mut new = old + omega * (target - old);
                if let Some((obs, side)) = self.constraint {
                    new = project(new, obs.get(x), side);
                }
                u.values_mut()[x] = new;
                sup_update = sup_update.max((new - old).abs());
            }
            if sup_update <= update_gate || sweep % 256 == 0 || sweep == opts.max_sweeps {
                let r = residual(&u)?;
                if r <= opts.tol {
                    return Ok((u, report(sweep, r, sup_update, true)));
                }
                // no new best residual for a while: over-relaxation is
                // amplifying rounding, so finish with plain Gauss-Seidel, whose
                // rounding floor is lower
                if r < best_residual {
                    best_residual = r;
                    stalled = 0;
                } else if sweep % 256 == 0 {
                    stalled += 1;
                    if stalled >= 4 {
                        omega = T::one();
                    }
                }
                last_residual = r;
            }
        }
        Ok((u, report(opts.max_sweeps, last_residual, sup_update, false)))
    }

    /// Node value that zeroes the nodal residual with the neighbours frozen.
    fn solve_node(&self, u: &GridFunction<T>, x: usize) -> Result<T, SolveError> {
        let g = u.grid();
        let dim = g.dim();
        let h2 = g.spacing() * g.spacing();
        let two = lit::<T>(2.0);
        let hess = discrete_hessian(u, x)?;
        let ux = u.get(x);
        let fx = self.f.get(x);
        // raising the node value by dv lowers each diagonal entry by 2 dv / h²
        let shift = if dim == 1 {
            SymMat::new(T::one(), T::zero(), T::zero())
        } else {
            SymMat::identity()
        };

        if self.penalty.is_none() && self.spec.kind() == OperatorKind::Laplace {
            let n = lit::<T>(dim as f64);
            let t = (fx - trace(&hess, dim)) / n;
            return Ok(ux - t * h2 / two);
        }

        // g(v) and dg/dv
        let eval = |v: T| -> (T, T) {
            let t = two * (ux - v) / h2;
            let (fv, slope) = self.spec.eval_with_slope(&hess.add(&shift.scale(t)), dim);
            let mut r = fv - fx;
            let mut dr = -two / h2 * slope;
            if let Some((fam, obs)) = self.penalty {
                let s = v - obs.get(x);
                r = r - fam.value(s);
                dr = dr - fam.slope(s);
            }
            (r, dr)
        };

        let (r0, _) = eval(ux);
        if r0 == T::zero() {
            return Ok(ux);
        }
        // |g(v) - g(ux)| >= |v - ux| * 2 n lambda / h²
        let min_slope = two * lit::<T>(dim as f64) * self.spec.lambda() / h2;
        let reach = r0.abs() / min_slope;
        let pad = T::epsilon() * lit::<T>(8.0) * (T::one() + ux.abs());
        let (mut lo, mut hi) = if r0 > T::zero() {
            (ux, ux + reach + pad)
        } else {
            (ux - reach - pad, ux)
        };
        // the bound is exact up to rounding; widen if rounding bit
        let mut tries = 0;
        while eval(hi).0 > T::zero() && tries < 60 {
            let w = hi - lo;
            hi = hi + w;
            tries += 1;
        }
        tries = 0;
        while eval(lo).0 < T::zero() && tries < 60 {
            let w = hi - lo;
            lo = lo - w;
            tries += 1;
        }

        let mut v = if r0 > T::zero() { lo } else { hi };
        for _ in 0..100 {
            let (r, dr) = eval(v);
            if r == T::zero() {
                return Ok(v);
            }
            if r > T::zero() {
                lo = v;
            } else {
                hi = v;
            }
            let width_tol = T::epsilon() * lit::<T>(4.0) * (T::one() + v.abs());
            if hi - lo <= width_tol {
                break;
            }
            let newton = if dr < T::zero() { v - r / dr } else { T::nan() };
            v = if newton > lo && newton < hi {
                newton
            } else {
                lo + (hi - lo) / two
            };
        }
        Ok(v)
    }
}

fn trace<T: Real>(m: &SymMat<T>, dim: usize) -> T {
    if dim == 1 {
        m.xx
    } else {
        m.trace()
    }
}

fn report<T: Real>(iterations: usize, residual: T, update: T, converged: bool) -> SolveReport {
    SolveReport {
        iterations,
        final_residual: to_f64(residual),
        sup_update: to_f64(update),
        converged,
    }
}
