//! Penalty families, obstacle mollification, the penalised solver and
//! ε-sweeps measuring how the interior `C^{2,α}` seminorm blows up as the
//! penalty sharpens.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elliptic::{discrete_hessian, OperatorSpec};
use crate::grid::{GridError, GridFunction, NodeSet};
use crate::obstacle::{NodalSystem, SolveError, SolveReport, SolverOptions};
use crate::probe::{holder_seminorm, min_second_quotient, HessianField, ProbeError};
use crate::scalar::{from_usize, lit, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PenaltyError {
    #[error("epsilon must lie in (0, 1)")]
    BadEpsilon,
    #[error("cap must be positive")]
    BadCap,
    #[error("mollification radius {delta} is below the grid spacing {h}")]
    UnresolvableDelta { delta: f64, h: f64 },
    #[error("sweep needs at least 4 geometric epsilon values")]
    NotGeometric,
    #[error("fewer than two resolvable epsilon values remain")]
    TooFewResolvable,
    #[error("alpha must lie in (0, 1)")]
    BadAlpha,
    #[error("interior sub-box is empty")]
    EmptyRegion,
    #[error("some but not all seminorms vanish; log-log fit undefined")]
    DegenerateSeminorm,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    /// `-exp(-t/ε)`: smooth, strictly increasing, concave, at most 0.
    SmoothExp,
    /// `t/ε²` for `t < 0`, zero otherwise.
    PiecewiseLinear,
}

/// A penalty `β_ε`, optionally clamped to `[-N, N]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyFamily<T> {
    kind: PenaltyKind,
    epsilon: T,
    cap: Option<T>,
}

/// Which of the structural conditions a family satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PenaltyConditions {
    pub smooth: bool,
    pub strictly_increasing: bool,
    pub vanishes_for_positive: bool,
    pub blows_up_for_negative: bool,
    pub bounded_above: bool,
    pub concave: bool,
}

impl<T: Real> PenaltyFamily<T> {
    pub fn new(kind: PenaltyKind, epsilon: T, cap: Option<T>) -> Result<Self, PenaltyError> {
        if !(epsilon > T::zero() && epsilon < T::one()) {
            return Err(PenaltyError::BadEpsilon);
        }
        if let Some(n) = cap {
            if !(n > T::zero()) {
                return Err(PenaltyError::BadCap);
            }
        }
        Ok(PenaltyFamily { kind, epsilon, cap })
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn cap(&self) -> Option<T> {
        self.cap
    }

    pub fn with_cap(self, cap: Option<T>) -> Result<Self, PenaltyError> {
        Self::new(self.kind, self.epsilon, cap)
    }

    fn raw(&self, t: T) -> T {
        match self.kind {
            PenaltyKind::PiecewiseLinear => {
                if t < T::zero() {
                    t / (self.epsilon * self.epsilon)
                } else {
                    T::zero()
                }
            }
            PenaltyKind::SmoothExp => -(-t / self.epsilon).min(lit(600.0)).exp(),
        }
    }

    pub fn value(&self, t: T) -> T {
        let b = self.raw(t);
        match self.cap {
            Some(n) => b.min(n).max(-n),
            None => b,
        }
    }

    /// Derivative in `t` (zero where the cap is active).
    pub fn slope(&self, t: T) -> T {
        if let Some(n) = self.cap {
            let b = self.raw(t);
            if b <= -n || b >= n {
                return T::zero();
            }
        }
        match self.kind {
            PenaltyKind::PiecewiseLinear => {
                if t < T::zero() {
                    T::one() / (self.epsilon * self.epsilon)
                } else {
                    T::zero()
                }
            }
            PenaltyKind::SmoothExp => (-t / self.epsilon).min(lit(600.0)).exp() / self.epsilon,
        }
    }

    pub fn conditions(&self) -> PenaltyConditions {
        let smooth = self.kind == PenaltyKind::SmoothExp;
        PenaltyConditions {
            smooth: smooth && self.cap.is_none(),
            strictly_increasing: smooth && self.cap.is_none(),
            vanishes_for_positive: true,
            blows_up_for_negative: self.cap.is_none(),
            bounded_above: true,
            concave: self.cap.is_none(),
        }
    }
}

/// `J_δ[φ + C|x|²/2] - C|x|²/2` on the grid.
#[derive(Debug, Clone)]
pub struct MollifiedObstacle<T> {
    pub phi_delta: GridFunction<T>,
    pub delta: T,
    pub semiconvexity_constant: T,
}

/// Discrete convolution with the bump `(1 - r²/δ²)^4`, normalised over the
/// nodes it covers. Near the boundary the stencil is cut back to the largest
/// axis-symmetric window that stays in the box, so affine data are reproduced
/// exactly everywhere and boundary nodes are left unchanged.
pub fn mollify_obstacle<T: Real>(
    phi: &GridFunction<T>,
    delta: T,
    semiconvexity_constant: T,
) -> Result<MollifiedObstacle<T>, PenaltyError> {
    let g = phi.grid().clone();
    let h = g.spacing();
    if !(delta >= h) {
        return Err(PenaltyError::UnresolvableDelta {
            delta: to_f64(delta),
            h: to_f64(h),
        });
    }
    let half_c = semiconvexity_constant / lit(2.0);
    let lifted = GridFunction::from_fn(g.clone(), |x| x[0] * x[0] + x[1] * x[1])
        .zip_map(phi, |r2, p| p + half_c * r2)?;
    let reach = (delta / h).floor().to_usize().unwrap_or(0);
    let dim = g.dim();
    let mut out = GridFunction::zeros(g.clone());
    for x in 0..g.len() {
        let r0 = reach.min(g.steps_to_boundary(x, 0)) as isize;
        let r1 = if dim == 2 {
            reach.min(g.steps_to_boundary(x, 1)) as isize
        } else {
            0
        };
        let mut acc = T::zero();
        let mut mass = T::zero();
        for di in -r0..=r0 {
            for dj in -r1..=r1 {
                let r2 = from_usize::<T>((di * di + dj * dj) as usize) * h * h;
                let q = T::one() - r2 / (delta * delta);
                if q <= T::zero() {
                    continue;
                }
                let w = q.powi(4);
                let y = g.shift(x, [di, dj]).expect("window stays in the box");
                acc = acc + w * lifted.get(y);
                mass = mass + w;
            }
        }
        let c = g.coords(x);
        out.values_mut()[x] = acc / mass - half_c * (c[0] * c[0] + c[1] * c[1]);
    }
    Ok(MollifiedObstacle {
        phi_delta: out,
        delta,
        semiconvexity_constant,
    })
}

/// Solves `F(D²u) - f = β_ε(u - φ)` with `u = boundary_data` on the boundary.
/// `φ` must be negative on boundary nodes.
pub fn solve_penalized<T: Real>(
    spec: &OperatorSpec<T>,
    phi: &GridFunction<T>,
    family: &PenaltyFamily<T>,
    f: &GridFunction<T>,
    boundary_data: &GridFunction<T>,
    opts: &SolverOptions<T>,
) -> Result<(GridFunction<T>, SolveReport), SolveError> {
    phi.check_same_grid(f)?;
    phi.check_same_grid(boundary_data)?;
    let g = phi.grid().clone();
    if let Some(b) = g.boundary_nodes().find(|&b| !(phi.get(b) < T::zero())) {
        return Err(SolveError::BoundarySign(b));
    }
    let mut init = GridFunction::zeros(g.clone());
    for b in g.boundary_nodes() {
        init.values_mut()[b] = boundary_data.get(b);
    }
    solve_penalized_from(spec, phi, family, f, init, opts)
}

pub(crate) fn solve_penalized_from<T: Real>(
    spec: &OperatorSpec<T>,
    phi: &GridFunction<T>,
    family: &PenaltyFamily<T>,
    f: &GridFunction<T>,
    init: GridFunction<T>,
    opts: &SolverOptions<T>,
) -> Result<(GridFunction<T>, SolveReport), SolveError> {
    let residual = |u: &GridFunction<T>| penalized_residual(spec, u, phi, family, f);
    let nodal = NodalSystem {
        spec,
        f,
        constraint: None,
        penalty: Some((family, phi)),
    };
    nodal.run(init, opts, residual)
}

/// `max |F(D²u) - f - β(u - φ)|` over interior nodes.
pub fn penalized_residual<T: Real>(
    spec: &OperatorSpec<T>,
    u: &GridFunction<T>,
    phi: &GridFunction<T>,
    family: &PenaltyFamily<T>,
    f: &GridFunction<T>,
) -> Result<T, SolveError> {
    let g = u.grid();
    let mut worst = T::zero();
    for x in g.interior_nodes() {
        let fu = spec.eval(&discrete_hessian(u, x)?, g.dim());
        let r = fu - f.get(x) - family.value(u.get(x) - phi.get(x));
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// `max |β(u - φ)|` over interior nodes.
pub fn max_abs_penalty<T: Real>(
    u: &GridFunction<T>,
    phi: &GridFunction<T>,
    family: &PenaltyFamily<T>,
) -> T {
    u.grid().interior_nodes().fold(T::zero(), |m, x| {
        m.max(family.value(u.get(x) - phi.get(x)).abs())
    })
}

/// Everything an ε-sweep needs besides the ε values.
#[derive(Debug, Clone)]
pub struct SweepSetup<T> {
    pub spec: OperatorSpec<T>,
    pub phi: GridFunction<T>,
    pub f: GridFunction<T>,
    pub boundary_data: GridFunction<T>,
    pub kind: PenaltyKind,
    pub alpha: T,
    pub solver: SolverOptions<T>,
    pub sample_budget: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub epsilon: f64,
    pub seminorm: f64,
    pub iterations: usize,
}

/// Serialised as `{alpha, points: [{epsilon, seminorm, iterations}], slope, r2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub alpha: f64,
    pub points: Vec<DecayPoint>,
    pub slope: f64,
    pub r2: f64,
}

impl DecayReport {
    /// Plot-ready mirror of the points.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("epsilon,seminorm,iterations\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{}\n",
                crate::grid::fmt_f64(p.epsilon),
                crate::grid::fmt_f64(p.seminorm),
                p.iterations
            ));
        }
        s
    }
}

/// Per-ε quantities kept alongside the report.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepDiagnostics {
    pub epsilon: f64,
    pub converged: bool,
    pub final_residual: f64,
    /// `max |β_ε(u^ε - φ)|` at the solution.
    pub max_abs_penalty: f64,
    /// Smallest normalised second difference `δ²u(x; h)/h²` over interior nodes and directions.
    pub min_second_quotient: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome<T> {
    pub report: DecayReport,
    pub diagnostics: Vec<SweepDiagnostics>,
    /// ε values skipped because they are not above `2h`.
    pub rejected: Vec<f64>,
    pub solutions: Vec<GridFunction<T>>,
}

/// Solves the penalised problem for each ε and fits
/// `log(seminorm) ~ slope * log(ε)` by least squares. The seminorm is the
/// `C^{2,α}` seminorm of the discrete Hessian over nodes at distance at least
/// `0.1 diam` from the boundary.
pub fn epsilon_sweep<T: Real>(
    setup: &SweepSetup<T>,
    eps_list: &[T],
) -> Result<SweepOutcome<T>, PenaltyError> {
    if !(setup.alpha > T::zero() && setup.alpha < T::one()) {
        return Err(PenaltyError::BadAlpha);
    }
    if eps_list.len() < 4 || !is_geometric(eps_list) {
        return Err(PenaltyError::NotGeometric);
    }
    let g = setup.phi.grid().clone();
    let h = g.spacing();
    let region = interior_subbox(&setup.phi, lit(0.1))?;

    let mut points = Vec::new();
    let mut diagnostics = Vec::new();
    let mut rejected = Vec::new();
    let mut solutions = Vec::new();
    let mut warm: Option<GridFunction<T>> = None;
    for &eps in eps_list {
        if !(eps > lit::<T>(2.0) * h) {
            rejected.push(to_f64(eps));
            continue;
        }
        let family = PenaltyFamily::new(setup.kind, eps, None)?;
        let (u, rep) = match &warm {
            Some(prev) => solve_penalized_from(
                &setup.spec,
                &setup.phi,
                &family,
                &setup.f,
                prev.clone(),
                &setup.solver,
            )?,
            None => solve_penalized(
                &setup.spec,
                &setup.phi,
                &family,
                &setup.f,
                &setup.boundary_data,
                &setup.solver,
            )?,
        };
        let field = HessianField::from_function(&u, &region)?;
        let semi = holder_seminorm(&field, setup.alpha, setup.sample_budget, setup.seed)?;
        points.push(DecayPoint {
            epsilon: to_f64(eps),
            seminorm: to_f64(semi.value),
            iterations: rep.iterations,
        });
        diagnostics.push(SweepDiagnostics {
            epsilon: to_f64(eps),
            converged: rep.converged,
            final_residual: rep.final_residual,
            max_abs_penalty: to_f64(max_abs_penalty(&u, &setup.phi, &family)),
            min_second_quotient: to_f64(min_second_quotient(&u)?),
        });
        warm = Some(u.clone());
        solutions.push(u);
    }
    if points.len() < 2 {
        return Err(PenaltyError::TooFewResolvable);
    }
    let (slope, r2) = loglog_fit(&points)?;
    Ok(SweepOutcome {
        report: DecayReport {
            alpha: to_f64(setup.alpha),
            points,
            slope,
            r2,
        },
        diagnostics,
        rejected,
        solutions,
    })
}

fn is_geometric<T: Real>(eps: &[T]) -> bool {
    if eps.iter().any(|&e| !(e > T::zero())) {
        return false;
    }
    let r0 = eps[1] / eps[0];
    if r0 == T::one() {
        return false;
    }
    eps.windows(2)
        .all(|w| ((w[1] / w[0]) / r0 - T::one()).abs() <= lit(1e-6))
}

/// Interior nodes whose distance to the boundary of the box is at least
/// `fraction * diam`.
pub fn interior_subbox<T: Real>(
    u: &GridFunction<T>,
    fraction: T,
) -> Result<NodeSet<T>, PenaltyError> {
    let g = u.grid().clone();
    let margin = fraction * g.diameter();
    let (lo, hi) = (g.lo().to_vec(), g.hi().to_vec());
    let set = NodeSet::from_predicate(g.clone(), |x| {
        if g.is_boundary(x) {
            return false;
        }
        let c = g.coords(x);
        (0..g.dim()).all(|a| c[a] - lo[a] >= margin && hi[a] - c[a] >= margin)
    });
    if set.is_empty() {
        return Err(PenaltyError::EmptyRegion);
    }
    Ok(set)
}

/// Least-squares slope and R² of `ln(seminorm)` against `ln(ε)`.
pub fn loglog_fit(points: &[DecayPoint]) -> Result<(f64, f64), PenaltyError> {
    let first = points[0].seminorm;
    if points.iter().all(|p| p.seminorm == first) {
        return Ok((0.0, 1.0));
    }
    if points.iter().any(|p| !(p.seminorm > 0.0)) {
        return Err(PenaltyError::DegenerateSeminorm);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.epsilon.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seminorm.ln()).collect();
    Ok(linear_fit(&xs, &ys))
}

pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    (slope, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::sync::Arc;

    fn line(m: usize) -> Arc<Grid<f64>> {
        Arc::new(Grid::new(&[-1.0], &[1.0], &[m]).unwrap())
    }

    fn fam(kind: PenaltyKind, eps: f64) -> PenaltyFamily<f64> {
        PenaltyFamily::new(kind, eps, None).unwrap()
    }

    #[test]
    fn piecewise_linear_values() {
        let b = fam(PenaltyKind::PiecewiseLinear, 0.1);
        assert!((b.value(-0.01) - (-1.0)).abs() < 1e-12);
        let capped = b.with_cap(Some(5.0)).unwrap();
        assert_eq!(capped.value(-1.0), -5.0);
        assert_eq!(capped.slope(-1.0), 0.0);
    }

    #[test]
    fn vanishes_on_positive_side() {
        for kind in [PenaltyKind::PiecewiseLinear, PenaltyKind::SmoothExp] {
            let v = fam(kind, 0.1).value(1.0);
            assert!((-1e-4..=0.0).contains(&v), "{kind:?} {v}");
        }
    }

    #[test]
    fn structural_conditions_on_samples() {
        let ts: Vec<f64> = (-200..=200).map(|k| k as f64 * 0.005).collect();
        for kind in [PenaltyKind::PiecewiseLinear, PenaltyKind::SmoothExp] {
            for eps in [0.2, 0.1, 0.05] {
                let b = fam(kind, eps);
                for w in ts.windows(3) {
                    let (a, m, c) = (b.value(w[0]), b.value(w[1]), b.value(w[2]));
                    assert!(c >= m && m >= a, "monotone");
                    if kind == PenaltyKind::SmoothExp {
                        assert!(c > m, "strictly increasing");
                    }
                    assert!(m >= 0.5 * (a + c) - 1e-9 * a.abs(), "concave");
                }
                assert!(ts.iter().filter(|&&t| t >= 0.0).all(|&t| b.value(t) <= 0.0));
            }
            // limits: |β(0.1)| falls and |β(-0.1)| grows as ε shrinks
            let pos: Vec<f64> = [0.2, 0.1, 0.05]
                .iter()
                .map(|&e| fam(kind, e).value(0.1).abs())
                .collect();
            let neg: Vec<f64> = [0.2, 0.1, 0.05]
                .iter()
                .map(|&e| fam(kind, e).value(-0.1).abs())
                .collect();
            assert!(pos[2] <= pos[1] && pos[1] <= pos[0] && pos[2] < 0.2);
            assert!(neg[2] > neg[1] && neg[1] > neg[0] && neg[2] > 7.0);
        }
        let c = fam(PenaltyKind::PiecewiseLinear, 0.1).conditions();
        assert!(!c.smooth && !c.strictly_increasing && c.concave && c.bounded_above);
        let c = fam(PenaltyKind::SmoothExp, 0.1).conditions();
        assert!(c.smooth && c.strictly_increasing && c.blows_up_for_negative);
    }

    #[test]
    fn family_validation() {
        assert_eq!(
            PenaltyFamily::new(PenaltyKind::SmoothExp, 1.5, None),
            Err(PenaltyError::BadEpsilon)
        );
        assert_eq!(
            PenaltyFamily::new(PenaltyKind::SmoothExp, 0.5, Some(0.0)),
            Err(PenaltyError::BadCap)
        );
    }

    #[test]
    fn mollifier_preserves_affine() {
        let g = Arc::new(Grid::new(&[-1.0, -1.0], &[1.0, 1.0], &[21, 21]).unwrap());
        let phi = GridFunction::from_fn(g.clone(), |x| 0.3 * x[0] - 1.7 * x[1] + 0.2);
        for delta in [0.1, 0.25, 0.4] {
            for c in [0.0, 3.0] {
                let m = mollify_obstacle(&phi, delta, c).unwrap();
                // the |x|² lift is not affine, so only C = 0 is exact near the boundary
                let tol = if c == 0.0 {
                    1e-12
                } else {
                    0.5 * c * delta * delta
                };
                assert!(m.phi_delta.sup_distance(&phi).unwrap() <= tol);
            }
        }
    }

    #[test]
    fn mollifier_converges_on_kink() {
        let g = line(401);
        let phi = GridFunction::from_fn(g.clone(), |x| -x[0].abs());
        let e1 = mollify_obstacle(&phi, 0.1, 0.0)
            .unwrap()
            .phi_delta
            .sup_distance(&phi)
            .unwrap();
        let e2 = mollify_obstacle(&phi, 0.05, 0.0)
            .unwrap()
            .phi_delta
            .sup_distance(&phi)
            .unwrap();
        assert!(e1 <= 0.1 && e2 <= 0.05 && e2 < e1);
    }

    #[test]
    fn mollifier_keeps_semiconvexity() {
        // |x| - x² has second derivative >= -2
        let g = line(201);
        let h = g.spacing();
        let phi = GridFunction::from_fn(g.clone(), |x| x[0].abs() - x[0] * x[0]);
        let delta = 0.05;
        let m = mollify_obstacle(&phi, delta, 2.0).unwrap();
        let reach = (delta / h).floor() as usize + 1;
        for x in reach..g.len() - reach {
            let d2 = m.phi_delta.get(x + 1) + m.phi_delta.get(x - 1) - 2.0 * m.phi_delta.get(x);
            assert!(d2 >= -2.0 * h * h - 1e-12, "node {x}: {d2}");
        }
    }

    #[test]
    fn mollifier_rejects_small_delta() {
        let g = line(11);
        let phi = GridFunction::zeros(g);
        assert!(matches!(
            mollify_obstacle(&phi, 0.1, 0.0),
            Err(PenaltyError::UnresolvableDelta { .. })
        ));
    }

    #[test]
    fn inactive_penalty_gives_zero() {
        let g = line(41);
        let phi = GridFunction::constant(g.clone(), -1.0);
        let zero = GridFunction::zeros(g.clone());
        let opts = SolverOptions::new(1e-10, 200_000).with_optimal_relaxation(&zero);
        let (u, rep) = solve_penalized(
            &OperatorSpec::laplace(),
            &phi,
            &fam(PenaltyKind::PiecewiseLinear, 0.1),
            &zero,
            &zero,
            &opts,
        )
        .unwrap();
        assert!(rep.converged);
        assert!(u.sup_norm() <= 1e-9);
    }

    #[test]
    fn penalized_rejects_nonnegative_boundary_obstacle() {
        let g = line(11);
        let phi = GridFunction::constant(g.clone(), 0.0);
        let zero = GridFunction::zeros(g);
        let err = solve_penalized(
            &OperatorSpec::laplace(),
            &phi,
            &fam(PenaltyKind::SmoothExp, 0.1),
            &zero,
            &zero,
            &SolverOptions::new(1e-8, 10),
        )
        .unwrap_err();
        assert_eq!(err, SolveError::BoundarySign(0));
    }

    #[test]
    fn geometric_check() {
        assert!(is_geometric(&[0.2, 0.1, 0.05, 0.025]));
        assert!(!is_geometric(&[0.2, 0.1, 0.05, 0.02]));
        assert!(!is_geometric(&[0.1, 0.1, 0.1, 0.1]));
    }

    #[test]
    fn fit_recovers_power_law_and_scale_invariance() {
        let pts: Vec<DecayPoint> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&e: &f64| DecayPoint {
                epsilon: e,
                seminorm: 3.0 * e.powf(-0.5),
                iterations: 0,
            })
            .collect();
        let (s, r2) = loglog_fit(&pts).unwrap();
        assert!((s + 0.5).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        let doubled: Vec<DecayPoint> = pts
            .iter()
            .map(|p| DecayPoint {
                seminorm: 2.0 * p.seminorm,
                ..p.clone()
            })
            .collect();
        let (s2, _) = loglog_fit(&doubled).unwrap();
        assert!((s - s2).abs() < 1e-12);
    }

    #[test]
    fn decay_report_json_shape() {
        let r = DecayReport {
            alpha: 0.5,
            points: vec![DecayPoint {
                epsilon: 0.1,
                seminorm: 2.0,
                iterations: 7,
            }],
            slope: -0.5,
            r2: 1.0,
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"alpha":0.5,"points":[{"epsilon":0.1,"seminorm":2.0,"iterations":7}],"slope":-0.5,"r2":1.0}"#
        );
    }
}
