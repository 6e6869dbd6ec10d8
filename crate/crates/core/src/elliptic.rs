//! Discrete Hessians, the fully nonlinear operators `F(D²u)` and the
//! complementarity residual of an obstacle problem.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, GridFunction};
use crate::scalar::{lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("ellipticity constants must satisfy 0 < lambda <= Lambda")]
    BadConstants,
    #[error("Bellman operators need a non-empty coefficient family")]
    EmptyFamily,
    #[error("coefficient matrix {0} has spectrum outside [lambda, Lambda]")]
    CoefficientOutOfRange(usize),
    #[error("node {0} lacks stencil support")]
    NoStencil(usize),
    #[error("grid has no interior nodes")]
    NoInterior,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Symmetric 2×2 matrix. In 1D only `xx` is meaningful and the others are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymMat<T> {
    pub xx: T,
    pub xy: T,
    pub yy: T,
}

impl<T: Real> SymMat<T> {
    pub fn new(xx: T, xy: T, yy: T) -> Self {
        SymMat { xx, xy, yy }
    }

    pub fn diag(a: T, b: T) -> Self {
        SymMat::new(a, T::zero(), b)
    }

    pub fn identity() -> Self {
        SymMat::diag(T::one(), T::one())
    }

    pub fn zero() -> Self {
        SymMat::diag(T::zero(), T::zero())
    }

    pub fn trace(&self) -> T {
        self.xx + self.yy
    }

    pub fn scale(&self, s: T) -> Self {
        SymMat::new(self.xx * s, self.xy * s, self.yy * s)
    }

    pub fn add(&self, o: &Self) -> Self {
        SymMat::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }

    pub fn sub(&self, o: &Self) -> Self {
        SymMat::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }

    /// `trace(self * other)`.
    pub fn frobenius_dot(&self, o: &Self) -> T {
        self.xx * o.xx + lit::<T>(2.0) * self.xy * o.xy + self.yy * o.yy
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.xx.abs().max(self.xy.abs()).max(self.yy.abs())
    }

    /// Eigenvalues in ascending order, closed form.
    pub fn eigenvalues(&self) -> [T; 2] {
        let half = lit::<T>(0.5);
        let mean = half * (self.xx + self.yy);
        let rad = (half * (self.xx - self.yy)).hypot(self.xy);
        [mean - rad, mean + rad]
    }

    /// Unit eigenvector for eigenvalue `mu`.
    fn eigenvector(&self, mu: T) -> [T; 2] {
        let a = [self.xy, mu - self.xx];
        let b = [mu - self.yy, self.xy];
        let na = a[0].hypot(a[1]);
        let nb = b[0].hypot(b[1]);
        if na.max(nb) <= T::epsilon() * (T::one() + self.max_abs()) {
            // multiple of the identity: any basis works
            return if mu >= self.yy {
                [T::zero(), T::one()]
            } else {
                [T::one(), T::zero()]
            };
        }
        if na >= nb {
            [a[0] / na, a[1] / na]
        } else {
            [b[0] / nb, b[1] / nb]
        }
    }

    /// Spectral norm.
    pub fn spectral_norm(&self) -> T {
        let [a, b] = self.eigenvalues();
        a.abs().max(b.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Laplace,
    PucciPlus,
    PucciMinus,
    BellmanMin,
    BellmanMax,
}

/// Which side of the obstacle the solution lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleSide {
    /// `u >= obstacle`, `F(D²u) <= f`.
    Lower,
    /// `u <= obstacle`, `F(D²u) >= f`.
    Upper,
}

impl ObstacleSide {
    pub fn flip(self) -> Self {
        match self {
            ObstacleSide::Lower => ObstacleSide::Upper,
            ObstacleSide::Upper => ObstacleSide::Lower,
        }
    }
}

/// A fully nonlinear operator with ellipticity constants `lambda <= big_lambda`.
///
/// The ellipticity bound is checked in the form
/// `lambda * |P| <= F(M + P) - F(M) <= n * big_lambda * |P|` for `P >= 0`,
/// with `|P|` the spectral norm and `n` the dimension. The factor `n` on the
/// upper side is needed for trace-form operators once `|P|` is unnormalised.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec<T> {
    kind: OperatorKind,
    lambda: T,
    big_lambda: T,
    family: Vec<SymMat<T>>,
}

impl<T: Real> OperatorSpec<T> {
    pub fn new(
        kind: OperatorKind,
        lambda: T,
        big_lambda: T,
        family: Vec<SymMat<T>>,
    ) -> Result<Self, OperatorError> {
        if !(lambda > T::zero() && lambda <= big_lambda && big_lambda.is_finite()) {
            return Err(OperatorError::BadConstants);
        }
        if matches!(kind, OperatorKind::BellmanMin | OperatorKind::BellmanMax) {
            if family.is_empty() {
                return Err(OperatorError::EmptyFamily);
            }
            let slack = T::epsilon() * lit(16.0) * big_lambda;
            for (i, a) in family.iter().enumerate() {
                let [lo, hi] = a.eigenvalues();
                if lo < lambda - slack || hi > big_lambda + slack {
                    return Err(OperatorError::CoefficientOutOfRange(i));
                }
            }
        }
        Ok(OperatorSpec {
            kind,
            lambda,
            big_lambda,
            family,
        })
    }

    pub fn laplace() -> Self {
        OperatorSpec {
            kind: OperatorKind::Laplace,
            lambda: T::one(),
            big_lambda: T::one(),
            family: Vec::new(),
        }
    }

    pub fn pucci_plus(lambda: T, big_lambda: T) -> Result<Self, OperatorError> {
        Self::new(OperatorKind::PucciPlus, lambda, big_lambda, Vec::new())
    }

    pub fn pucci_minus(lambda: T, big_lambda: T) -> Result<Self, OperatorError> {
        Self::new(OperatorKind::PucciMinus, lambda, big_lambda, Vec::new())
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn big_lambda(&self) -> T {
        self.big_lambda
    }

    pub fn family(&self) -> &[SymMat<T>] {
        &self.family
    }

    /// The operator `M -> -F(-M)`, which maps lower-side problems to upper-side ones.
    pub fn dual(&self) -> Self {
        let kind = match self.kind {
            OperatorKind::Laplace => OperatorKind::Laplace,
            OperatorKind::PucciPlus => OperatorKind::PucciMinus,
            OperatorKind::PucciMinus => OperatorKind::PucciPlus,
            OperatorKind::BellmanMin => OperatorKind::BellmanMax,
            OperatorKind::BellmanMax => OperatorKind::BellmanMin,
        };
        OperatorSpec {
            kind,
            ..self.clone()
        }
    }

    pub fn is_convex(&self) -> bool {
        matches!(
            self.kind,
            OperatorKind::Laplace | OperatorKind::PucciPlus | OperatorKind::BellmanMax
        )
    }

    pub fn is_concave(&self) -> bool {
        matches!(
            self.kind,
            OperatorKind::Laplace | OperatorKind::PucciMinus | OperatorKind::BellmanMin
        )
    }

    /// `F(M)` for a Hessian of a `dim`-dimensional function.
    pub fn eval(&self, m: &SymMat<T>, dim: usize) -> T {
        self.eval_with_slope(m, dim).0
    }

    /// `F(M)` together with the derivative of `s -> F(M + s I_dim)` at `s = 0`
    /// (one-sided where `F` has a kink; always within `[n lambda, n Lambda]`).
    pub fn eval_with_slope(&self, m: &SymMat<T>, dim: usize) -> (T, T) {
        let n = lit::<T>(dim as f64);
        match self.kind {
            OperatorKind::Laplace => (trace_dim(m, dim), n),
            OperatorKind::PucciPlus | OperatorKind::PucciMinus => {
                let (up, down) = if self.kind == OperatorKind::PucciPlus {
                    (self.big_lambda, self.lambda)
                } else {
                    (self.lambda, self.big_lambda)
                };
                let weight = |mu: T| if mu > T::zero() { up } else { down };
                let mut value = T::zero();
                let mut slope = T::zero();
                for mu in spectrum(m, dim) {
                    value = value + weight(mu) * mu;
                    // slope of mu -> weight*mu when mu is pushed upward
                    slope = slope + if mu >= T::zero() { up } else { down };
                }
                (value, slope)
            }
            OperatorKind::BellmanMin | OperatorKind::BellmanMax => {
                let want_max = self.kind == OperatorKind::BellmanMax;
                let mut best: Option<(T, T)> = None;
                for a in &self.family {
                    let v = bellman_term(a, m, dim);
                    let slope = trace_dim(a, dim);
                    best = Some(match best {
                        None => (v, slope),
                        Some((bv, bs)) => {
                            let better = if want_max { v > bv } else { v < bv };
                            if better
                                || (v == bv && (if want_max { slope > bs } else { slope < bs }))
                            {
                                (v, slope)
                            } else {
                                (bv, bs)
                            }
                        }
                    });
                }
                best.expect("family checked non-empty")
            }
        }
    }
}

fn trace_dim<T: Real>(m: &SymMat<T>, dim: usize) -> T {
    if dim == 1 {
        m.xx
    } else {
        m.trace()
    }
}

fn bellman_term<T: Real>(a: &SymMat<T>, m: &SymMat<T>, dim: usize) -> T {
    if dim == 1 {
        a.xx * m.xx
    } else {
        a.frobenius_dot(m)
    }
}

fn spectrum<T: Real>(m: &SymMat<T>, dim: usize) -> impl Iterator<Item = T> {
    let eig = if dim == 1 {
        [m.xx, T::zero()]
    } else {
        m.eigenvalues()
    };
    eig.into_iter().take(dim)
}

/// Eigenpairs of `M` in ascending order of eigenvalue.
pub fn eigen_decomposition<T: Real>(m: &SymMat<T>) -> [(T, [T; 2]); 2] {
    let [a, b] = m.eigenvalues();
    [(a, m.eigenvector(a)), (b, m.eigenvector(b))]
}

/// Centred second differences at an interior node.
pub fn discrete_hessian<T: Real>(
    u: &GridFunction<T>,
    x: usize,
) -> Result<SymMat<T>, OperatorError> {
    let g = u.grid();
    if x >= g.len() || g.is_boundary(x) {
        return Err(OperatorError::NoStencil(x));
    }
    let v = u.values();
    let h2 = g.spacing() * g.spacing();
    let two = lit::<T>(2.0);
    let at = |o: [isize; 2]| {
        g.shift(x, o)
            .map(|i| v[i])
            .ok_or(OperatorError::NoStencil(x))
    };
    let c = v[x];
    let xx = (at([1, 0])? + at([-1, 0])? - two * c) / h2;
    if g.dim() == 1 {
        return Ok(SymMat::new(xx, T::zero(), T::zero()));
    }
    let yy = (at([0, 1])? + at([0, -1])? - two * c) / h2;
    let xy = (at([1, 1])? + at([-1, -1])? - at([1, -1])? - at([-1, 1])?) / (lit::<T>(4.0) * h2);
    Ok(SymMat::new(xx, xy, yy))
}

/// `F(D²u)` at every interior node. Boundary entries are set to zero and
/// carry no meaning.
pub fn apply_operator<T: Real>(
    spec: &OperatorSpec<T>,
    u: &GridFunction<T>,
) -> Result<GridFunction<T>, OperatorError> {
    let g = u.grid();
    if g.interior_nodes().next().is_none() {
        return Err(OperatorError::NoInterior);
    }
    let mut out = GridFunction::zeros(g.clone());
    let dim = g.dim();
    for x in g.interior_nodes() {
        out.values_mut()[x] = spec.eval(&discrete_hessian(u, x)?, dim);
    }
    Ok(out)
}

/// Lower side: `min(f - F(D²u), u - obstacle)`; upper side:
/// `min(F(D²u) - f, obstacle - u)`. Zero at interior nodes exactly when `u`
/// solves the discrete complementarity problem; boundary entries are zero.
pub fn complementarity_residual<T: Real>(
    spec: &OperatorSpec<T>,
    u: &GridFunction<T>,
    obstacle: &GridFunction<T>,
    f: &GridFunction<T>,
    side: ObstacleSide,
) -> Result<GridFunction<T>, OperatorError> {
    u.check_same_grid(obstacle)?;
    u.check_same_grid(f)?;
    let fu = apply_operator(spec, u)?;
    let g = u.grid();
    let mut r = GridFunction::zeros(g.clone());
    for x in g.interior_nodes() {
        let (eq, gap) = match side {
            ObstacleSide::Lower => (f.get(x) - fu.get(x), u.get(x) - obstacle.get(x)),
            ObstacleSide::Upper => (fu.get(x) - f.get(x), obstacle.get(x) - u.get(x)),
        };
        r.values_mut()[x] = eq.min(gap);
    }
    Ok(r)
}

/// Largest `|r|` over interior nodes.
pub fn interior_sup<T: Real>(r: &GridFunction<T>) -> T {
    r.grid()
        .interior_nodes()
        .fold(T::zero(), |m, x| m.max(r.get(x).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn grid2(m: usize) -> Arc<Grid<f64>> {
        Arc::new(Grid::new(&[-1.0, -1.0], &[1.0, 1.0], &[m, m]).unwrap())
    }

    #[test]
    fn hessian_of_affine_is_zero() {
        let u = GridFunction::from_fn(grid2(7), |x| 3.0 * x[0] - 2.0 * x[1] + 0.5);
        let hess = discrete_hessian(&u, 24).unwrap();
        assert!(hess.max_abs() < 1e-12);
    }

    #[test]
    fn hessian_exact_on_quadratics() {
        let g = grid2(9);
        let u = GridFunction::from_fn(g.clone(), |x| x[0] * x[0]);
        let v = GridFunction::from_fn(g.clone(), |x| x[0] * x[1]);
        for x in g.interior_nodes() {
            let a = discrete_hessian(&u, x).unwrap();
            assert_relative_eq!(a.xx, 2.0, epsilon = 1e-10);
            assert!(a.xy.abs() < 1e-10 && a.yy.abs() < 1e-10);
            let b = discrete_hessian(&v, x).unwrap();
            assert_relative_eq!(b.xy, 1.0, epsilon = 1e-10);
            assert!(b.xx.abs() < 1e-10 && b.yy.abs() < 1e-10);
        }
    }

    #[test]
    fn hessian_rejects_boundary() {
        let u = GridFunction::zeros(grid2(5));
        assert_eq!(discrete_hessian(&u, 0), Err(OperatorError::NoStencil(0)));
    }

    #[test]
    fn laplace_of_parabola_1d() {
        let g = Arc::new(Grid::new(&[-1.0], &[1.0], &[11]).unwrap());
        let u = GridFunction::from_fn(g.clone(), |x| x[0] * x[0]);
        let lu = apply_operator(&OperatorSpec::laplace(), &u).unwrap();
        for x in g.interior_nodes() {
            assert_relative_eq!(lu.get(x), 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn pucci_of_identity() {
        let plus = OperatorSpec::pucci_plus(1.0, 2.0).unwrap();
        let minus = OperatorSpec::pucci_minus(1.0, 2.0).unwrap();
        assert_eq!(plus.eval(&SymMat::identity(), 2), 4.0);
        assert_eq!(minus.eval(&SymMat::identity(), 2), 2.0);
    }

    #[test]
    fn bellman_min_on_small_family() {
        let spec = OperatorSpec::new(
            OperatorKind::BellmanMin,
            1.0,
            2.0,
            vec![SymMat::identity(), SymMat::diag(2.0, 1.0)],
        )
        .unwrap();
        // trace(I M) = 0, trace(diag(2,1) M) = 1
        assert_eq!(spec.eval(&SymMat::diag(1.0, -1.0), 2), 0.0);
        assert_eq!(spec.dual().eval(&SymMat::diag(1.0, -1.0), 2), 1.0);
    }

    #[test]
    fn spec_validation() {
        assert_eq!(
            OperatorSpec::<f64>::pucci_plus(2.0, 1.0),
            Err(OperatorError::BadConstants)
        );
        assert_eq!(
            OperatorSpec::<f64>::new(OperatorKind::BellmanMax, 1.0, 2.0, vec![]),
            Err(OperatorError::EmptyFamily)
        );
        assert_eq!(
            OperatorSpec::new(
                OperatorKind::BellmanMax,
                1.0,
                2.0,
                vec![SymMat::diag(3.0, 1.0)]
            ),
            Err(OperatorError::CoefficientOutOfRange(0))
        );
    }

    #[test]
    fn residual_signs() {
        let g = Arc::new(Grid::new(&[-1.0], &[1.0], &[9]).unwrap());
        let phi = GridFunction::from_fn(g.clone(), |x| -x[0] * x[0]);
        let f = GridFunction::zeros(g.clone());
        let spec = OperatorSpec::laplace();
        // u = phi: F(D²u) = -2 <= 0, gap zero
        let r = complementarity_residual(&spec, &phi, &phi, &f, ObstacleSide::Lower).unwrap();
        assert!(interior_sup(&r) == 0.0);
        let mut below = phi.clone();
        below.values_mut()[4] -= 0.1;
        let r = complementarity_residual(&spec, &below, &phi, &f, ObstacleSide::Lower).unwrap();
        assert!(r.get(4) < 0.0);
        let other = Arc::new(Grid::new(&[-1.0], &[1.0], &[5]).unwrap());
        let bad = GridFunction::zeros(other);
        assert!(complementarity_residual(&spec, &phi, &bad, &f, ObstacleSide::Lower).is_err());
    }

    #[test]
    fn eigenvectors_diagonalise() {
        let m = SymMat::new(1.5, -0.7, -0.3);
        for (mu, v) in eigen_decomposition(&m) {
            let mv = [m.xx * v[0] + m.xy * v[1], m.xy * v[0] + m.yy * v[1]];
            assert_relative_eq!(mv[0], mu * v[0], epsilon = 1e-12);
            assert_relative_eq!(mv[1], mu * v[1], epsilon = 1e-12);
        }
    }

    fn sym() -> impl Strategy<Value = SymMat<f64>> {
        (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b, c)| SymMat::new(a, b, c))
    }

    fn psd() -> impl Strategy<Value = SymMat<f64>> {
        (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b, c)| {
            // B^T B with B = [[a, b], [0, c]]
            SymMat::new(a * a, a * b, b * b + c * c)
        })
    }

    fn kinds() -> Vec<OperatorSpec<f64>> {
        let fam = vec![
            SymMat::diag(1.0, 2.0),
            SymMat::new(1.5, 0.4, 1.5),
            SymMat::identity(),
        ];
        vec![
            OperatorSpec::laplace(),
            OperatorSpec::pucci_plus(1.0, 2.0).unwrap(),
            OperatorSpec::pucci_minus(1.0, 2.0).unwrap(),
            OperatorSpec::new(OperatorKind::BellmanMin, 1.0, 2.0, fam.clone()).unwrap(),
            OperatorSpec::new(OperatorKind::BellmanMax, 1.0, 2.0, fam).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn ellipticity_bounds(m in sym(), p in psd()) {
            for spec in kinds() {
                let d = spec.eval(&m.add(&p), 2) - spec.eval(&m, 2);
                let np = p.spectral_norm();
                let tol = 1e-9 * (1.0 + m.max_abs() + np);
                prop_assert!(spec.lambda() * np <= d + tol, "{:?}", spec.kind());
                prop_assert!(d <= 2.0 * spec.big_lambda() * np + tol, "{:?}", spec.kind());
            }
        }

        #[test]
        fn pucci_envelopes_bellman(m in sym()) {
            let ks = kinds();
            let (pp, pm, bmin, bmax) = (ks[1].eval(&m, 2), ks[2].eval(&m, 2), ks[3].eval(&m, 2), ks[4].eval(&m, 2));
            let tol = 1e-9 * (1.0 + m.max_abs());
            prop_assert!(pm <= bmin + tol);
            prop_assert!(bmin <= bmax + tol);
            prop_assert!(bmax <= pp + tol);
        }

        #[test]
        fn dual_is_negated_reflection(m in sym()) {
            for spec in kinds() {
                let lhs = spec.eval(&m, 2);
                let rhs = -spec.dual().eval(&m.scale(-1.0), 2);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + m.max_abs()));
            }
        }

        #[test]
        fn positively_homogeneous(m in sym(), a in 0.0..10.0f64) {
            for spec in kinds() {
                let lhs = spec.eval(&m.scale(a), 2);
                let rhs = a * spec.eval(&m, 2);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + a) * (1.0 + m.max_abs()));
            }
        }

        #[test]
        fn convexity_matches_kind(a in sym(), b in sym()) {
            for spec in kinds() {
                let mid = spec.eval(&a.add(&b).scale(0.5), 2);
                let avg = 0.5 * (spec.eval(&a, 2) + spec.eval(&b, 2));
                let tol = 1e-9 * (1.0 + a.max_abs() + b.max_abs());
                if spec.is_convex() {
                    prop_assert!(mid <= avg + tol);
                }
                if spec.is_concave() {
                    prop_assert!(mid >= avg - tol);
                }
            }
        }

        #[test]
        fn slope_matches_finite_difference(m in sym()) {
            for spec in kinds() {
                let (_, slope) = spec.eval_with_slope(&m, 2);
                let s = 1e-7;
                let fd = (spec.eval(&m.add(&SymMat::identity().scale(s)), 2) - spec.eval(&m, 2)) / s;
                prop_assert!((slope - fd).abs() <= 1e-4 * (1.0 + slope.abs()), "{:?} {} {}", spec.kind(), slope, fd);
            }
        }
    }
}
