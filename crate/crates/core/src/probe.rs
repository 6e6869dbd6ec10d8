//! Numerical measurements of regularity: second increments, contact sets and
//! free boundaries, growth away from the free boundary, semiconcavity moduli
//! and Hölder seminorms of discrete Hessians.
//!
//! Every probe returns plain numbers plus the nodes that realised them, so a
//! run can be inspected after the fact. Nothing here proves a bound; the
//! acceptance suite checks that the measured constants stay put under
//! refinement.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elliptic::{discrete_hessian, ObstacleSide, OperatorError, SymMat};
use crate::grid::{fmt_f64, nearest_in_set, GridError, GridFunction, NodeSet};
use crate::penalty::mollify_obstacle;
use crate::scalar::{from_usize, lit, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error("offset from node {0} leaves the grid")]
    OffsetLeavesGrid(usize),
    #[error("direction not available in dimension {0}")]
    BadDirection(usize),
    #[error("step multiple must be at least 1")]
    BadStep,
    #[error("contact set is empty")]
    EmptyContact,
    #[error("need at least two contact nodes, got {0}")]
    TooFewContacts(usize),
    #[error("region is empty")]
    EmptyRegion,
    #[error("alpha must lie in (0, 1)")]
    BadAlpha,
    #[error("sample budget must be at least 1000, got {0}")]
    SmallBudget(usize),
    #[error("modulus needs constant >= 0 and exponent in (0, 1]")]
    BadModulus,
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// `ω(r) = constant * r^(1 + exponent)`; exponent 1 is the quadratic modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusFamily<T> {
    pub constant: T,
    pub exponent: T,
}

impl<T: Real> ModulusFamily<T> {
    pub fn new(constant: T, exponent: T) -> Result<Self, ProbeError> {
        if !(constant >= T::zero() && exponent > T::zero() && exponent <= T::one()) {
            return Err(ProbeError::BadModulus);
        }
        Ok(ModulusFamily { constant, exponent })
    }

    pub fn quadratic() -> Self {
        ModulusFamily {
            constant: T::one(),
            exponent: T::one(),
        }
    }

    pub fn eval(&self, r: T) -> T {
        self.constant * r.powf(T::one() + self.exponent)
    }
}

/// Stencil direction for second increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Axis(usize),
    /// `e_1 + e_2`
    Diagonal,
    /// `e_1 - e_2`
    AntiDiagonal,
}

impl Direction {
    pub fn all(dim: usize) -> Vec<Direction> {
        if dim == 1 {
            vec![Direction::Axis(0)]
        } else {
            vec![
                Direction::Axis(0),
                Direction::Axis(1),
                Direction::Diagonal,
                Direction::AntiDiagonal,
            ]
        }
    }

    fn offset(self, k: usize, dim: usize) -> Result<[isize; 2], ProbeError> {
        let k = k as isize;
        match self {
            Direction::Axis(a) if a < dim => {
                let mut o = [0; 2];
                o[a] = k;
                Ok(o)
            }
            Direction::Diagonal if dim == 2 => Ok([k, k]),
            Direction::AntiDiagonal if dim == 2 => Ok([k, -k]),
            _ => Err(ProbeError::BadDirection(dim)),
        }
    }

    /// Squared length of the unit index step.
    fn norm2(self) -> usize {
        match self {
            Direction::Axis(_) => 1,
            _ => 2,
        }
    }
}

/// Raw second increment `u(x + k h e) + u(x - k h e) - 2 u(x)`.
pub fn second_increment<T: Real>(
    u: &GridFunction<T>,
    x: usize,
    dir: Direction,
    k: usize,
) -> Result<T, ProbeError> {
    if k == 0 {
        return Err(ProbeError::BadStep);
    }
    let g = u.grid();
    let o = dir.offset(k, g.dim())?;
    let plus = g.shift(x, o).ok_or(ProbeError::OffsetLeavesGrid(x))?;
    let minus = g
        .shift(x, [-o[0], -o[1]])
        .ok_or(ProbeError::OffsetLeavesGrid(x))?;
    Ok(u.get(plus) + u.get(minus) - lit::<T>(2.0) * u.get(x))
}

/// Physical step length of `k` index steps along `dir`.
fn step_length<T: Real>(h: T, dir: Direction, k: usize) -> T {
    from_usize::<T>(k) * h * from_usize::<T>(dir.norm2()).sqrt()
}

/// Smallest `δ²u(x; h e)/|h e|²` over interior nodes and all directions.
pub fn min_second_quotient<T: Real>(u: &GridFunction<T>) -> Result<T, ProbeError> {
    let g = u.grid();
    let h = g.spacing();
    let mut best = T::infinity();
    for x in g.interior_nodes() {
        for dir in Direction::all(g.dim()) {
            if let Ok(d2) = second_increment(u, x, dir, 1) {
                let len = step_length(h, dir, 1);
                best = best.min(d2 / (len * len));
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct ContactSet<T> {
    pub nodes: NodeSet<T>,
    pub tol: T,
    /// Contact nodes with at least one axis neighbour outside the contact set.
    pub free_boundary: NodeSet<T>,
}

/// Default contact tolerance `10 h² (1 + |u|_∞)`.
pub fn default_contact_tol<T: Real>(u: &GridFunction<T>) -> T {
    crate::intervention::default_contact_tol(u)
}

/// Nodes where the one-sided gap to the obstacle (`u - obstacle` on the lower
/// side, `obstacle - u` on the upper side) is at most `tol`.
pub fn extract_contact_set<T: Real>(
    u: &GridFunction<T>,
    obstacle: &GridFunction<T>,
    side: ObstacleSide,
    tol: T,
) -> Result<ContactSet<T>, ProbeError> {
    u.check_same_grid(obstacle)?;
    let g = u.grid().clone();
    let gap = |x: usize| match side {
        ObstacleSide::Lower => u.get(x) - obstacle.get(x),
        ObstacleSide::Upper => obstacle.get(x) - u.get(x),
    };
    let nodes = NodeSet::from_predicate(g.clone(), |x| gap(x) <= tol);
    let mask = nodes.mask();
    let free_boundary = NodeSet::from_predicate(g.clone(), |x| {
        mask[x]
            && (0..g.dim()).any(|a| {
                [-1isize, 1].iter().any(|&s| {
                    let mut o = [0; 2];
                    o[a] = s;
                    g.shift(x, o).is_some_and(|y| !mask[y])
                })
            })
    });
    Ok(ContactSet {
        nodes,
        tol,
        free_boundary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub witness: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub nodes: Vec<usize>,
    pub distance: f64,
    pub value: f64,
}

/// Named metrics, each with the nodes that produced it. Serialises as
/// `{ name: { value, witness } }`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    #[serde(flatten)]
    pub metrics: BTreeMap<String, Metric>,
    #[serde(skip)]
    pub samples: Vec<ProbeSample>,
}

impl ProbeReport {
    pub fn insert(&mut self, name: &str, value: f64, witness: Vec<usize>) {
        if value.is_finite() {
            self.metrics
                .insert(name.to_string(), Metric { value, witness });
        }
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|m| m.value)
    }

    /// Per-sample CSV: `node_a,node_b,distance,value`.
    pub fn samples_csv(&self) -> String {
        let mut s = String::from("node_a,node_b,distance,value\n");
        for p in &self.samples {
            let a = p.nodes.first().copied().unwrap_or(0);
            let b = p.nodes.get(1).copied().unwrap_or(a);
            s.push_str(&format!(
                "{a},{b},{},{}\n",
                fmt_f64(p.distance),
                fmt_f64(p.value)
            ));
        }
        s
    }
}

/// Centred-difference gradient of the obstacle mollified at radius `2h`,
/// one-sided on boundary faces.
pub fn obstacle_slopes<T: Real>(obstacle: &GridFunction<T>) -> Result<Vec<[T; 2]>, ProbeError> {
    let g = obstacle.grid().clone();
    let h = g.spacing();
    let smooth = mollify_obstacle(obstacle, lit::<T>(2.0) * h, T::zero())
        .map_err(|e| match e {
            crate::penalty::PenaltyError::Grid(g) => ProbeError::Grid(g),
            _ => ProbeError::BadStep,
        })?
        .phi_delta;
    let mut out = vec![[T::zero(); 2]; g.len()];
    for (x, slot) in out.iter_mut().enumerate() {
        for axis in 0..g.dim() {
            let mut o = [0isize; 2];
            o[axis] = 1;
            let fwd = g.shift(x, o);
            let bwd = g.shift(x, [-o[0], -o[1]]);
            slot[axis] = match (fwd, bwd) {
                (Some(a), Some(b)) => (smooth.get(a) - smooth.get(b)) / (lit::<T>(2.0) * h),
                (Some(a), None) => (smooth.get(a) - smooth.get(x)) / h,
                (None, Some(b)) => (smooth.get(x) - smooth.get(b)) / h,
                (None, None) => T::zero(),
            };
        }
    }
    Ok(out)
}

/// `obstacle(x0) + <p, y - x0>` with `p` from [`obstacle_slopes`].
fn linear_part<T: Real>(obstacle: &GridFunction<T>, slopes: &[[T; 2]], x0: usize, y: usize) -> T {
    let g = obstacle.grid();
    let (a, b) = (g.coords(x0), g.coords(y));
    let p = slopes[x0];
    obstacle.get(x0) + p[0] * (b[0] - a[0]) + p[1] * (b[1] - a[1])
}

/// Growth of `u` above the linear part of the obstacle at the nearest
/// contact node.
///
/// For each non-contact node `x1` with nearest contact node `x0` at distance
/// `ρ >= 2h`, with `w = u - L_{x0}`:
/// * `growth_constant`: `max w(x1) / ω(2ρ)`
/// * `lipschitz_growth`: `max (u(x1) - u(x0)) / ρ`
pub fn growth_constant<T: Real>(
    u: &GridFunction<T>,
    obstacle: &GridFunction<T>,
    contact: &ContactSet<T>,
    modulus: &ModulusFamily<T>,
) -> Result<ProbeReport, ProbeError> {
    u.check_same_grid(obstacle)?;
    if contact.nodes.is_empty() {
        return Err(ProbeError::EmptyContact);
    }
    let g = u.grid().clone();
    let h = g.spacing();
    let near = nearest_in_set(&contact.nodes)?;
    let slopes = obstacle_slopes(obstacle)?;
    let mask = contact.nodes.mask();
    let min_rho = lit::<T>(2.0) * h * (T::one() - lit::<T>(1e-9));

    let mut report = ProbeReport::default();
    let (mut k_best, mut k_wit) = (T::neg_infinity(), vec![]);
    let (mut l_best, mut l_wit) = (T::neg_infinity(), vec![]);
    let (mut used, mut skipped) = (0usize, 0usize);
    for (x1, &in_contact) in mask.iter().enumerate() {
        if in_contact {
            continue;
        }
        let rho = near.distance.get(x1);
        if rho < min_rho {
            skipped += 1;
            continue;
        }
        used += 1;
        let x0 = near.nearest[x1];
        let w = u.get(x1) - linear_part(obstacle, &slopes, x0, x1);
        let k = w / modulus.eval(lit::<T>(2.0) * rho);
        let l = (u.get(x1) - u.get(x0)) / rho;
        if k > k_best {
            k_best = k;
            k_wit = vec![x1, x0];
        }
        if l > l_best {
            l_best = l;
            l_wit = vec![x1, x0];
        }
        report.samples.push(ProbeSample {
            nodes: vec![x1, x0],
            distance: to_f64(rho),
            value: to_f64(k),
        });
    }
    report.insert("growth_constant", to_f64(k_best), k_wit);
    report.insert("lipschitz_growth", to_f64(l_best), l_wit);
    report.insert("samples", used as f64, vec![]);
    report.insert("skipped", skipped as f64, vec![]);
    Ok(report)
}

/// Above this many contact nodes the pair set is subsampled.
pub const EXHAUSTIVE_CONTACT_LIMIT: usize = 2000;

/// `max (u(x1) - L_{x0}(x1)) / ω(|x1 - x0|)` over pairs of contact nodes.
/// All ordered pairs are used up to [`EXHAUSTIVE_CONTACT_LIMIT`] contact
/// nodes; beyond that a seeded subsample stratified by distance decade.
pub fn contact_oscillation<T: Real>(
    u: &GridFunction<T>,
    obstacle: &GridFunction<T>,
    contact: &ContactSet<T>,
    modulus: &ModulusFamily<T>,
    seed: u64,
) -> Result<ProbeReport, ProbeError> {
    u.check_same_grid(obstacle)?;
    let nodes = contact.nodes.nodes();
    if nodes.len() < 2 {
        return Err(ProbeError::TooFewContacts(nodes.len()));
    }
    let g = u.grid().clone();
    let slopes = obstacle_slopes(obstacle)?;
    let pairs = contact_pairs(&g, nodes, seed);

    let mut report = ProbeReport::default();
    let (mut best, mut wit) = (T::neg_infinity(), vec![]);
    for &(x0, x1) in &pairs {
        let d = g.node_distance(x0, x1);
        let r = (u.get(x1) - linear_part(obstacle, &slopes, x0, x1)) / modulus.eval(d);
        if r > best {
            best = r;
            wit = vec![x0, x1];
        }
        report.samples.push(ProbeSample {
            nodes: vec![x0, x1],
            distance: to_f64(d),
            value: to_f64(r),
        });
    }
    report.insert("contact_oscillation", to_f64(best), wit);
    report.insert("pairs", pairs.len() as f64, vec![]);
    Ok(report)
}

fn contact_pairs<T: Real>(
    g: &crate::grid::Grid<T>,
    nodes: &[usize],
    seed: u64,
) -> Vec<(usize, usize)> {
    if nodes.len() <= EXHAUSTIVE_CONTACT_LIMIT {
        let mut out = Vec::with_capacity(nodes.len() * (nodes.len() - 1));
        for &a in nodes {
            for &b in nodes {
                if a != b {
                    out.push((a, b));
                }
            }
        }
        return out;
    }
    const PER_DECADE: usize = 20_000;
    let h = to_f64(g.spacing());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets: BTreeMap<i32, Vec<(usize, usize)>> = BTreeMap::new();
    for _ in 0..50 * PER_DECADE {
        let a = nodes[rng.gen_range(0..nodes.len())];
        let b = nodes[rng.gen_range(0..nodes.len())];
        if a == b {
            continue;
        }
        let decade = (to_f64(g.node_distance(a, b)) / h).log10().floor() as i32;
        let bucket = buckets.entry(decade).or_default();
        if bucket.len() < PER_DECADE {
            bucket.push((a, b));
        }
    }
    buckets.into_values().flatten().collect()
}

/// Semiconcavity constant per step multiple:
/// `C_k = max δ²u(x; k h e) / |k h e|²` over region nodes and directions.
///
/// Reports `semiconcavity_k{k}` for each step, their maximum as
/// `semiconcavity_constant`, the spread `scale_ratio = max|C_k| / min|C_k|`
/// and `quadratic_semiconcave` (1 when the spread is below 3). Nodes whose
/// offsets leave the grid are skipped and counted in `skipped`.
pub fn semiconcavity_modulus<T: Real>(
    u: &GridFunction<T>,
    region: &NodeSet<T>,
    steps: &[usize],
) -> Result<ProbeReport, ProbeError> {
    if region.is_empty() || steps.is_empty() {
        return Err(ProbeError::EmptyRegion);
    }
    let g = u.grid().clone();
    let h = g.spacing();
    let mut report = ProbeReport::default();
    let mut per_k = Vec::new();
    let mut skipped = 0usize;
    let (mut overall, mut overall_wit) = (T::neg_infinity(), vec![]);
    for &k in steps {
        if k == 0 {
            return Err(ProbeError::BadStep);
        }
        let (mut best, mut wit) = (T::neg_infinity(), vec![]);
        for &x in region.nodes() {
            for dir in Direction::all(g.dim()) {
                match second_increment(u, x, dir, k) {
                    Ok(d2) => {
                        let len = step_length(h, dir, k);
                        let q = d2 / (len * len);
                        if q > best {
                            best = q;
                            wit = vec![x];
                        }
                    }
                    Err(ProbeError::OffsetLeavesGrid(_)) => skipped += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        if best > overall {
            overall = best;
            overall_wit = wit.clone();
        }
        report.insert(&format!("semiconcavity_k{k}"), to_f64(best), wit);
        per_k.push(to_f64(best));
    }
    report.insert("semiconcavity_constant", to_f64(overall), overall_wit);
    report.insert("skipped", skipped as f64, vec![]);
    let finite: Vec<f64> = per_k.iter().copied().filter(|v| v.is_finite()).collect();
    if !finite.is_empty() {
        let hi = finite.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lo = finite.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let ratio = if hi == 0.0 { 1.0 } else { hi / lo };
        report.insert("scale_ratio", ratio, vec![]);
        let ok = ratio.is_finite() && ratio < 3.0;
        report.insert("quadratic_semiconcave", if ok { 1.0 } else { 0.0 }, vec![]);
    }
    Ok(report)
}

/// Discrete Hessians on a set of interior nodes.
#[derive(Debug, Clone)]
pub struct HessianField<T> {
    pub nodes: NodeSet<T>,
    pub values: Vec<SymMat<T>>,
}

impl<T: Real> HessianField<T> {
    pub fn new(nodes: NodeSet<T>, values: Vec<SymMat<T>>) -> Result<Self, ProbeError> {
        if nodes.len() != values.len() {
            return Err(GridError::LengthMismatch {
                expected: nodes.len(),
                got: values.len(),
            }
            .into());
        }
        Ok(HessianField { nodes, values })
    }

    pub fn from_function(u: &GridFunction<T>, nodes: &NodeSet<T>) -> Result<Self, ProbeError> {
        let values = nodes
            .nodes()
            .iter()
            .map(|&x| discrete_hessian(u, x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(HessianField {
            nodes: nodes.clone(),
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderEstimate<T> {
    pub value: T,
    pub witness: Option<(usize, usize)>,
    pub pairs: usize,
}

/// Radius, in index steps, inside which every pair is examined.
pub const NEAR_PAIR_RADIUS: usize = 8;

/// `max |H(x) - H(y)|_max / |x - y|^α` over pairs of field nodes: every pair
/// within `8h`, plus `budget` uniformly drawn pairs (seeded). When the field
/// has no more than that many pairs in total, all of them are used.
pub fn holder_seminorm<T: Real>(
    field: &HessianField<T>,
    alpha: T,
    budget: usize,
    seed: u64,
) -> Result<HolderEstimate<T>, ProbeError> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(ProbeError::BadAlpha);
    }
    if budget < 1000 {
        return Err(ProbeError::SmallBudget(budget));
    }
    let nodes = field.nodes.nodes();
    let n = nodes.len();
    if n == 0 {
        return Err(ProbeError::EmptyRegion);
    }
    let g = field.nodes.grid().clone();
    let mut best = T::zero();
    let mut witness = None;
    let mut pairs = 0usize;
    let mut visit = |a: usize, b: usize| {
        let d = g.node_distance(nodes[a], nodes[b]);
        let q = field.values[a].sub(&field.values[b]).max_abs() / d.powf(alpha);
        pairs += 1;
        if q > best {
            best = q;
            witness = Some((nodes[a], nodes[b]));
        }
    };

    let total = n * (n - 1) / 2;
    let reach = NEAR_PAIR_RADIUS as isize;
    let mut position = vec![usize::MAX; g.len()];
    for (k, &x) in nodes.iter().enumerate() {
        position[x] = k;
    }
    let near_count = {
        let mut c = 0usize;
        for &x in nodes {
            for di in -reach..=reach {
                for dj in if g.dim() == 2 { -reach..=reach } else { 0..=0 } {
                    if (di, dj) > (0, 0) && di * di + dj * dj <= reach * reach {
                        if let Some(y) = g.shift(x, [di, dj]) {
                            c += (position[y] != usize::MAX) as usize;
                        }
                    }
                }
            }
        }
        c
    };
    if total <= near_count + budget {
        for a in 0..n {
            for b in a + 1..n {
                visit(a, b);
            }
        }
    } else {
        for (a, &x) in nodes.iter().enumerate() {
            for di in -reach..=reach {
                for dj in if g.dim() == 2 { -reach..=reach } else { 0..=0 } {
                    if (di, dj) > (0, 0) && di * di + dj * dj <= reach * reach {
                        if let Some(y) = g.shift(x, [di, dj]) {
                            if position[y] != usize::MAX {
                                visit(a, position[y]);
                            }
                        }
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut drawn = 0;
        while drawn < budget {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b {
                visit(a, b);
                drawn += 1;
            }
        }
    }
    Ok(HolderEstimate {
        value: best,
        witness,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::sync::Arc;

    fn line(m: usize) -> Arc<Grid<f64>> {
        Arc::new(Grid::<f64>::new(&[-1.0], &[1.0], &[m]).unwrap())
    }

    #[test]
    fn second_increments_on_simple_functions() {
        let g = Arc::new(Grid::<f64>::new(&[-1.0, -1.0], &[1.0, 1.0], &[21, 21]).unwrap());
        let h = g.spacing();
        let affine = GridFunction::from_fn(g.clone(), |x| 2.0 * x[0] - x[1]);
        let quad = GridFunction::from_fn(g.clone(), |x| x[0] * x[0]);
        let centre = g.index([10, 10]);
        for dir in Direction::all(2) {
            assert!(second_increment(&affine, centre, dir, 3).unwrap().abs() < 1e-12);
        }
        for k in 1..4 {
            let hk = k as f64 * h;
            let d2 = second_increment(&quad, centre, Direction::Axis(0), k).unwrap();
            assert!((d2 - 2.0 * hk * hk).abs() < 1e-12);
        }
        let l = line(21);
        let abs = GridFunction::from_fn(l.clone(), |x| x[0].abs());
        let d2 = second_increment(&abs, 10, Direction::Axis(0), 2).unwrap();
        assert!((d2 - 2.0 * 2.0 * l.spacing()).abs() < 1e-12);
        assert_eq!(
            second_increment(&abs, 1, Direction::Axis(0), 2),
            Err(ProbeError::OffsetLeavesGrid(1))
        );
        assert_eq!(
            second_increment(&abs, 5, Direction::Diagonal, 1),
            Err(ProbeError::BadDirection(1))
        );
    }

    #[test]
    fn full_contact_has_no_free_boundary() {
        let g = line(11);
        let u = GridFunction::from_fn(g.clone(), |x| x[0]);
        let c = extract_contact_set(&u, &u, ObstacleSide::Lower, 0.0).unwrap();
        assert_eq!(c.nodes.len(), 11);
        assert!(c.free_boundary.is_empty());
    }

    #[test]
    fn zero_tolerance_misses_rounded_contact() {
        let g = line(11);
        let u = GridFunction::from_fn(g.clone(), |x| (0.1 * x[0]).exp());
        let obstacle = u.map(|v| v - 1e-15);
        let c = extract_contact_set(&u, &obstacle, ObstacleSide::Lower, 0.0).unwrap();
        assert!(c.nodes.is_empty());
    }

    #[test]
    fn free_boundary_nodes_have_outside_neighbours() {
        let g = Arc::new(Grid::<f64>::new(&[-1.0, -1.0], &[1.0, 1.0], &[21, 21]).unwrap());
        let obstacle = GridFunction::from_fn(g.clone(), |x| 0.5 - x[0] * x[0] - x[1] * x[1]);
        let u = obstacle.map(|v| v.max(0.2));
        let c = extract_contact_set(&u, &obstacle, ObstacleSide::Lower, 1e-12).unwrap();
        assert!(!c.free_boundary.is_empty());
        let mask = c.nodes.mask();
        for &x in c.free_boundary.nodes() {
            assert!(c.nodes.contains(x));
            let outside = [[1, 0], [-1, 0], [0, 1], [0, -1]]
                .iter()
                .any(|&o| g.shift(x, o).is_some_and(|y| !mask[y]));
            assert!(outside);
        }
    }

    #[test]
    fn affine_growth_is_zero() {
        let g = line(41);
        let u = GridFunction::from_fn(g.clone(), |x| 0.3 * x[0] + 0.1);
        let contact = extract_contact_set(&u, &u, ObstacleSide::Lower, 0.0).unwrap();
        // keep only the left half as contact so there is something to measure
        let left = NodeSet::new(g.clone(), (0..10).collect()).unwrap();
        let contact = ContactSet {
            nodes: left.clone(),
            tol: contact.tol,
            free_boundary: left,
        };
        let r = growth_constant(&u, &u, &contact, &ModulusFamily::quadratic()).unwrap();
        assert!(r.value("growth_constant").unwrap().abs() < 1e-12);
    }

    #[test]
    fn growth_needs_contact() {
        let g = line(11);
        let u = GridFunction::zeros(g.clone());
        let empty = ContactSet {
            nodes: NodeSet::new(g.clone(), vec![]).unwrap(),
            tol: 0.0,
            free_boundary: NodeSet::new(g, vec![]).unwrap(),
        };
        assert_eq!(
            growth_constant(&u, &u, &empty, &ModulusFamily::quadratic()).unwrap_err(),
            ProbeError::EmptyContact
        );
    }

    #[test]
    fn oscillation_of_quadratic_obstacle_is_bounded_by_its_curvature() {
        let g = Arc::new(Grid::<f64>::new(&[-1.0, -1.0], &[1.0, 1.0], &[41, 41]).unwrap());
        // D²φ = diag(-2, -6); u = φ on the contact set
        let phi = GridFunction::from_fn(g.clone(), |x| 0.4 - x[0] * x[0] - 3.0 * x[1] * x[1]);
        let contact = extract_contact_set(&phi, &phi, ObstacleSide::Lower, 0.0).unwrap();
        let inner = NodeSet::from_predicate(g.clone(), |x| {
            let c = g.coords(x);
            c[0].abs() < 0.5 && c[1].abs() < 0.5
        });
        let contact = ContactSet {
            nodes: inner.clone(),
            tol: contact.tol,
            free_boundary: inner,
        };
        let r = contact_oscillation(&phi, &phi, &contact, &ModulusFamily::quadratic(), 0).unwrap();
        // u - L = (x - x0)^T D²φ (x - x0) / 2 <= 0 for a concave quadratic
        assert!(r.value("contact_oscillation").unwrap() <= 1e-9);
        let neg = phi.map(|v| -v);
        let r = contact_oscillation(&neg, &neg, &contact, &ModulusFamily::quadratic(), 0).unwrap();
        let c = r.value("contact_oscillation").unwrap();
        assert!(c <= 0.5 * 6.0 + 1e-9 && c > 0.9, "{c}");
    }

    #[test]
    fn oscillation_needs_two_contacts() {
        let g = line(11);
        let u = GridFunction::zeros(g.clone());
        let one = NodeSet::new(g.clone(), vec![4]).unwrap();
        let c = ContactSet {
            nodes: one.clone(),
            tol: 0.0,
            free_boundary: one,
        };
        assert_eq!(
            contact_oscillation(&u, &u, &c, &ModulusFamily::quadratic(), 0).unwrap_err(),
            ProbeError::TooFewContacts(1)
        );
    }

    #[test]
    fn concave_quadratic_semiconcavity_is_exact() {
        let g = Arc::new(Grid::<f64>::new(&[-1.0, -1.0], &[1.0, 1.0], &[21, 21]).unwrap());
        let u = GridFunction::from_fn(g.clone(), |x| -(x[0] * x[0] + x[1] * x[1]));
        let region = NodeSet::from_predicate(g.clone(), |x| !g.is_boundary(x));
        let r = semiconcavity_modulus(&u, &region, &[1, 2, 4]).unwrap();
        for k in [1, 2, 4] {
            let c = r.value(&format!("semiconcavity_k{k}")).unwrap();
            assert!((c + 2.0).abs() < 1e-9, "k={k}: {c}");
        }
        assert_eq!(r.value("quadratic_semiconcave"), Some(1.0));
        assert!(r.value("skipped").unwrap() > 0.0);
    }

    #[test]
    fn kink_is_flagged() {
        let g = line(81);
        let u = GridFunction::from_fn(g.clone(), |x| x[0].abs());
        let region = NodeSet::new(g.clone(), vec![40]).unwrap();
        let r = semiconcavity_modulus(&u, &region, &[1, 2, 4]).unwrap();
        let h = g.spacing();
        assert!((r.value("semiconcavity_k1").unwrap() - 2.0 / h).abs() < 1e-6);
        assert_eq!(r.value("quadratic_semiconcave"), Some(0.0));
    }

    #[test]
    fn holder_of_constant_and_cubic() {
        let g = line(41);
        let region = NodeSet::from_predicate(g.clone(), |x| !g.is_boundary(x));
        let quad = GridFunction::from_fn(g.clone(), |x| 1.5 * x[0] * x[0] + x[0]);
        let f = HessianField::from_function(&quad, &region).unwrap();
        assert!(holder_seminorm(&f, 0.5, 1000, 0).unwrap().value < 1e-9);

        let cubic = GridFunction::from_fn(g.clone(), |x| x[0].powi(3));
        let f = HessianField::from_function(&cubic, &region).unwrap();
        let est = holder_seminorm(&f, 0.5, 1000, 0).unwrap();
        // H = 6x exactly; the longest pair spans the interior nodes
        let span = 2.0 - 2.0 * g.spacing();
        assert!(
            (est.value - 6.0 * span.powf(0.5)).abs() < 1e-8,
            "{}",
            est.value
        );

        let shifted = HessianField::new(
            f.nodes.clone(),
            f.values
                .iter()
                .map(|m| m.add(&SymMat::new(3.0, 0.0, -1.0)))
                .collect(),
        )
        .unwrap();
        let est2 = holder_seminorm(&shifted, 0.5, 1000, 0).unwrap();
        assert!((est.value - est2.value).abs() < 1e-9);
    }

    #[test]
    fn holder_sampling_is_deterministic() {
        let g = Arc::new(Grid::<f64>::new(&[-1.0, -1.0], &[1.0, 1.0], &[41, 41]).unwrap());
        let u = GridFunction::from_fn(g.clone(), |x| (3.0 * x[0]).sin() * x[1].powi(3));
        let region = NodeSet::from_predicate(g.clone(), |x| !g.is_boundary(x));
        let f = HessianField::from_function(&u, &region).unwrap();
        let a = holder_seminorm(&f, 0.5, 5000, 7).unwrap();
        let b = holder_seminorm(&f, 0.5, 5000, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.pairs > 5000);
        assert_eq!(
            holder_seminorm(&f, 0.5, 10, 7).unwrap_err(),
            ProbeError::SmallBudget(10)
        );
    }

    #[test]
    fn probes_scale_linearly() {
        let g = line(81);
        let phi = GridFunction::from_fn(g.clone(), |x| 0.5 - x[0] * x[0]);
        let u = phi.map(|v| v.max(0.2) + 0.0);
        let c = extract_contact_set(&u, &phi, ObstacleSide::Lower, 1e-12).unwrap();
        let r1 = growth_constant(&u, &phi, &c, &ModulusFamily::quadratic()).unwrap();
        let (u3, phi3) = (u.map(|v| 3.0 * v), phi.map(|v| 3.0 * v));
        let c3 = extract_contact_set(&u3, &phi3, ObstacleSide::Lower, 3e-12).unwrap();
        let r3 = growth_constant(&u3, &phi3, &c3, &ModulusFamily::quadratic()).unwrap();
        let (k1, k3) = (
            r1.value("growth_constant").unwrap(),
            r3.value("growth_constant").unwrap(),
        );
        assert!((k3 - 3.0 * k1).abs() <= 1e-9 * (1.0 + k1.abs()));
        assert_eq!(
            r1.metrics["growth_constant"].witness,
            r3.metrics["growth_constant"].witness
        );
    }

    #[test]
    fn report_json_shape() {
        let mut r = ProbeReport::default();
        r.insert("k", 1.5, vec![3, 4]);
        r.insert("nan", f64::NAN, vec![]);
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"k":{"value":1.5,"witness":[3,4]}}"#
        );
    }
}
