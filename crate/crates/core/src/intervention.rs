//! The intervention operator `Mu(x) = φ(x) + min { u(y) : y >= x }` over grid
//! nodes of the closed box, and diagnostics of the set where that minimum is
//! attained.

use thiserror::Error;

use crate::grid::{nearest_in_set, GridError, GridFunction, NodeSet};
use crate::scalar::{lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterventionError {
    #[error("switching cost must be positive (node {0})")]
    NonPositiveCost(usize),
    #[error("switching cost increases along axis {axis} at node {node}")]
    IncreasingCost { node: usize, axis: usize },
    #[error("modulus exponent must lie in (0, 1]")]
    BadExponent,
    #[error("semiconcavity constant must be non-negative")]
    BadConstant,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Switching cost `φ`: positive and non-increasing along every `+e_i`.
#[derive(Debug, Clone)]
pub struct CostFunction<T> {
    phi: GridFunction<T>,
    semiconcavity_constant: T,
    modulus_exponent: T,
}

impl<T: Real> CostFunction<T> {
    pub fn new(
        phi: GridFunction<T>,
        semiconcavity_constant: T,
        modulus_exponent: T,
    ) -> Result<Self, InterventionError> {
        if !(semiconcavity_constant >= T::zero()) {
            return Err(InterventionError::BadConstant);
        }
        if !(modulus_exponent > T::zero() && modulus_exponent <= T::one()) {
            return Err(InterventionError::BadExponent);
        }
        let g = phi.grid().clone();
        for x in 0..g.len() {
            if !(phi.get(x) > T::zero()) {
                return Err(InterventionError::NonPositiveCost(x));
            }
            for axis in 0..g.dim() {
                let mut step = [0isize; 2];
                step[axis] = 1;
                if let Some(y) = g.shift(x, step) {
                    if phi.get(y) > phi.get(x) {
                        return Err(InterventionError::IncreasingCost { node: x, axis });
                    }
                }
            }
        }
        Ok(CostFunction {
            phi,
            semiconcavity_constant,
            modulus_exponent,
        })
    }

    /// Constant cost `c` (the classical problem uses `c = 1`).
    pub fn constant(
        grid: std::sync::Arc<crate::grid::Grid<T>>,
        c: T,
    ) -> Result<Self, InterventionError> {
        Self::new(GridFunction::constant(grid, c), T::zero(), T::one())
    }

    pub fn phi(&self) -> &GridFunction<T> {
        &self.phi
    }

    pub fn semiconcavity_constant(&self) -> T {
        self.semiconcavity_constant
    }

    pub fn modulus_exponent(&self) -> T {
        self.modulus_exponent
    }
}

/// `m(x) = min { u(y) : y >= x componentwise }`, one reverse sweep.
pub fn cone_min<T: Real>(u: &GridFunction<T>) -> GridFunction<T> {
    let g = u.grid();
    let mut m = u.clone();
    for x in (0..g.len()).rev() {
        let mut best = m.get(x);
        for axis in 0..g.dim() {
            let mut step = [0isize; 2];
            step[axis] = 1;
            if let Some(y) = g.shift(x, step) {
                best = best.min(m.get(y));
            }
        }
        m.values_mut()[x] = best;
    }
    m
}

/// `Mu = φ + cone_min(u)`.
pub fn intervention_operator<T: Real>(
    u: &GridFunction<T>,
    cost: &CostFunction<T>,
) -> Result<GridFunction<T>, InterventionError> {
    Ok(cone_min(u).zip_map(&cost.phi, |m, p| p + m)?)
}

fn dominates<T: Real>(u: &GridFunction<T>, y: usize, x: usize) -> bool {
    let g = u.grid();
    let (iy, ix) = (g.multi_index(y), g.multi_index(x));
    (0..g.dim()).all(|a| iy[a] >= ix[a])
}

/// Nodes `y >= x` where `u(y) <= min_{z >= x} u(z) + tol`. Ties are all kept.
pub fn argmin_set<T: Real>(u: &GridFunction<T>, x: usize, tol: T) -> NodeSet<T> {
    let g = u.grid().clone();
    let level = (0..g.len())
        .filter(|&y| dominates(u, y, x))
        .fold(T::infinity(), |m, y| m.min(u.get(y)));
    NodeSet::from_predicate(g, |y| dominates(u, y, x) && u.get(y) <= level + tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Separation<T> {
    /// `+inf` when the contact set is empty.
    pub value: T,
    pub empty_contact: bool,
    /// Contact node and argmin node achieving the minimum.
    pub witness: Option<(usize, usize)>,
    pub contact_nodes: usize,
}

/// Default contact tolerance `10 h² (1 + |u|_∞)`.
pub fn default_contact_tol<T: Real>(u: &GridFunction<T>) -> T {
    let h = u.grid().spacing();
    lit::<T>(10.0) * h * h * (T::one() + u.sup_norm())
}

/// Minimum over interior contact nodes `x0` (where `Mu - u <= contact_tol`) of
/// the distance between `argmin_set(u, x0, contact_tol)` and the contact set.
pub fn separation_delta<T: Real>(
    u: &GridFunction<T>,
    cost: &CostFunction<T>,
    contact_tol: T,
) -> Result<Separation<T>, InterventionError> {
    let mu = intervention_operator(u, cost)?;
    let g = u.grid().clone();
    let contact = NodeSet::from_predicate(g.clone(), |x| {
        !g.is_boundary(x) && mu.get(x) - u.get(x) <= contact_tol
    });
    if contact.is_empty() {
        return Ok(Separation {
            value: T::infinity(),
            empty_contact: true,
            witness: None,
            contact_nodes: 0,
        });
    }
    let near = nearest_in_set(&contact)?;
    let mut best = T::infinity();
    let mut witness = None;
    for &x0 in contact.nodes() {
        for &y in argmin_set(u, x0, contact_tol).nodes() {
            let d = near.distance.get(y);
            if d < best {
                best = d;
                witness = Some((x0, y));
            }
        }
    }
    Ok(Separation {
        value: best,
        empty_contact: false,
        witness,
        contact_nodes: contact.len(),
    })
}
