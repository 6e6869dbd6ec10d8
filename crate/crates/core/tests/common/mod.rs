//! Independent reference computations shared by the integration tests. None
//! of these call the solvers under test.

#![allow(dead_code)]

use std::sync::Arc;

use impulse_qvi::{Grid, GridFunction, NodeSet};

/// Free-boundary point of the 1D oracle, `1 - √2/2`.
pub fn oracle_a() -> f64 {
    1.0 - std::f64::consts::FRAC_1_SQRT_2
}

/// Exact solution of `u'' <= 0`, `u >= 1/2 - x²`, `u(±1) = 0`: the obstacle on
/// `[-a, a]`, tangent lines through `(±1, 0)` outside.
pub fn oracle_obstacle_1d(x: f64) -> f64 {
    let a = oracle_a();
    if x.abs() <= a {
        0.5 - x * x
    } else {
        2.0 * a * (1.0 - x.abs())
    }
}

pub fn line(m: usize) -> Arc<Grid<f64>> {
    Arc::new(Grid::new(&[-1.0], &[1.0], &[m]).unwrap())
}

pub fn square(m: usize) -> Arc<Grid<f64>> {
    Arc::new(Grid::new(&[-1.0, -1.0], &[1.0, 1.0], &[m, m]).unwrap())
}

/// `min { u(y) : y >= x }` by scanning every node.
pub fn brute_cone_min(u: &GridFunction<f64>) -> Vec<f64> {
    let g = u.grid();
    (0..g.len())
        .map(|x| {
            let ix = g.multi_index(x);
            (0..g.len())
                .filter(|&y| {
                    let iy = g.multi_index(y);
                    iy[0] >= ix[0] && iy[1] >= ix[1]
                })
                .map(|y| u.get(y))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Euclidean distance from every node to the nearest node of `set`, by scanning.
pub fn brute_distance(set: &NodeSet<f64>) -> Vec<f64> {
    let g = set.grid();
    (0..g.len())
        .map(|x| {
            let cx = g.coords(x);
            set.nodes()
                .iter()
                .map(|&y| {
                    let cy = g.coords(y);
                    ((cx[0] - cy[0]).powi(2) + (cx[1] - cy[1]).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Classical 1D QVI `u'' >= f`, `u <= c + min_{y >= x} u(y)`, `u(±1) = 0`, on
/// `m` nodes by the Jacobi map `u_i <- min((u_{i-1} + u_{i+1} - h² f)/2, Mu_i)`
/// with `Mu` recomputed by brute force every sweep. Starting from zero the
/// iterates decrease to the fixed point.
pub fn qvi_jacobi_oracle(m: usize, cost: f64, f: f64) -> Vec<f64> {
    let h = 2.0 / (m - 1) as f64;
    let mut u = vec![0.0; m];
    for _ in 0..2_000_000 {
        let mut suffix = vec![0.0; m];
        for i in 0..m {
            suffix[i] = u[i..].iter().copied().fold(f64::INFINITY, f64::min);
        }
        let mut next = u.clone();
        for i in 1..m - 1 {
            let pde = 0.5 * (u[i - 1] + u[i + 1] - h * h * f);
            next[i] = pde.min(cost + suffix[i]);
        }
        let change = next
            .iter()
            .zip(&u)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        u = next;
        if change < 1e-15 {
            break;
        }
    }
    u
}

/// Discrete 2D Laplace lower obstacle problem by projected Jacobi:
/// `u <- max(average of the four neighbours - h² f / 4, φ)`.
pub fn obstacle_jacobi_2d(phi: &GridFunction<f64>, f: f64) -> Vec<f64> {
    let g = phi.grid().clone();
    let h = g.spacing();
    let mut u: Vec<f64> = (0..g.len())
        .map(|x| {
            if g.is_boundary(x) {
                0.0
            } else {
                phi.get(x).max(0.0)
            }
        })
        .collect();
    for _ in 0..5_000_000 {
        let mut next = u.clone();
        for x in g.interior_nodes() {
            let s: f64 = [[1, 0], [-1, 0], [0, 1], [0, -1]]
                .iter()
                .map(|&o| u[g.shift(x, o).unwrap()])
                .sum();
            next[x] = (0.25 * s - 0.25 * h * h * f).max(phi.get(x));
        }
        let change = next
            .iter()
            .zip(&u)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        u = next;
        if change < 1e-14 {
            break;
        }
    }
    u
}
