//! Uniform box grids in one or two dimensions, node-valued functions, node sets
//! and the exact Euclidean distance transform used by the growth probes.
//!
//! Nodes are numbered row-major: in 2D the node with axis indices `(i, j)`
//! has linear index `i * m[1] + j`, so the `y` index runs fastest.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::scalar::{from_usize, lit, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("only dimensions 1 and 2 are supported, got {0}")]
    UnsupportedDimension(usize),
    #[error("lo, hi and m must have the same length ({lo}, {hi}, {m})")]
    DimensionMismatch { lo: usize, hi: usize, m: usize },
    #[error("axis {axis} needs at least 3 nodes, got {m}")]
    TooFewNodes { axis: usize, m: usize },
    #[error("axis {axis} has lo >= hi or non-finite bounds")]
    EmptyBox { axis: usize },
    #[error("spacing differs across axes ({0} vs {1})")]
    NonUniformSpacing(f64, f64),
    #[error("node set is empty")]
    EmptySet,
    #[error("node index {0} out of range")]
    BadNode(usize),
    #[error("grid functions live on different grids")]
    GridMismatch,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("csv: {0}")]
    Csv(String),
}

/// Rectangular lattice over an axis-aligned box with equal spacing on every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    dim: usize,
    lo: [T; 2],
    hi: [T; 2],
    m: [usize; 2],
    h: T,
}

impl<T: Real> Grid<T> {
    pub fn new(lo: &[T], hi: &[T], m: &[usize]) -> Result<Self, GridError> {
        if lo.len() != hi.len() || lo.len() != m.len() {
            return Err(GridError::DimensionMismatch {
                lo: lo.len(),
                hi: hi.len(),
                m: m.len(),
            });
        }
        let dim = lo.len();
        if !(1..=2).contains(&dim) {
            return Err(GridError::UnsupportedDimension(dim));
        }
        let mut spacings = [T::zero(); 2];
        for axis in 0..dim {
            if m[axis] < 3 {
                return Err(GridError::TooFewNodes { axis, m: m[axis] });
            }
            if !(lo[axis].is_finite() && hi[axis].is_finite() && lo[axis] < hi[axis]) {
                return Err(GridError::EmptyBox { axis });
            }
            spacings[axis] = (hi[axis] - lo[axis]) / from_usize::<T>(m[axis] - 1);
        }
        let h = spacings[0];
        if dim == 2 {
            let tol = T::epsilon() * lit(64.0) * h.max(spacings[1]);
            if (h - spacings[1]).abs() > tol {
                return Err(GridError::NonUniformSpacing(to_f64(h), to_f64(spacings[1])));
            }
        }
        let mut grid = Grid {
            dim,
            lo: [lo[0], T::zero()],
            hi: [hi[0], T::zero()],
            m: [m[0], 1],
            h,
        };
        if dim == 2 {
            grid.lo[1] = lo[1];
            grid.hi[1] = hi[1];
            grid.m[1] = m[1];
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> T {
        self.h
    }

    pub fn lo(&self) -> &[T] {
        &self.lo[..self.dim]
    }

    pub fn hi(&self) -> &[T] {
        &self.hi[..self.dim]
    }

    /// Per-axis node counts.
    pub fn counts(&self) -> &[usize] {
        &self.m[..self.dim]
    }

    pub fn len(&self) -> usize {
        self.m[0] * self.m[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length of the box diagonal.
    pub fn diameter(&self) -> T {
        (0..self.dim)
            .map(|a| (self.hi[a] - self.lo[a]).powi(2))
            .sum::<T>()
            .sqrt()
    }

    pub fn index(&self, ij: [usize; 2]) -> usize {
        ij[0] * self.m[1] + ij[1]
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        [idx / self.m[1], idx % self.m[1]]
    }

    /// Physical coordinates of a node; the second entry is zero in 1D.
    pub fn coords(&self, idx: usize) -> [T; 2] {
        let ij = self.multi_index(idx);
        let mut x = [T::zero(); 2];
        for (axis, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = if ij[axis] == self.m[axis] - 1 {
                self.hi[axis]
            } else {
                self.lo[axis] + from_usize::<T>(ij[axis]) * self.h
            };
        }
        x
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let ij = self.multi_index(idx);
        (0..self.dim).any(|a| ij[a] == 0 || ij[a] == self.m[a] - 1)
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| !self.is_boundary(i))
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.is_boundary(i))
    }

    /// Node reached by moving `offset` index steps along each axis, if it exists.
    pub fn shift(&self, idx: usize, offset: [isize; 2]) -> Option<usize> {
        let ij = self.multi_index(idx);
        let mut out = [0usize; 2];
        for axis in 0..2 {
            if axis >= self.dim && offset[axis] != 0 {
                return None;
            }
            let target = ij[axis] as isize + offset[axis];
            if target < 0 || target >= self.m[axis] as isize {
                return None;
            }
            out[axis] = target as usize;
        }
        Some(self.index(out))
    }

    /// Number of index steps from the node to the nearest boundary face along `axis`.
    pub fn steps_to_boundary(&self, idx: usize, axis: usize) -> usize {
        let i = self.multi_index(idx)[axis];
        i.min(self.m[axis] - 1 - i)
    }

    /// Euclidean distance between two nodes in physical units.
    pub fn node_distance(&self, a: usize, b: usize) -> T {
        let (ia, ib) = (self.multi_index(a), self.multi_index(b));
        let d2: usize = (0..self.dim).map(|ax| ia[ax].abs_diff(ib[ax]).pow(2)).sum();
        from_usize::<T>(d2).sqrt() * self.h
    }

    /// Same box with every spacing halved; coarse node `(i, j)` becomes fine node `(2i, 2j)`.
    pub fn refine(&self) -> Self {
        let m: Vec<usize> = self.counts().iter().map(|&m| 2 * m - 1).collect();
        Grid::new(self.lo(), self.hi(), &m).expect("refinement of a valid grid is valid")
    }

    /// Index on `self.refine()` of a node of `self`.
    pub fn refined_index(&self, idx: usize) -> usize {
        let ij = self.multi_index(idx);
        let fine_m1 = if self.dim == 2 { 2 * self.m[1] - 1 } else { 1 };
        2 * ij[0] * fine_m1 + if self.dim == 2 { 2 * ij[1] } else { 0 }
    }
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn new(grid: Arc<Grid<T>>, values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn constant(grid: Arc<Grid<T>>, c: T) -> Self {
        let n = grid.len();
        GridFunction {
            grid,
            values: vec![c; n],
        }
    }

    pub fn zeros(grid: Arc<Grid<T>>) -> Self {
        Self::constant(grid, T::zero())
    }

    /// Samples `f` at every node's physical coordinates.
    pub fn from_fn(grid: Arc<Grid<T>>, f: impl Fn([T; 2]) -> T) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, idx: usize) -> T {
        self.values[idx]
    }

    pub fn same_grid(&self, other: &GridFunction<T>) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn check_same_grid(&self, other: &GridFunction<T>) -> Result<(), GridError> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(GridError::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &GridFunction<T>,
        f: impl Fn(T, T) -> T,
    ) -> Result<Self, GridError> {
        self.check_same_grid(other)?;
        Ok(GridFunction {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `max |self - other|` over all nodes.
    pub fn sup_distance(&self, other: &GridFunction<T>) -> Result<T, GridError> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn max_value(&self) -> T {
        self.values.iter().fold(T::neg_infinity(), |m, &v| m.max(v))
    }

    pub fn min_value(&self) -> T {
        self.values.iter().fold(T::infinity(), |m, &v| m.min(v))
    }

    /// Values at the nodes of `coarse` that coincide with nodes of this grid.
    pub fn restrict_to(&self, coarse: Arc<Grid<T>>) -> Result<Self, GridError> {
        let fine = &self.grid;
        if fine.dim() != coarse.dim() || fine.lo() != coarse.lo() || fine.hi() != coarse.hi() {
            return Err(GridError::GridMismatch);
        }
        let mut ratio = 0usize;
        for axis in 0..fine.dim() {
            let (mf, mc) = (fine.counts()[axis] - 1, coarse.counts()[axis] - 1);
            if mf % mc != 0 || (ratio != 0 && ratio != mf / mc) {
                return Err(GridError::GridMismatch);
            }
            ratio = mf / mc;
        }
        let values = (0..coarse.len())
            .map(|c| {
                let ij = coarse.multi_index(c);
                let fine_ij = [
                    ij[0] * ratio,
                    if fine.dim() == 2 { ij[1] * ratio } else { 0 },
                ];
                self.values[fine.index(fine_ij)]
            })
            .collect();
        Ok(GridFunction {
            grid: coarse,
            values,
        })
    }

    /// CSV with header `x[,y],value`, one row per node in index order,
    /// every number at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(self.to_csv_string().as_bytes())
    }

    pub fn to_csv_string(&self) -> String {
        let dim = self.grid.dim();
        let mut s = String::with_capacity(self.values.len() * 48);
        s.push_str(if dim == 1 { "x,value\n" } else { "x,y,value\n" });
        for (i, &v) in self.values.iter().enumerate() {
            let x = self.grid.coords(i);
            for xa in x.iter().take(dim) {
                let _ = write!(s, "{},", fmt_f64(to_f64(*xa)));
            }
            let _ = writeln!(s, "{}", fmt_f64(to_f64(v)));
        }
        s
    }

    /// Reads a CSV written by [`GridFunction::write_csv`], checking that the
    /// coordinates match `grid` to within a small fraction of the spacing.
    pub fn read_csv<R: BufRead>(grid: Arc<Grid<T>>, input: R) -> Result<Self, GridError> {
        let dim = grid.dim();
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| GridError::Csv("empty file".into()))?
            .map_err(|e| GridError::Csv(e.to_string()))?;
        let expected = if dim == 1 { "x,value" } else { "x,y,value" };
        if header.trim() != expected {
            return Err(GridError::Csv(format!(
                "header `{}` does not match `{expected}`",
                header.trim()
            )));
        }
        let slack = to_f64(grid.spacing()) * 1e-6;
        let mut values = Vec::with_capacity(grid.len());
        for (row, line) in lines.enumerate() {
            let line = line.map_err(|e| GridError::Csv(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| GridError::Csv(format!("row {row}: {e}")))?;
            if fields.len() != dim + 1 {
                return Err(GridError::Csv(format!(
                    "row {row}: expected {} columns",
                    dim + 1
                )));
            }
            if row >= grid.len() {
                return Err(GridError::LengthMismatch {
                    expected: grid.len(),
                    got: row + 1,
                });
            }
            let x = grid.coords(row);
            for axis in 0..dim {
                if (fields[axis] - to_f64(x[axis])).abs() > slack {
                    return Err(GridError::Csv(format!(
                        "row {row}: coordinate {} does not match grid node {}",
                        fields[axis],
                        to_f64(x[axis])
                    )));
                }
            }
            values.push(lit::<T>(fields[dim]));
        }
        GridFunction::new(grid, values)
    }
}

/// Formats with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Set of node indices of one grid, kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet<T> {
    grid: Arc<Grid<T>>,
    nodes: Vec<usize>,
}

impl<T: Real> NodeSet<T> {
    pub fn new(grid: Arc<Grid<T>>, mut nodes: Vec<usize>) -> Result<Self, GridError> {
        nodes.sort_unstable();
        nodes.dedup();
        if let Some(&bad) = nodes.iter().find(|&&i| i >= grid.len()) {
            return Err(GridError::BadNode(bad));
        }
        Ok(NodeSet { grid, nodes })
    }

    pub fn from_predicate(grid: Arc<Grid<T>>, pred: impl Fn(usize) -> bool) -> Self {
        let nodes = (0..grid.len()).filter(|&i| pred(i)).collect();
        NodeSet { grid, nodes }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.nodes.binary_search(&idx).is_ok()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.grid.len()];
        for &i in &self.nodes {
            mask[i] = true;
        }
        mask
    }
}

/// Distance from every node to the nearest node of a set, with that nearest node.
#[derive(Debug, Clone)]
pub struct NearestMap<T> {
    pub distance: GridFunction<T>,
    pub nearest: Vec<usize>,
}

/// Euclidean distance from each node to the nearest node of `set`.
pub fn distance_to_set<T: Real>(set: &NodeSet<T>) -> Result<GridFunction<T>, GridError> {
    nearest_in_set(set).map(|m| m.distance)
}

/// Exact nearest-node transform: a 1D two-pass scan along the fast axis
/// followed by a lower envelope of parabolas along the slow axis. Ties are
/// resolved towards the lower index.
pub fn nearest_in_set<T: Real>(set: &NodeSet<T>) -> Result<NearestMap<T>, GridError> {
    if set.is_empty() {
        return Err(GridError::EmptySet);
    }
    let grid = set.grid().clone();
    let (m0, m1) = (grid.m[0], grid.m[1]);
    let mask = set.mask();

    // nearest source along the fast axis, per row
    let mut row_src: Vec<Option<usize>> = vec![None; grid.len()];
    for i in 0..m0 {
        let row = &mask[i * m1..(i + 1) * m1];
        let mut last = None;
        for j in 0..m1 {
            if row[j] {
                last = Some(j);
            }
            row_src[i * m1 + j] = last;
        }
        let mut next: Option<usize> = None;
        for j in (0..m1).rev() {
            if row[j] {
                next = Some(j);
            }
            let cur = row_src[i * m1 + j];
            row_src[i * m1 + j] = match (cur, next) {
                (Some(a), Some(b)) => Some(if j - a <= b - j { a } else { b }),
                (a, b) => a.or(b),
            };
        }
    }

    let mut nearest = vec![0usize; grid.len()];
    let mut dist2 = vec![0usize; grid.len()];
    let mut column = Vec::with_capacity(m0);
    for j in 0..m1 {
        column.clear();
        column.extend((0..m0).map(|i| row_src[i * m1 + j].map(|s| s.abs_diff(j).pow(2))));
        for (i, (src_i, d2)) in lower_envelope(&column).into_iter().enumerate() {
            let src_j = row_src[src_i * m1 + j].expect("envelope only uses rows with sources");
            nearest[i * m1 + j] = src_i * m1 + src_j;
            dist2[i * m1 + j] = d2;
        }
    }

    let h = grid.spacing();
    let values = dist2
        .into_iter()
        .map(|d2| from_usize::<T>(d2).sqrt() * h)
        .collect();
    Ok(NearestMap {
        distance: GridFunction { grid, values },
        nearest,
    })
}

/// For each position `i`, the minimiser over `k` of `(i - k)^2 + f[k]` and its value.
/// Integer arithmetic throughout, so the result is exact.
fn lower_envelope(f: &[Option<usize>]) -> Vec<(usize, usize)> {
    let n = f.len();
    let sites: Vec<(i64, i64)> = f
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (k as i64, v as i64)))
        .collect();
    assert!(!sites.is_empty());
    // intersection of parabolas from sites p < q, as a rational s.num / s.den
    let meet = |p: (i64, i64), q: (i64, i64)| -> (i64, i64) {
        ((q.1 + q.0 * q.0) - (p.1 + p.0 * p.0), 2 * (q.0 - p.0))
    };
    // hull[k] holds a site; bounds[k] the left end of its region (None = -inf)
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(sites.len());
    let mut bounds: Vec<Option<(i64, i64)>> = Vec::with_capacity(sites.len());
    for &q in &sites {
        loop {
            match hull.last() {
                None => {
                    hull.push(q);
                    bounds.push(None);
                    break;
                }
                Some(&p) => {
                    let s = meet(p, q);
                    let left = *bounds.last().unwrap();
                    // drop p when its region starts at or after s
                    let dominated = match left {
                        None => false,
                        Some(l) => s.0 * l.1 <= l.0 * s.1,
                    };
                    if dominated {
                        hull.pop();
                        bounds.pop();
                    } else {
                        hull.push(q);
                        bounds.push(Some(s));
                        break;
                    }
                }
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut k = 0usize;
    for i in 0..n as i64 {
        // advance while the next region starts at or before i
        while k + 1 < hull.len() {
            let s = bounds[k + 1].unwrap();
            if s.0 <= i * s.1 {
                // tie at the boundary: keep the lower site unless strictly better
                let (p, q) = (hull[k], hull[k + 1]);
                let vp = (i - p.0).pow(2) + p.1;
                let vq = (i - q.0).pow(2) + q.1;
                if vq < vp || s.0 < i * s.1 {
                    k += 1;
                    continue;
                }
            }
            break;
        }
        let p = hull[k];
        out.push((p.0 as usize, ((i - p.0).pow(2) + p.1) as usize));
    }
    out
}
