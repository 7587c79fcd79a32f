//! Uniform space-time grids on axis-aligned boxes and grid functions.
//!
//! Spatial nodes are stored in a flat array with the first axis running
//! fastest. In one dimension the second coordinate of every point is zero
//! and `nodes_per_axis[1] == 1`.

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// A point in at most two space dimensions; unused components are zero.
pub type Point = [f64; 2];

/// Interpolation stencil: up to `2^dim` (node, weight) pairs.
pub type Weights = SmallVec<[(usize, f64); 4]>;

const SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid {
    dim: usize,
    lower: Point,
    upper: Point,
    dx: Point,
    dt: f64,
    n_steps: usize,
    nodes_per_axis: [usize; 2],
}

impl SpaceTimeGrid {
    pub fn new(
        lower: &[f64],
        upper: &[f64],
        nodes_per_axis: &[usize],
        dt: f64,
        n_steps: usize,
    ) -> Result<Self> {
        let dim = lower.len();
        if upper.len() != dim || nodes_per_axis.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "lower has {} entries, upper {}, nodes {}",
                dim,
                upper.len(),
                nodes_per_axis.len()
            )));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        let mut dx = [1.0; 2];
        let mut nodes = [1usize; 2];
        for i in 0..dim {
            if !(upper[i] > lower[i]) || !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "non-positive extent on axis {i}: [{}, {}]",
                    lower[i], upper[i]
                )));
            }
            if nodes_per_axis[i] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {i} needs at least 3 nodes, got {}",
                    nodes_per_axis[i]
                )));
            }
            lo[i] = lower[i];
            hi[i] = upper[i];
            nodes[i] = nodes_per_axis[i];
            dx[i] = (upper[i] - lower[i]) / (nodes_per_axis[i] - 1) as f64;
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be at least 1".into()));
        }
        Ok(Self {
            dim,
            lower: lo,
            upper: hi,
            dx,
            dt,
            n_steps,
            nodes_per_axis: nodes,
        })
    }

    /// Grid with `nodes` per axis on `[lower, upper]` and time step chosen so
    /// that `n_steps * dt == t_final`.
    pub fn with_final_time(
        lower: &[f64],
        upper: &[f64],
        nodes_per_axis: &[usize],
        t_final: f64,
        n_steps: usize,
    ) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be at least 1".into()));
        }
        Self::new(lower, upper, nodes_per_axis, t_final / n_steps as f64, n_steps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn lower(&self) -> Point {
        self.lower
    }
    pub fn upper(&self) -> Point {
        self.upper
    }
    pub fn dx(&self) -> Point {
        self.dx
    }
    /// Smallest mesh width over the active axes.
    pub fn dx_min(&self) -> f64 {
        self.dx[..self.dim].iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn dx_max(&self) -> f64 {
        self.dx[..self.dim].iter().copied().fold(0.0, f64::max)
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn nodes_per_axis(&self) -> [usize; 2] {
        self.nodes_per_axis
    }
    pub fn t_final(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
    pub fn time(&self, level: usize) -> f64 {
        if level == self.n_steps {
            self.t_final()
        } else {
            self.dt * level as f64
        }
    }
    pub fn n_nodes(&self) -> usize {
        self.nodes_per_axis[0] * self.nodes_per_axis[1]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nodes_per_axis[0] && j < self.nodes_per_axis[1]);
        j * self.nodes_per_axis[0] + i
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        [idx % self.nodes_per_axis[0], idx / self.nodes_per_axis[0]]
    }

    fn coord(&self, axis: usize, i: usize) -> f64 {
        if axis >= self.dim {
            0.0
        } else if i + 1 == self.nodes_per_axis[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + i as f64 * self.dx[axis]
        }
    }

    pub fn point(&self, idx: usize) -> Point {
        let [i, j] = self.multi_index(idx);
        [self.coord(0, i), self.coord(1, j)]
    }

    /// Index of the node at `x`, if `x` is a node (up to rounding).
    pub fn node_at(&self, x: Point) -> Option<usize> {
        let mut ij = [0usize; 2];
        for a in 0..self.dim {
            let s = (x[a] - self.lower[a]) / self.dx[a];
            let r = s.round();
            if (s - r).abs() > SNAP * (1.0 + s.abs()) || r < 0.0 {
                return None;
            }
            let r = r as usize;
            if r >= self.nodes_per_axis[a] {
                return None;
            }
            ij[a] = r;
        }
        Some(self.index(ij[0], ij[1]))
    }

    pub fn kind(&self, idx: usize) -> NodeKind {
        let ij = self.multi_index(idx);
        for a in 0..self.dim {
            if ij[a] == 0 || ij[a] + 1 == self.nodes_per_axis[a] {
                return NodeKind::Boundary;
            }
        }
        NodeKind::Interior
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.kind(idx) == NodeKind::Interior
    }

    /// Nodes at time level 0 belong to the initial slice of the parabolic
    /// boundary, regardless of their spatial kind.
    pub fn is_initial(&self, level: usize) -> bool {
        level == 0
    }

    /// Whether `(level, idx)` lies on the parabolic boundary.
    pub fn on_parabolic_boundary(&self, level: usize, idx: usize) -> bool {
        self.is_initial(level) || self.kind(idx) == NodeKind::Boundary
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&k| self.is_interior(k)).collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&k| !self.is_interior(k)).collect()
    }

    fn tolerance(&self, axis: usize) -> f64 {
        SNAP * (self.upper[axis] - self.lower[axis]).max(1.0)
    }

    pub fn contains(&self, x: Point) -> bool {
        (0..self.dim).all(|a| {
            let tol = self.tolerance(a);
            x[a] >= self.lower[a] - tol && x[a] <= self.upper[a] + tol
        })
    }

    fn check_inside(&self, x: Point) -> Result<()> {
        if self.contains(x) && x[..self.dim].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::OutsideDomain {
                point: x[..self.dim].to_vec(),
            })
        }
    }

    /// Distance from `x` to the boundary of the box.
    pub fn distance_to_boundary(&self, x: Point) -> Result<f64> {
        self.check_inside(x)?;
        let mut d = f64::INFINITY;
        for a in 0..self.dim {
            d = d.min(x[a] - self.lower[a]).min(self.upper[a] - x[a]);
        }
        Ok(d.max(0.0))
    }

    /// Multilinear interpolation weights at `x`: nonnegative, summing to one,
    /// supported on the corners of the cell containing `x`.
    pub fn interpolation_weights(&self, x: Point) -> Result<Weights> {
        self.check_inside(x)?;
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for a in 0..self.dim {
            let n = self.nodes_per_axis[a];
            let s = ((x[a] - self.lower[a]) / self.dx[a]).clamp(0.0, (n - 1) as f64);
            let mut i = s.floor() as usize;
            if i >= n - 1 {
                i = n - 2;
            }
            let mut f = s - i as f64;
            if f < SNAP {
                f = 0.0;
            } else if f > 1.0 - SNAP {
                f = 1.0;
            }
            base[a] = i;
            frac[a] = f;
        }
        let mut out = Weights::new();
        let corners = 1usize << self.dim;
        for c in 0..corners {
            let mut w = 1.0;
            let mut ij = base;
            for a in 0..self.dim {
                if c >> a & 1 == 1 {
                    w *= frac[a];
                    ij[a] += 1;
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w > 0.0 {
                out.push((self.index(ij[0], ij[1]), w));
            }
        }
        Ok(out)
    }
}

/// Values on one time slice of a grid, indexed by spatial node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub time_level: usize,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(time_level: usize, values: Vec<f64>) -> Self {
        Self { time_level, values }
    }

    pub fn from_fn(grid: &SpaceTimeGrid, time_level: usize, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.n_nodes()).map(|k| f(grid.point(k))).collect();
        Self { time_level, values }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest difference quotient over pairs of axis-adjacent nodes.
    pub fn lipschitz_estimate(&self, grid: &SpaceTimeGrid) -> f64 {
        let [nx, ny] = grid.nodes_per_axis();
        let dx = grid.dx();
        let mut lip: f64 = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let k = grid.index(i, j);
                if i + 1 < nx {
                    let q = (self.values[grid.index(i + 1, j)] - self.values[k]).abs() / dx[0];
                    lip = lip.max(q);
                }
                if grid.dim() > 1 && j + 1 < ny {
                    let q = (self.values[grid.index(i, j + 1)] - self.values[k]).abs() / dx[1];
                    lip = lip.max(q);
                }
            }
        }
        lip
    }

    /// Multilinear interpolant at `x` together with the weights used.
    pub fn interpolate(&self, grid: &SpaceTimeGrid, x: Point) -> Result<(f64, Weights)> {
        let w = grid.interpolation_weights(x)?;
        let v = w.iter().map(|&(k, wk)| wk * self.values[k]).sum();
        Ok((v, w))
    }
}
