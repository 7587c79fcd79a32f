//! Positive-type spatial discretizations shared by both schemes.
//!
//! A [`StencilRow`] encodes `L_h[phi](x_j) = w_c phi_j - sum_i w_i phi(y_i) - l`
//! with `w_i >= 0`. Targets are grid nodes or exact boundary points carrying
//! the Dirichlet value.

pub mod fd;
pub mod sl;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::grid::{Point, SpaceTimeGrid};
use crate::problem::ControlProblem;

pub use fd::assemble_kd;
pub use sl::{assemble_sl, cfl_bound, consistency_error_model, SLConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Node(usize),
    Boundary { x: Point, psi1: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StencilRow {
    pub center: usize,
    pub entries: SmallVec<[(Target, f64); 8]>,
    pub center_weight: f64,
    pub constant: f64,
    pub control: usize,
}

impl StencilRow {
    pub(crate) fn empty(center: usize, control: usize) -> Self {
        Self {
            center,
            entries: SmallVec::new(),
            center_weight: 0.0,
            constant: 0.0,
            control,
        }
    }

    /// Adds weight `w` on node `i`; weight on the center node is folded into
    /// the center coefficient.
    pub(crate) fn push_node(&mut self, i: usize, w: f64) {
        if w == 0.0 {
            return;
        }
        if i == self.center {
            self.center_weight -= w;
            return;
        }
        for e in self.entries.iter_mut() {
            if e.0 == Target::Node(i) {
                e.1 += w;
                return;
            }
        }
        self.entries.push((Target::Node(i), w));
    }

    pub(crate) fn push_boundary(&mut self, x: Point, psi1: f64, w: f64) {
        if w != 0.0 {
            self.entries.push((Target::Boundary { x, psi1 }, w));
        }
    }

    pub fn weight_sum(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Row applied to nodal values; boundary targets use their stored data.
    pub fn apply(&self, values: &[f64]) -> f64 {
        let mut s = self.center_weight * values[self.center] - self.constant;
        for (t, w) in &self.entries {
            s -= w * match t {
                Target::Node(i) => values[*i],
                Target::Boundary { psi1, .. } => *psi1,
            };
        }
        s
    }

    /// Row applied to a function sampled at the exact target points.
    pub fn apply_fn(&self, grid: &SpaceTimeGrid, phi: impl Fn(Point) -> f64) -> f64 {
        let mut s = self.center_weight * phi(grid.point(self.center)) - self.constant;
        for (t, w) in &self.entries {
            s -= w * match t {
                Target::Node(i) => phi(grid.point(*i)),
                Target::Boundary { x, .. } => phi(*x),
            };
        }
        s
    }

    pub fn min_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Kd,
    Sl,
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kd" => Ok(SchemeKind::Kd),
            "sl" => Ok(SchemeKind::Sl),
            other => Err(Error::Config(format!("unknown scheme `{other}` (expected kd or sl)"))),
        }
    }
}

/// Spatial discretization choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Kd,
    Sl(SLConfig),
}

impl Scheme {
    pub fn kind(&self) -> SchemeKind {
        match self {
            Scheme::Kd => SchemeKind::Kd,
            Scheme::Sl(_) => SchemeKind::Sl,
        }
    }

    pub fn from_kind(kind: SchemeKind, theta: f64) -> Self {
        match kind {
            SchemeKind::Kd => Scheme::Kd,
            SchemeKind::Sl => Scheme::Sl(SLConfig::new(theta)),
        }
    }

    pub fn assemble(
        &self,
        p: &ControlProblem,
        grid: &SpaceTimeGrid,
        t: f64,
        control: usize,
        node: usize,
    ) -> Result<StencilRow> {
        match self {
            Scheme::Kd => assemble_kd(p, grid, t, control, node),
            Scheme::Sl(cfg) => assemble_sl(p, grid, t, control, node, cfg),
        }
    }
}

/// Rows of every interior node for every control at one time,
/// `rows[control][k]` for the `k`-th interior node.
#[derive(Debug, Clone)]
pub struct LevelRows {
    pub t: f64,
    pub rows: Vec<Vec<StencilRow>>,
}

pub fn assemble_level(p: &ControlProblem, grid: &SpaceTimeGrid, t: f64, scheme: &Scheme) -> Result<LevelRows> {
    let interior = grid.interior_nodes();
    let rows = (0..p.n_controls())
        .map(|k| {
            interior
                .par_iter()
                .map(|&j| scheme.assemble(p, grid, t, k, j))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LevelRows { t, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub node: usize,
    pub control: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub pass: bool,
    /// Smallest off-center weight (the diagonal-dominance slack).
    pub min_weight: f64,
    /// Smallest `1 - (1 - theta) dt w_c`.
    pub min_explicit_coefficient: f64,
    pub first_violation: Option<Violation>,
}

pub fn check_positive_type(rows: &[StencilRow], dt: f64, theta: f64) -> PositivityReport {
    let mut min_weight = f64::INFINITY;
    let mut min_explicit = f64::INFINITY;
    let mut first_violation = None;
    for r in rows {
        let w = r.min_weight();
        let e = 1.0 - (1.0 - theta) * dt * r.center_weight;
        min_weight = min_weight.min(w);
        min_explicit = min_explicit.min(e);
        if first_violation.is_none() && (w < 0.0 || e < 0.0) {
            first_violation = Some(Violation {
                node: r.center,
                control: r.control,
                value: if w < 0.0 { w } else { e },
            });
        }
    }
    PositivityReport {
        pass: first_violation.is_none(),
        min_weight,
        min_explicit_coefficient: min_explicit,
        first_violation,
    }
}

/// Largest `dt` keeping `1 - (1 - theta) dt w_c >= 0` on the given rows.
pub fn explicit_dt_bound(rows: &[StencilRow], theta: f64) -> f64 {
    let cmax = rows.iter().map(|r| r.center_weight).fold(0.0, f64::max);
    if theta >= 1.0 || cmax <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / ((1.0 - theta) * cmax)
    }
}

/// Levels used to sample time-dependent coefficients: every level for short
/// runs, otherwise 33 evenly spaced ones.
pub(crate) fn sample_levels(grid: &SpaceTimeGrid) -> Vec<usize> {
    let n = grid.n_steps();
    if n <= 32 {
        (0..=n).collect()
    } else {
        let mut v: Vec<usize> = (0..=32).map(|i| i * n / 32).collect();
        v.dedup();
        v
    }
}

/// `explicit_dt_bound` over the rows at the sampled time levels.
pub fn scheme_dt_bound(p: &ControlProblem, grid: &SpaceTimeGrid, scheme: &Scheme, theta: f64) -> Result<f64> {
    if theta >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let mut bound = f64::INFINITY;
    for level in sample_levels(grid) {
        let rows = assemble_level(p, grid, grid.time(level), scheme)?;
        for r in &rows.rows {
            bound = bound.min(explicit_dt_bound(r, theta));
        }
    }
    Ok(bound)
}
