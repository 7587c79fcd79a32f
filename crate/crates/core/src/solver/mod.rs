//! Theta time stepping of the discrete HJB equation.
//!
//! With rows `L^{k,n}` assembled at `t_n` the scheme at an interior node is
//! `max_k { (U^n - U^{n-1}) / dt + theta L^{k,n}[U^n] + (1 - theta) L^{k,n-1}[U^{n-1}] } = 0`.
//! `theta = 0` is a direct sweep; otherwise each step is solved by policy
//! iteration over interior unknowns.

pub mod howard;
pub mod switching;

use std::sync::Arc;

use serde::Serialize;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpaceTimeGrid};
use crate::problem::ControlProblem;
use crate::scheme::{assemble_level, LevelRows, Scheme, StencilRow, Target};

pub use howard::{howard_solve, ControlSystem, HowardConfig, HowardResult};
pub use switching::{solve_switching, SwitchingState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub theta: f64,
    pub policy_tol: f64,
    pub policy_max_iters: usize,
    pub linear_tol: f64,
    /// `mu` of the comparison estimate, when one has been fitted.
    pub mu_estimate: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            theta: 1.0,
            policy_tol: 1e-10,
            policy_max_iters: 100,
            linear_tol: 1e-12,
            mu_estimate: None,
        }
    }
}

impl SolverConfig {
    pub fn with_theta(theta: f64) -> Self {
        Self {
            theta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidArgument(format!("theta = {} is outside [0, 1]", self.theta)));
        }
        if !(self.policy_tol > 0.0 && self.linear_tol > 0.0) || self.policy_max_iters == 0 {
            return Err(Error::InvalidArgument("solver tolerances must be positive".into()));
        }
        Ok(())
    }

    fn howard(&self) -> HowardConfig {
        HowardConfig {
            tol: self.policy_tol,
            max_iters: self.policy_max_iters,
            linear_tol: self.linear_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepInfo {
    pub level: usize,
    pub howard_iterations: usize,
    pub linear_solves: usize,
    /// Max over interior nodes of `|S|` after the step.
    pub residual: f64,
    pub monotone_iterates: bool,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub grid: SpaceTimeGrid,
    pub levels: Vec<GridFunction>,
    /// Chosen control index per interior node, per level `1..=N`.
    pub policies: Vec<Vec<usize>>,
    pub steps: Vec<StepInfo>,
    /// Discrete sup-norm bound per level and whether every level obeyed it.
    pub sup_bound: Vec<f64>,
    pub sup_bound_ok: bool,
}

impl Solution {
    pub fn final_level(&self) -> &GridFunction {
        self.levels.last().expect("solution has at least one level")
    }

    pub fn max_residual(&self) -> f64 {
        self.steps.iter().map(|s| s.residual).fold(0.0, f64::max)
    }

    /// `max |u_h - u|` over all nodes and levels, and over nodes with
    /// `d(x) > margin`.
    pub fn errors_against(&self, exact: &dyn Fn(f64, [f64; 2]) -> f64, margin: f64) -> (f64, f64) {
        let mut global: f64 = 0.0;
        let mut interior: f64 = 0.0;
        for f in &self.levels {
            let t = self.grid.time(f.time_level);
            for (j, v) in f.values.iter().enumerate() {
                let x = self.grid.point(j);
                let e = (v - exact(t, x)).abs();
                global = global.max(e);
                if self.grid.distance_to_boundary(x).unwrap_or(0.0) > margin {
                    interior = interior.max(e);
                }
            }
        }
        (global, interior)
    }
}

/// Advances one problem on one grid, caching rows per time level.
pub struct Stepper<'a> {
    p: &'a ControlProblem,
    grid: &'a SpaceTimeGrid,
    scheme: Scheme,
    cfg: SolverConfig,
    interior: Vec<usize>,
    position: Vec<usize>,
    cache: Vec<(usize, Arc<LevelRows>)>,
}

const BOUNDARY: usize = usize::MAX;

struct Prepared {
    next: GridFunction,
    explicit: Vec<Vec<f64>>,
    rows_prev: Option<Arc<LevelRows>>,
    rows_now: Option<Arc<LevelRows>>,
}

impl<'a> Stepper<'a> {
    pub fn new(p: &'a ControlProblem, grid: &'a SpaceTimeGrid, scheme: Scheme, cfg: SolverConfig) -> Result<Self> {
        p.validate()?;
        p.check_grid(grid)?;
        cfg.validate()?;
        let interior = grid.interior_nodes();
        let mut position = vec![BOUNDARY; grid.n_nodes()];
        for (m, &j) in interior.iter().enumerate() {
            position[j] = m;
        }
        Ok(Self {
            p,
            grid,
            scheme,
            cfg,
            interior,
            position,
            cache: Vec::new(),
        })
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    fn rows(&mut self, level: usize) -> Result<Arc<LevelRows>> {
        if let Some((_, rows)) = self.cache.iter().find(|c| c.0 == level) {
            return Ok(rows.clone());
        }
        let rows = Arc::new(assemble_level(self.p, self.grid, self.grid.time(level), &self.scheme)?);
        if self.cache.len() == 2 {
            self.cache.remove(0);
        }
        self.cache.push((level, rows.clone()));
        Ok(rows)
    }

    /// Boundary values at level `n`, explicit parts `E^k` in positive form
    /// and the rows used.
    fn prepare(&mut self, prev: &GridFunction) -> Result<Prepared> {
        let n = prev.time_level + 1;
        if n > self.grid.n_steps() {
            return Err(Error::InvalidArgument(format!("level {n} is past the final time")));
        }
        if prev.values.len() != self.grid.n_nodes() {
            return Err(Error::DimensionMismatch("grid function size differs from the grid".into()));
        }
        let theta = self.cfg.theta;
        let dt = self.grid.dt();
        let t_n = self.grid.time(n);
        let rows_prev = if theta < 1.0 { Some(self.rows(n - 1)?) } else { None };
        let rows_now = if theta > 0.0 { Some(self.rows(n)?) } else { None };

        let mut next = GridFunction::new(n, prev.values.clone());
        for j in self.grid.boundary_nodes() {
            next.values[j] = (self.p.psi1)(t_n, self.grid.point(j));
        }

        let nk = self.p.n_controls();
        let ni = self.interior.len();
        let mut explicit = vec![vec![0.0; ni]; nk];
        if let Some(rows) = &rows_prev {
            let s = (1.0 - theta) * dt;
            for k in 0..nk {
                for (m, row) in rows.rows[k].iter().enumerate() {
                    let center = 1.0 - s * row.center_weight;
                    if center < 0.0 {
                        return Err(Error::CflViolation {
                            node: row.center,
                            control: k,
                            coefficient: center,
                        });
                    }
                    let mut e = center * prev.values[row.center];
                    for (t, w) in &row.entries {
                        let v = match t {
                            Target::Node(i) => prev.values[*i],
                            Target::Boundary { psi1, .. } => *psi1,
                        };
                        e += (s * w) * v;
                    }
                    explicit[k][m] = e + s * row.constant;
                }
            }
        } else {
            for e in explicit.iter_mut() {
                for (m, &j) in self.interior.iter().enumerate() {
                    e[m] = prev.values[j];
                }
            }
        }
        Ok(Prepared {
            next,
            explicit,
            rows_prev,
            rows_now,
        })
    }

    /// Per-control implicit systems of the step from `prev`, in scheme units.
    /// Empty for `theta = 0`.
    pub fn systems(&mut self, prev: &GridFunction) -> Result<Vec<ControlSystem>> {
        let pre = self.prepare(prev)?;
        Ok(self.build_systems(&pre))
    }

    fn build_systems(&self, pre: &Prepared) -> Vec<ControlSystem> {
        match &pre.rows_now {
            Some(rows) => (0..self.p.n_controls())
                .map(|k| self.implicit_system(&rows.rows[k], &pre.explicit[k], &pre.next.values))
                .collect(),
            None => Vec::new(),
        }
    }

    /// Level `n - 1` to level `n`.
    pub fn advance(&mut self, prev: &GridFunction) -> Result<(GridFunction, Vec<usize>, StepInfo)> {
        let pre = self.prepare(prev)?;
        let mut info = StepInfo {
            level: pre.next.time_level,
            monotone_iterates: true,
            ..Default::default()
        };
        let mut next = pre.next.clone();
        let policy;
        if pre.rows_now.is_some() {
            let systems = self.build_systems(&pre);
            let guess: Vec<f64> = self.interior.iter().map(|&j| prev.values[j]).collect();
            let r = howard_solve(&systems, &guess, &self.cfg.howard())?;
            for (m, &j) in self.interior.iter().enumerate() {
                next.values[j] = r.values[m];
            }
            info.howard_iterations = r.iterations;
            info.linear_solves = r.linear_solves;
            info.monotone_iterates = r.monotone;
            policy = r.policy;
        } else {
            let explicit = &pre.explicit;
            let mut pol = vec![0usize; self.interior.len()];
            for (m, &j) in self.interior.iter().enumerate() {
                let mut best = explicit[0][m];
                for (k, e) in explicit.iter().enumerate().skip(1) {
                    if e[m] < best {
                        best = e[m];
                        pol[m] = k;
                    }
                }
                next.values[j] = best;
            }
            policy = pol;
        }
        info.residual = self.residual(pre.rows_prev.as_deref(), pre.rows_now.as_deref(), prev, &next);
        if !next.is_finite() {
            return Err(Error::Precondition(format!("non-finite values at level {}", next.time_level)));
        }
        Ok((next, policy, info))
    }

    fn implicit_system(&self, rows: &[StencilRow], explicit: &[f64], known: &[f64]) -> ControlSystem {
        let (theta, dt) = (self.cfg.theta, self.grid.dt());
        let ni = rows.len();
        let mut sys = ControlSystem {
            diag: Vec::with_capacity(ni),
            off: Vec::with_capacity(ni),
            rhs: Vec::with_capacity(ni),
        };
        for (m, row) in rows.iter().enumerate() {
            let mut rhs = explicit[m] / dt + theta * row.constant;
            let mut off = SmallVec::new();
            for (t, w) in &row.entries {
                match t {
                    Target::Node(i) => {
                        let pos = self.position[*i];
                        if pos == BOUNDARY {
                            rhs += theta * w * known[*i];
                        } else {
                            off.push((pos, theta * w));
                        }
                    }
                    Target::Boundary { psi1, .. } => rhs += theta * w * psi1,
                }
            }
            sys.diag.push(1.0 / dt + theta * row.center_weight);
            sys.off.push(off);
            sys.rhs.push(rhs);
        }
        sys
    }

    /// `max_k S^k` at each interior node for the step `prev -> next`.
    pub fn node_residuals(&mut self, prev: &GridFunction, next: &GridFunction) -> Result<Vec<f64>> {
        let n = next.time_level;
        if n == 0 || prev.time_level + 1 != n {
            return Err(Error::InvalidArgument("levels are not consecutive".into()));
        }
        let theta = self.cfg.theta;
        let rows_prev = if theta < 1.0 { Some(self.rows(n - 1)?) } else { None };
        let rows_now = if theta > 0.0 { Some(self.rows(n)?) } else { None };
        Ok(self.scheme_values(rows_prev.as_deref(), rows_now.as_deref(), prev, next))
    }

    fn scheme_values(&self, rows_prev: Option<&LevelRows>, rows_now: Option<&LevelRows>, prev: &GridFunction, next: &GridFunction) -> Vec<f64> {
        let theta = self.cfg.theta;
        let dt = self.grid.dt();
        self.interior
            .iter()
            .enumerate()
            .map(|(m, &j)| {
                (0..self.p.n_controls())
                    .map(|k| {
                        let mut v = (next.values[j] - prev.values[j]) / dt;
                        if let Some(r) = rows_now {
                            v += theta * r.rows[k][m].apply(&next.values);
                        }
                        if let Some(r) = rows_prev {
                            v += (1.0 - theta) * r.rows[k][m].apply(&prev.values);
                        }
                        v
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// `max_j |S(U^n)_j|` recomputed from the rows.
    fn residual(&self, rows_prev: Option<&LevelRows>, rows_now: Option<&LevelRows>, prev: &GridFunction, next: &GridFunction) -> f64 {
        self.scheme_values(rows_prev, rows_now, prev, next)
            .into_iter()
            .fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// One time step from `prev` (at level `n - 1`) to level `n`.
pub fn step(
    p: &ControlProblem,
    scheme: Scheme,
    grid: &SpaceTimeGrid,
    cfg: SolverConfig,
    prev: &GridFunction,
) -> Result<GridFunction> {
    Ok(Stepper::new(p, grid, scheme, cfg)?.advance(prev)?.0)
}

fn growth(theta: f64, dt: f64, lambda: f64) -> Result<(f64, f64)> {
    let denom = 1.0 - theta * dt * lambda;
    if denom <= 0.0 {
        return Err(Error::Precondition("time step too large for the discount".into()));
    }
    Ok(((1.0 + (1.0 - theta) * dt * lambda) / denom, 1.0 / denom))
}

/// Sweeps all levels with `Psi0` initial data.
pub fn solve(p: &ControlProblem, scheme: Scheme, grid: &SpaceTimeGrid, cfg: SolverConfig) -> Result<Solution> {
    let u0 = GridFunction::from_fn(grid, 0, |x| (p.psi0)(x));
    solve_from(p, scheme, grid, cfg, u0)
}

/// Sweeps all levels from given level-0 data.
pub fn solve_from(
    p: &ControlProblem,
    scheme: Scheme,
    grid: &SpaceTimeGrid,
    cfg: SolverConfig,
    u0: GridFunction,
) -> Result<Solution> {
    let mut stepper = Stepper::new(p, grid, scheme, cfg)?;
    let mut bound = u0.sup_norm();
    let mut levels = vec![u0];
    let mut policies = Vec::new();
    let mut steps = Vec::new();
    let mut sup_bound = vec![bound];
    let mut ok = true;
    let dt = grid.dt();
    for n in 1..=grid.n_steps() {
        let (next, policy, info) = stepper.advance(levels.last().unwrap())?;
        // growth from the discount and the running cost, read off the rows used
        let (mut lambda, mut lmax): (f64, f64) = (0.0, 0.0);
        for level in [n - 1, n] {
            let t = grid.time(level);
            for &j in stepper.interior() {
                let x = grid.point(j);
                for &a in &p.controls {
                    lambda = lambda.max((p.discount)(a, t, x));
                    lmax = lmax.max((p.running_cost)(a, t, x).abs());
                }
            }
        }
        let (g, g_impl) = growth(cfg.theta, dt, lambda)?;
        let boundary = grid
            .boundary_nodes()
            .iter()
            .map(|&j| next.values[j].abs())
            .fold(0.0, f64::max);
        bound = boundary.max(g * bound + g_impl * dt * lmax);
        let tol = 1e-8 * (1.0 + bound);
        if next.sup_norm() > bound + tol {
            ok = false;
        }
        sup_bound.push(bound);
        levels.push(next);
        policies.push(policy);
        steps.push(info);
    }
    Ok(Solution {
        grid: grid.clone(),
        levels,
        policies,
        steps,
        sup_bound,
        sup_bound_ok: ok,
    })
}
