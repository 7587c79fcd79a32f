//! Error ladders against an exact or a fine-grid reference solution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{local_orders, tail_slope};
use super::report::{Report, Table};
use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::problem::ControlProblem;
use crate::scheme::{Scheme, SchemeKind};
use crate::solver::{solve, SolverConfig};

/// Nodes farther than this from the boundary count as interior.
pub const INTERIOR_MARGIN: f64 = 0.1;
/// Rungs used for the fitted order.
pub const FIT_RUNGS: usize = 3;
/// Allowed growth of the error from one rung to the next.
pub const LADDER_SLACK: f64 = 1.1;
pub const ORDER_TOLERANCE: f64 = 0.05;
/// Reference grids are this many times finer than the finest rung.
pub const REFERENCE_REFINEMENT: usize = 4;

/// How the time step follows the mesh width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtRule {
    /// `dt = c dx`
    Linear(f64),
    /// `dt = c dx^2`
    Parabolic(f64),
}

impl DtRule {
    pub fn dt(&self, dx: f64) -> f64 {
        match *self {
            DtRule::Linear(c) => c * dx,
            DtRule::Parabolic(c) => c * dx * dx,
        }
    }

    /// `p` in `dt ~ dx^p`.
    pub fn exponent(&self) -> f64 {
        match self {
            DtRule::Linear(_) => 1.0,
            DtRule::Parabolic(_) => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    /// Nodes per axis on each rung, strictly increasing.
    pub nodes: Vec<usize>,
    pub t_final: f64,
    pub dt_rule: DtRule,
}

impl LadderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 2 || self.nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("ladder needs at least two strictly refining rungs".into()));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::InvalidArgument("ladder t_final must be positive".into()));
        }
        Ok(())
    }

    /// Grid for `nodes` per axis with `n_steps = ceil(t_final / dt)`.
    pub fn grid(&self, p: &ControlProblem, nodes: usize) -> Result<SpaceTimeGrid> {
        let dx = (0..p.dim)
            .map(|i| (p.upper[i] - p.lower[i]) / (nodes - 1) as f64)
            .fold(f64::INFINITY, f64::min);
        let dt = self.dt_rule.dt(dx);
        let n_steps = ((self.t_final / dt) - 1e-9).ceil().max(1.0) as usize;
        p.grid(nodes, self.t_final, n_steps)
    }
}

/// Exponents of the error bounds in `dt` and `dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoreticalOrders {
    pub lower_dt: f64,
    pub lower_dx: f64,
    pub upper_dt: f64,
    pub upper_dx: f64,
}

impl TheoreticalOrders {
    /// Lower-bound order in `dx` when `dt ~ dx^p`.
    pub fn lower_in_dx(&self, p: f64) -> f64 {
        (p * self.lower_dt).min(self.lower_dx)
    }

    pub fn upper_in_dx(&self, p: f64) -> f64 {
        (p * self.upper_dt).min(self.upper_dx)
    }
}

pub fn theoretical_orders(kind: SchemeKind, theta: f64) -> TheoreticalOrders {
    match kind {
        SchemeKind::Kd => TheoreticalOrders {
            lower_dt: 0.1,
            lower_dx: 0.2,
            upper_dt: 0.25,
            upper_dx: 0.5,
        },
        SchemeKind::Sl if theta == 0.5 => TheoreticalOrders {
            lower_dt: 0.125,
            lower_dx: 0.1,
            upper_dt: 1.0 / 3.0,
            upper_dx: 0.25,
        },
        SchemeKind::Sl => TheoreticalOrders {
            lower_dt: 0.1,
            lower_dx: 0.1,
            upper_dt: 0.25,
            upper_dx: 0.25,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rung {
    pub nodes: usize,
    pub dx: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub err_global: f64,
    pub err_interior: f64,
    /// Local order against the previous rung.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Exact,
    FineGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub scheme: SchemeKind,
    pub theta: f64,
    pub reference: Reference,
    pub rungs: Vec<Rung>,
    pub fitted_order: Option<f64>,
    pub fitted_order_interior: Option<f64>,
    pub theory: TheoreticalOrders,
    pub lower_bound_order: f64,
    pub upper_bound_order: f64,
    pub pass_order: bool,
    /// Errors nonincreasing along the ladder up to `LADDER_SLACK`.
    pub pass_ladder: bool,
    pub errors_finite: bool,
}

impl Report for ConvergenceReport {
    const KIND: &'static str = "convergence";

    fn passed(&self) -> bool {
        self.pass_order && self.pass_ladder && self.errors_finite
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["dx", "dt", "err_global", "err_interior", "order"]);
        for r in &self.rungs {
            t.push(vec![Some(r.dx), Some(r.dt), Some(r.err_global), Some(r.err_interior), r.order]);
        }
        t
    }
}

pub fn convergence_study(
    p: &ControlProblem,
    kind: SchemeKind,
    theta: f64,
    ladder: &LadderSpec,
) -> Result<ConvergenceReport> {
    ladder.validate()?;
    let scheme = Scheme::from_kind(kind, theta);
    let cfg = SolverConfig::with_theta(theta);
    let reference = if p.exact_solution.is_some() {
        Reference::Exact
    } else {
        Reference::FineGrid
    };
    let fine = match reference {
        Reference::Exact => None,
        Reference::FineGrid => {
            let finest = *ladder.nodes.last().unwrap();
            let g = ladder.grid(p, REFERENCE_REFINEMENT * (finest - 1) + 1)?;
            let sol = solve(p, scheme, &g, cfg)?;
            Some((g, sol.final_level().clone()))
        }
    };
    let rungs: Vec<Rung> = ladder
        .nodes
        .par_iter()
        .map(|&n| {
            let g = ladder.grid(p, n)?;
            let sol = solve(p, scheme, &g, cfg)?;
            let (err_global, err_interior) = match (&p.exact_solution, &fine) {
                (Some(u), _) => sol.errors_against(&|t, x| u(t, x), INTERIOR_MARGIN),
                (None, Some((fg, reference))) => {
                    let mut global: f64 = 0.0;
                    let mut interior: f64 = 0.0;
                    for (j, v) in sol.final_level().values.iter().enumerate() {
                        let x = g.point(j);
                        let e = (v - reference.interpolate(fg, x)?.0).abs();
                        global = global.max(e);
                        if g.distance_to_boundary(x)? > INTERIOR_MARGIN {
                            interior = interior.max(e);
                        }
                    }
                    (global, interior)
                }
                (None, None) => return Err(Error::NoReference),
            };
            Ok(Rung {
                nodes: n,
                dx: g.dx_min(),
                dt: g.dt(),
                n_steps: g.n_steps(),
                err_global,
                err_interior,
                order: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(assemble_report(p, kind, theta, ladder, reference, rungs))
}

fn assemble_report(
    p: &ControlProblem,
    kind: SchemeKind,
    theta: f64,
    ladder: &LadderSpec,
    reference: Reference,
    mut rungs: Vec<Rung>,
) -> ConvergenceReport {
    let dx: Vec<f64> = rungs.iter().map(|r| r.dx).collect();
    let eg: Vec<f64> = rungs.iter().map(|r| r.err_global).collect();
    let ei: Vec<f64> = rungs.iter().map(|r| r.err_interior).collect();
    for (r, o) in rungs.iter_mut().zip(local_orders(&dx, &eg)) {
        r.order = o;
    }
    let theory = theoretical_orders(kind, theta);
    let pexp = ladder.dt_rule.exponent();
    let lower = theory.lower_in_dx(pexp);
    let fitted = tail_slope(&dx, &eg, FIT_RUNGS);
    let errors_finite = eg.iter().chain(&ei).all(|e| e.is_finite());
    ConvergenceReport {
        problem: p.name.clone(),
        scheme: kind,
        theta,
        reference,
        fitted_order: fitted,
        fitted_order_interior: tail_slope(&dx, &ei, FIT_RUNGS),
        theory,
        lower_bound_order: lower,
        upper_bound_order: theory.upper_in_dx(pexp),
        pass_order: fitted.is_some_and(|o| o >= lower - ORDER_TOLERANCE),
        pass_ladder: eg.windows(2).all(|w| w[1] <= LADDER_SLACK * w[0]),
        errors_finite,
        rungs,
    }
}
