//! Gap between the switching system and the full-control solution as the
//! switching cost decreases.

use rayon::prelude::*;
use serde::Serialize;

use super::fit::log_slope;
use super::report::{Report, Table};
use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::problem::ControlProblem;
use crate::scheme::{Scheme, SchemeKind};
use crate::solver::{solve, solve_switching, Solution, SolverConfig};

pub const LOWER_TOLERANCE: f64 = 1e-9;
pub const MONOTONE_TOLERANCE: f64 = 1e-9;
/// Gaps below this count as zero.
pub const ZERO_GAP: f64 = 1e-10;
pub const MIN_ORDER: f64 = 1.0 / 3.0 - 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchingRung {
    pub k: f64,
    /// `max_i max (v_i - u_h)` over all nodes and levels.
    pub gap: f64,
    /// `min_i min (v_i - u_h)`.
    pub min_margin: f64,
    pub obstacle_violation: f64,
    pub coupled_residual: f64,
    pub projection_sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchingReport {
    pub problem: String,
    pub scheme: SchemeKind,
    pub theta: f64,
    pub modes: Vec<Vec<usize>>,
    pub rungs: Vec<SwitchingRung>,
    pub lower_ok: bool,
    pub monotone: bool,
    pub fitted_order: Option<f64>,
    /// `max_i max (w_i - u_h)` with `w_i` the uncoupled single-mode solutions.
    pub single_mode_gap: f64,
    pub pass: bool,
}

impl Report for SwitchingReport {
    const KIND: &'static str = "switching";

    fn passed(&self) -> bool {
        self.pass
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["k", "gap", "min_margin", "obstacle_violation", "coupled_residual"]);
        for r in &self.rungs {
            t.push(vec![
                Some(r.k),
                Some(r.gap),
                Some(r.min_margin),
                Some(r.obstacle_violation),
                Some(r.coupled_residual),
            ]);
        }
        t
    }
}

/// `(max, min)` of `v - u` over all levels and nodes.
fn spread(v: &[crate::grid::GridFunction], u: &Solution) -> (f64, f64) {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for (a, b) in v.iter().zip(&u.levels) {
        for (x, y) in a.values.iter().zip(&b.values) {
            hi = hi.max(x - y);
            lo = lo.min(x - y);
        }
    }
    (hi, lo)
}

pub fn switching_study(
    p: &ControlProblem,
    kind: SchemeKind,
    theta: f64,
    grid: &SpaceTimeGrid,
    modes: &[Vec<usize>],
    ks: &[f64],
) -> Result<SwitchingReport> {
    if ks.is_empty() || ks.iter().any(|k| !(*k > 0.0)) || ks.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "switching costs must be positive and strictly decreasing".into(),
        ));
    }
    let scheme = Scheme::from_kind(kind, theta);
    let cfg = SolverConfig::with_theta(theta);
    let full = solve(p, scheme, grid, cfg)?;
    let mut single_mode_gap = f64::NEG_INFINITY;
    for m in modes {
        let w = solve(&p.with_controls(m)?, scheme, grid, cfg)?;
        single_mode_gap = single_mode_gap.max(spread(&w.levels, &full).0);
    }
    let rungs: Vec<SwitchingRung> = ks
        .par_iter()
        .map(|&k| {
            let s = solve_switching(p, scheme, grid, cfg, modes, k)?;
            let mut gap = f64::NEG_INFINITY;
            let mut min_margin = f64::INFINITY;
            for v in &s.values {
                let (hi, lo) = spread(v, &full);
                gap = gap.max(hi);
                min_margin = min_margin.min(lo);
            }
            Ok(SwitchingRung {
                k,
                gap,
                min_margin,
                obstacle_violation: s.obstacle_violation,
                coupled_residual: s.coupled_residual,
                projection_sweeps: s.max_projection_sweeps,
            })
        })
        .collect::<Result<_>>()?;
    let lower_ok = rungs.iter().all(|r| r.min_margin >= -LOWER_TOLERANCE);
    let monotone = rungs.windows(2).all(|w| w[1].gap <= w[0].gap + MONOTONE_TOLERANCE);
    let all_zero = rungs.iter().all(|r| r.gap <= ZERO_GAP);
    let fitted_order = if all_zero {
        None
    } else {
        log_slope(
            &rungs.iter().map(|r| r.k).collect::<Vec<_>>(),
            &rungs.iter().map(|r| r.gap).collect::<Vec<_>>(),
        )
    };
    let pass = lower_ok && monotone && (all_zero || fitted_order.is_some_and(|o| o >= MIN_ORDER));
    Ok(SwitchingReport {
        problem: p.name.clone(),
        scheme: kind,
        theta,
        modes: modes.to_vec(),
        rungs,
        lower_ok,
        monotone,
        fitted_order,
        single_mode_gap,
        pass,
    })
}
