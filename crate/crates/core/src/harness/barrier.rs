//! Fitted barrier constants `K` with `|u_h - Psi1| <= K zeta` along a
//! refinement ladder.

use rayon::prelude::*;
use serde::Serialize;

use super::convergence::LadderSpec;
use super::report::{Report, Table};
use crate::error::{Error, Result};
use crate::problem::{audit_a2, ControlProblem};
use crate::scheme::{Scheme, SchemeKind};
use crate::solver::{solve, SolverConfig};

/// Largest allowed `max K / min K` across the ladder.
pub const K_RATIO_LIMIT: f64 = 2.0;
pub const AUDIT_SAMPLES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierRung {
    pub nodes: usize,
    pub dx: f64,
    pub dt: f64,
    pub k_fit: f64,
    /// `sup` over the parabolic boundary of `(|u_h - Psi1| - K zeta)^+`.
    pub mismatch: f64,
    /// Same ratio for the exact solution on the same nodes.
    pub k_continuous: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierReport {
    pub problem: String,
    pub scheme: SchemeKind,
    pub theta: f64,
    pub rungs: Vec<BarrierRung>,
    pub k_ratio: f64,
    pub pass: bool,
}

impl Report for BarrierReport {
    const KIND: &'static str = "barrier_audit";

    fn passed(&self) -> bool {
        self.pass
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["dx", "dt", "k_fit", "mismatch", "k_continuous"]);
        for r in &self.rungs {
            t.push(vec![Some(r.dx), Some(r.dt), Some(r.k_fit), Some(r.mismatch), r.k_continuous]);
        }
        t
    }
}

/// Runs the ladder after checking that the barrier passes its audit on the
/// finest grid.
pub fn barrier_audit(
    p: &ControlProblem,
    kind: SchemeKind,
    theta: f64,
    ladder: &LadderSpec,
    seed: u64,
) -> Result<BarrierReport> {
    let barrier = p.barrier.as_ref().ok_or(Error::MissingBarrier)?;
    ladder.validate()?;
    let finest = ladder.grid(p, *ladder.nodes.last().unwrap())?;
    let a2 = audit_a2(p, &finest, AUDIT_SAMPLES, seed)?;
    if !a2.pass {
        return Err(Error::Precondition(format!(
            "barrier fails its audit: sampled generator maximum {:.3e} > -1",
            a2.sampled_max
        )));
    }
    let scheme = Scheme::from_kind(kind, theta);
    let cfg = SolverConfig::with_theta(theta);
    let rungs: Vec<BarrierRung> = ladder
        .nodes
        .par_iter()
        .map(|&n| {
            let g = ladder.grid(p, n)?;
            let sol = solve(p, scheme, &g, cfg)?;
            let mut k_fit: f64 = 0.0;
            let mut k_cont: Option<f64> = p.exact_solution.as_ref().map(|_| 0.0);
            for f in &sol.levels[1..] {
                let t = g.time(f.time_level);
                for j in g.interior_nodes() {
                    let x = g.point(j);
                    let z = barrier(t, x).value;
                    let psi1 = (p.psi1)(t, x);
                    k_fit = k_fit.max((f.values[j] - psi1).abs() / z);
                    if let (Some(u), Some(k)) = (&p.exact_solution, k_cont.as_mut()) {
                        *k = k.max((u(t, x) - psi1).abs() / z);
                    }
                }
            }
            let mut mismatch: f64 = 0.0;
            for f in &sol.levels {
                let t = g.time(f.time_level);
                for (j, v) in f.values.iter().enumerate() {
                    if g.on_parabolic_boundary(f.time_level, j) {
                        let x = g.point(j);
                        let excess = (v - (p.psi1)(t, x)).abs() - k_fit * barrier(t, x).value;
                        mismatch = mismatch.max(excess);
                    }
                }
            }
            Ok(BarrierRung {
                nodes: n,
                dx: g.dx_min(),
                dt: g.dt(),
                k_fit,
                mismatch,
                k_continuous: k_cont,
            })
        })
        .collect::<Result<_>>()?;
    let kmax = rungs.iter().map(|r| r.k_fit).fold(0.0, f64::max);
    let kmin = rungs.iter().map(|r| r.k_fit).fold(f64::INFINITY, f64::min);
    let k_ratio = if kmin > 0.0 { kmax / kmin } else { f64::INFINITY };
    let pass = kmax.is_finite() && k_ratio <= K_RATIO_LIMIT;
    Ok(BarrierReport {
        problem: p.name.clone(),
        scheme: kind,
        theta,
        rungs,
        k_ratio,
        pass,
    })
}
