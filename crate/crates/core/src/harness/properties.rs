//! Structural checks of the discrete operators: monotonicity of one step,
//! the comparison estimate, positivity under the CFL bound and the
//! smoothing of the initial data.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::fit::log_slope;
use super::report::{Report, Table};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpaceTimeGrid};
use crate::problem::{smooth_initial_data, ControlProblem, SmoothingReport};
use crate::scheme::{assemble_level, check_positive_type, cfl_bound, sample_levels, SLConfig, Scheme, SchemeKind};
use crate::solver::{solve, SolverConfig, Stepper};

/// Smallest nodewise gap `g - f` between random ordered inputs.
pub const MIN_PERTURBATION: f64 = 1e-3;
pub const CFL_EXPONENT_RANGE: (f64, f64) = (1.4, 1.6);
pub const CFL_FRACTIONS: [f64; 3] = [1.0, 0.5, 0.1];
pub const SMOOTHING_RATIO_LIMIT: f64 = 2.0;
pub const LIPSCHITZ_SLACK: f64 = 1e-6;
/// Largest spread of the per-shift `mu` values.
pub const MU_SPREAD_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub scheme: SchemeKind,
    pub theta: f64,
    pub dt: f64,
    pub pairs: usize,
    pub violations: usize,
    /// `min (step(g) - step(f))` over all pairs and nodes.
    pub min_gap: f64,
    pub pass: bool,
}

/// Draws `f` uniform in `[-1, 1]` and `g = f + eta` with
/// `eta` uniform in `[MIN_PERTURBATION, 1]`, and checks
/// `step(f) <= step(g)` exactly at every node.
pub fn monotonicity_probe(
    p: &ControlProblem,
    scheme: Scheme,
    grid: &SpaceTimeGrid,
    theta: f64,
    pairs: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    let cfg = SolverConfig::with_theta(theta);
    let mut stepper = Stepper::new(p, grid, scheme, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_nodes();
    let mut violations = 0;
    let mut min_gap = f64::INFINITY;
    for _ in 0..pairs {
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let g: Vec<f64> = f.iter().map(|v| v + rng.gen_range(MIN_PERTURBATION..=1.0)).collect();
        let uf = stepper.advance(&GridFunction::new(0, f))?.0;
        let ug = stepper.advance(&GridFunction::new(0, g))?.0;
        for (a, b) in uf.values.iter().zip(&ug.values) {
            if a > b {
                violations += 1;
            }
            min_gap = min_gap.min(b - a);
        }
    }
    Ok(MonotonicityReport {
        scheme: scheme.kind(),
        theta,
        dt: grid.dt(),
        pairs,
        violations,
        min_gap,
        pass: violations == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub deltas: Vec<f64>,
    /// Smallest `mu >= 0` making the estimate hold, per shift.
    pub mu_per_delta: Vec<f64>,
    pub mu_estimate: f64,
    pub mu_spread: f64,
    pub violations: usize,
    pub pass: bool,
}

impl Report for ComparisonReport {
    const KIND: &'static str = "comparison";

    fn passed(&self) -> bool {
        self.pass
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["delta", "mu"]);
        for (d, m) in self.deltas.iter().zip(&self.mu_per_delta) {
            t.push(vec![Some(*d), Some(*m)]);
        }
        t
    }
}

/// Copy with the running cost and all data shifted by `s`.
fn shifted(p: &ControlProblem, s: f64) -> ControlProblem {
    let mut q = p.clone();
    let (l, a, b) = (p.running_cost.clone(), p.psi0.clone(), p.psi1.clone());
    q.running_cost = Arc::new(move |al, t, x| l(al, t, x) + s);
    q.psi0 = Arc::new(move |x| a(x) + s);
    q.psi1 = Arc::new(move |t, x| b(t, x) + s);
    q.exact_solution = None;
    q
}

/// Sub/supersolution pairs from shifting the running cost and the data by
/// `+-delta`: the scheme residuals then differ by `delta` and the parabolic
/// boundary values by `delta`, so
/// `u - v <= e^{mu t} (sup (u - v)^+ + 2 t delta)` must hold. Fits the
/// smallest `mu` per shift and checks every pair against the largest.
pub fn comparison_probe(
    p: &ControlProblem,
    scheme: Scheme,
    grid: &SpaceTimeGrid,
    cfg: SolverConfig,
    deltas: &[f64],
) -> Result<ComparisonReport> {
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidArgument("shifts must be positive".into()));
    }
    let v = solve(p, scheme, grid, cfg)?;
    // (delta, levels of u - v) per pair
    let mut pairs = Vec::new();
    for &d in deltas {
        let up = solve(&shifted(p, d), scheme, grid, cfg)?;
        let down = solve(&shifted(p, -d), scheme, grid, cfg)?;
        let diff = |a: &crate::solver::Solution, b: &crate::solver::Solution| -> Vec<Vec<f64>> {
            a.levels
                .iter()
                .zip(&b.levels)
                .map(|(x, y)| x.values.iter().zip(&y.values).map(|(s, t)| s - t).collect())
                .collect()
        };
        pairs.push((d, diff(&up, &v)));
        pairs.push((d, diff(&v, &down)));
    }
    let bound_parts = |lhs: &[Vec<f64>]| -> f64 {
        let mut b: f64 = 0.0;
        for (n, level) in lhs.iter().enumerate() {
            for (j, e) in level.iter().enumerate() {
                if grid.on_parabolic_boundary(n, j) {
                    b = b.max(e.max(0.0));
                }
            }
        }
        b
    };
    let mut mu_per_delta = vec![0.0f64; deltas.len()];
    for (i, (d, lhs)) in pairs.iter().enumerate() {
        let b = bound_parts(lhs);
        for (n, level) in lhs.iter().enumerate().skip(1) {
            let t = grid.time(n);
            let base = b + 2.0 * t * d;
            for (j, e) in level.iter().enumerate() {
                if grid.is_interior(j) && *e > base {
                    let mu = (e / base).ln() / t;
                    mu_per_delta[i / 2] = mu_per_delta[i / 2].max(mu);
                }
            }
        }
    }
    let mu = mu_per_delta.iter().cloned().fold(0.0, f64::max);
    let mut violations = 0;
    for (d, lhs) in &pairs {
        let b = bound_parts(lhs);
        for (n, level) in lhs.iter().enumerate().skip(1) {
            let t = grid.time(n);
            let rhs = (mu * t).exp() * (b + 2.0 * t * d);
            violations += level
                .iter()
                .enumerate()
                .filter(|(j, e)| grid.is_interior(*j) && **e > rhs * (1.0 + 1e-12))
                .count();
        }
    }
    let spread = mu - mu_per_delta.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ComparisonReport {
        deltas: deltas.to_vec(),
        mu_per_delta,
        mu_estimate: mu,
        mu_spread: spread,
        violations,
        pass: violations == 0 && spread <= MU_SPREAD_LIMIT,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CflRung {
    pub nodes: usize,
    pub dx: f64,
    pub bound: f64,
    /// Positivity at `dt = fraction * bound` for each of `CFL_FRACTIONS`.
    pub positive: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CflReport {
    pub theta: f64,
    pub rungs: Vec<CflRung>,
    pub fitted_exponent: Option<f64>,
    pub pass: bool,
}

impl Report for CflReport {
    const KIND: &'static str = "cfl";

    fn passed(&self) -> bool {
        self.pass
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["dx", "bound"]);
        for r in &self.rungs {
            t.push(vec![Some(r.dx), Some(r.bound)]);
        }
        t
    }
}

/// Semi-Lagrangian time-step bounds along a mesh ladder, with the rows
/// checked for positive type at and below each bound.
pub fn cfl_study(p: &ControlProblem, theta: f64, nodes: &[usize], t_final: f64) -> Result<CflReport> {
    let cfg = SLConfig::new(theta);
    let scheme = Scheme::Sl(cfg);
    let mut rungs = Vec::new();
    for &n in nodes {
        let grid = p.grid(n, t_final, 1)?;
        let bound = cfl_bound(p, &grid, &cfg)?;
        let dts: Vec<f64> = CFL_FRACTIONS
            .iter()
            .map(|f| if bound.is_finite() { f * bound } else { f * grid.dx_min() })
            .collect();
        let mut positive = vec![true; dts.len()];
        for level in sample_levels(&grid) {
            let rows = assemble_level(p, &grid, grid.time(level), &scheme)?;
            for control in &rows.rows {
                for (ok, dt) in positive.iter_mut().zip(&dts) {
                    *ok &= check_positive_type(control, *dt, theta).pass;
                }
            }
        }
        rungs.push(CflRung {
            nodes: n,
            dx: grid.dx_min(),
            bound,
            positive,
        });
    }
    let finite = rungs.iter().all(|r| r.bound.is_finite());
    let fitted_exponent = if finite {
        log_slope(
            &rungs.iter().map(|r| r.dx).collect::<Vec<_>>(),
            &rungs.iter().map(|r| r.bound).collect::<Vec<_>>(),
        )
    } else {
        None
    };
    let (lo, hi) = CFL_EXPONENT_RANGE;
    let scaling_ok = theta >= 1.0 || fitted_exponent.is_some_and(|e| (lo..=hi).contains(&e));
    let pass = scaling_ok && rungs.iter().all(|r| r.positive.iter().all(|b| *b));
    Ok(CflReport {
        theta,
        rungs,
        fitted_exponent,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothingStudy {
    pub rows: Vec<SmoothingReport>,
    /// `|Psi0 - Psi_eps| / eps` per rung.
    pub ratios: Vec<f64>,
    pub ratio_spread: f64,
    pub lipschitz_ok: bool,
    pub pass: bool,
}

pub fn smoothing_study(p: &ControlProblem, grid: &SpaceTimeGrid, eps: &[f64]) -> Result<SmoothingStudy> {
    if eps.is_empty() {
        return Err(Error::InvalidArgument("eps ladder is empty".into()));
    }
    let rows: Vec<SmoothingReport> = eps
        .iter()
        .map(|&e| smooth_initial_data(p, grid, e).map(|r| r.1))
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.sup_error / r.eps).collect();
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio_spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let lipschitz_ok = rows.iter().all(|r| r.lipschitz <= r.lipschitz_psi0 + LIPSCHITZ_SLACK);
    Ok(SmoothingStudy {
        pass: ratio_spread <= SMOOTHING_RATIO_LIMIT && lipschitz_ok,
        rows,
        ratios,
        ratio_spread,
        lipschitz_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_problem;
    use crate::scheme::scheme_dt_bound;

    #[test]
    fn explicit_kd_step_is_monotone() {
        let p = builtin_problem("manufactured-1d").unwrap();
        let g0 = p.grid(33, 1.0, 1).unwrap();
        let dt = scheme_dt_bound(&p, &g0, &Scheme::Kd, 0.0).unwrap();
        let g = SpaceTimeGrid::new(&[0.0], &[1.0], &[33], dt, 1).unwrap();
        let r = monotonicity_probe(&p, Scheme::Kd, &g, 0.0, 20, 3).unwrap();
        assert!(r.pass);
        // boundary values coincide
        assert_eq!(r.min_gap, 0.0);
    }

    #[test]
    fn comparison_with_zero_discount_needs_no_growth() {
        let p = builtin_problem("manufactured-1d").unwrap();
        let g = p.grid(33, 0.5, 16).unwrap();
        let r = comparison_probe(
            &p,
            Scheme::Sl(SLConfig::new(1.0)),
            &g,
            SolverConfig::with_theta(1.0),
            &[1e-3, 1e-2, 1e-1],
        )
        .unwrap();
        assert!(r.pass);
        assert!(r.mu_estimate.abs() < 1e-9, "{r:?}");
        assert!(comparison_probe(&p, Scheme::Kd, &g, SolverConfig::with_theta(1.0), &[0.0]).is_err());
    }

    #[test]
    fn cfl_scaling_three_halves() {
        let p = builtin_problem("manufactured-1d").unwrap();
        let r = cfl_study(&p, 0.0, &[33, 65, 129], 1.0).unwrap();
        assert!(r.pass, "{r:?}");
        let half = cfl_study(&p, 0.5, &[33], 1.0).unwrap();
        assert!((half.rungs[0].bound / r.rungs[0].bound - 2.0).abs() < 1e-12);
        let implicit = cfl_study(&p, 1.0, &[33, 65], 1.0).unwrap();
        assert!(implicit.pass && implicit.fitted_exponent.is_none());
    }

    #[test]
    fn smoothing_error_scales_with_eps() {
        let p = builtin_problem("manufactured-1d").unwrap();
        let g = p.grid(65, 1.0, 1).unwrap();
        let s = smoothing_study(&p, &g, &[0.1, 0.05, 0.025]).unwrap();
        assert!(s.pass, "{s:?}");
    }
}
