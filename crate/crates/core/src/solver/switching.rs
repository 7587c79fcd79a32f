//! Switching system: `M` copies of the equation, mode `i` restricted to the
//! control subset `A_i`, coupled through the obstacle
//! `u_i <= min_{j != i} u_j + k`.
//!
//! Each step advances every mode with its own controls and then projects
//! onto the obstacle until no value changes.

use serde::Serialize;

use super::{SolverConfig, Stepper};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpaceTimeGrid};
use crate::problem::ControlProblem;
use crate::scheme::Scheme;

#[derive(Debug, Clone)]
pub struct SwitchingState {
    pub k: f64,
    pub modes: Vec<Vec<usize>>,
    pub grid: SpaceTimeGrid,
    /// `values[i][n]` is mode `i` at level `n`.
    pub values: Vec<Vec<GridFunction>>,
    /// Max over nodes and levels of `U_i - min_{j != i} U_j - k`.
    pub obstacle_violation: f64,
    /// Max of `|max{S_i; U_i - M_i U}|`; the projection is explicit, so this
    /// is a diagnostic rather than an invariant.
    pub coupled_residual: f64,
    pub max_projection_sweeps: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SwitchingSummary {
    pub k: f64,
    pub obstacle_violation: f64,
    pub coupled_residual: f64,
    pub max_projection_sweeps: usize,
}

impl SwitchingState {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// `min_i U_i` at level `n`.
    pub fn min_over_modes(&self, n: usize) -> Vec<f64> {
        let mut out = self.values[0][n].values.clone();
        for mode in &self.values[1..] {
            for (o, v) in out.iter_mut().zip(&mode[n].values) {
                *o = o.min(*v);
            }
        }
        out
    }

    pub fn summary(&self) -> SwitchingSummary {
        SwitchingSummary {
            k: self.k,
            obstacle_violation: self.obstacle_violation,
            coupled_residual: self.coupled_residual,
            max_projection_sweeps: self.max_projection_sweeps,
        }
    }
}

/// `U_i <- min(U_i, min_{j != i} U_j + k)` swept until nothing changes.
/// Returns the number of sweeps.
pub fn project_obstacle(levels: &mut [GridFunction], k: f64) -> usize {
    let m = levels.len();
    let n = levels[0].values.len();
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut changed = false;
        for node in 0..n {
            for i in 0..m {
                let cap = (0..m)
                    .filter(|&j| j != i)
                    .map(|j| levels[j].values[node] + k)
                    .fold(f64::INFINITY, f64::min);
                if levels[i].values[node] > cap {
                    levels[i].values[node] = cap;
                    changed = true;
                }
            }
        }
        if !changed {
            return sweeps;
        }
    }
}

pub fn solve_switching(
    p: &ControlProblem,
    scheme: Scheme,
    grid: &SpaceTimeGrid,
    cfg: SolverConfig,
    modes: &[Vec<usize>],
    k: f64,
) -> Result<SwitchingState> {
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("switching cost k = {k} must be positive")));
    }
    if modes.is_empty() || modes.iter().any(|m| m.is_empty()) {
        return Err(Error::InvalidArgument("modes must be nonempty control subsets".into()));
    }
    let problems: Vec<ControlProblem> = modes.iter().map(|m| p.with_controls(m)).collect::<Result<_>>()?;
    let mut steppers: Vec<Stepper> = problems
        .iter()
        .map(|q| Stepper::new(q, grid, scheme, cfg))
        .collect::<Result<_>>()?;
    let u0 = GridFunction::from_fn(grid, 0, |x| (p.psi0)(x));
    let nm = modes.len();
    let mut values: Vec<Vec<GridFunction>> = vec![vec![u0]; nm];
    let mut violation = f64::NEG_INFINITY;
    let mut coupled: f64 = 0.0;
    let mut max_sweeps = 0;
    let interior = grid.interior_nodes();

    for _ in 1..=grid.n_steps() {
        let mut next = Vec::with_capacity(nm);
        for (i, st) in steppers.iter_mut().enumerate() {
            next.push(st.advance(values[i].last().unwrap())?.0);
        }
        max_sweeps = max_sweeps.max(project_obstacle(&mut next, k));
        for i in 0..nm {
            let prev = values[i].last().unwrap();
            let s = steppers[i].node_residuals(prev, &next[i])?;
            for (m, &j) in interior.iter().enumerate() {
                let cap = (0..nm)
                    .filter(|&l| l != i)
                    .map(|l| next[l].values[j] + k)
                    .fold(f64::INFINITY, f64::min);
                let gap = next[i].values[j] - cap;
                violation = violation.max(gap);
                coupled = coupled.max(s[m].max(gap).abs());
            }
        }
        for (i, f) in next.into_iter().enumerate() {
            values[i].push(f);
        }
    }
    if nm == 1 {
        violation = f64::NEG_INFINITY;
    }
    Ok(SwitchingState {
        k,
        modes: modes.to_vec(),
        grid: grid.clone(),
        values,
        obstacle_violation: violation,
        coupled_residual: coupled,
        max_projection_sweeps: max_sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_problem;
    use crate::scheme::SLConfig;
    use crate::solver::solve;

    fn setup() -> (ControlProblem, SpaceTimeGrid, Scheme, SolverConfig) {
        let p = builtin_problem("manufactured-1d").unwrap();
        let g = p.grid(33, 0.5, 16).unwrap();
        (p, g, Scheme::Sl(SLConfig::new(1.0)), SolverConfig::with_theta(1.0))
    }

    #[test]
    fn single_mode_is_plain_solve() {
        let (p, g, scheme, cfg) = setup();
        let sw = solve_switching(&p, scheme, &g, cfg, &[vec![0, 1]], 0.1).unwrap();
        let full = solve(&p, scheme, &g, cfg).unwrap();
        for n in 0..=g.n_steps() {
            assert_eq!(sw.values[0][n].values, full.levels[n].values);
        }
    }

    #[test]
    fn identical_modes_match_full_solve() {
        let (p, g, scheme, cfg) = setup();
        let sw = solve_switching(&p, scheme, &g, cfg, &[vec![0, 1], vec![0, 1]], 0.05).unwrap();
        let full = solve(&p, scheme, &g, cfg).unwrap();
        for n in 0..=g.n_steps() {
            for i in 0..2 {
                for (a, b) in sw.values[i][n].values.iter().zip(&full.levels[n].values) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn split_modes_bound_full_solution_from_above() {
        let (p, g, scheme, cfg) = setup();
        let sw = solve_switching(&p, scheme, &g, cfg, &[vec![0], vec![1]], 0.05).unwrap();
        let full = solve(&p, scheme, &g, cfg).unwrap();
        for n in 0..=g.n_steps() {
            for (v, u) in sw.min_over_modes(n).iter().zip(&full.levels[n].values) {
                assert!(*v >= u - 1e-10);
            }
        }
        assert!(sw.obstacle_violation <= 1e-12);
        assert!(sw.max_projection_sweeps <= 3);
    }

    #[test]
    fn projection_terminates() {
        let mut levels = vec![
            GridFunction::new(1, vec![0.0, 5.0, 1.0]),
            GridFunction::new(1, vec![3.0, 0.0, 1.0]),
            GridFunction::new(1, vec![9.0, 9.0, 1.0]),
        ];
        project_obstacle(&mut levels, 1.0);
        assert_eq!(levels[0].values, vec![0.0, 1.0, 1.0]);
        assert_eq!(levels[1].values, vec![1.0, 0.0, 1.0]);
        assert_eq!(levels[2].values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let (p, g, scheme, cfg) = setup();
        assert!(solve_switching(&p, scheme, &g, cfg, &[vec![0]], 0.0).is_err());
        assert!(solve_switching(&p, scheme, &g, cfg, &[], 0.1).is_err());
        assert!(solve_switching(&p, scheme, &g, cfg, &[vec![]], 0.1).is_err());
    }
}
