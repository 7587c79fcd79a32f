//! Explicit scheme for `u_t - x^2 (1-x)^2 u_xx / 2 + u = 0` on (0, 1) with
//! unit data, written out node by node. Next to the boundary the scheme
//! stays above `(1 + 3 exp(-2t)) / 4` while the interior follows
//! `exp(-t)`.

use serde::Serialize;

use super::report::{Report, Table};
use crate::error::{Error, Result};

pub const T_FINAL: f64 = 2.0;
pub const BOUND_SLACK: f64 = 1e-12;
pub const INTERIOR_TOLERANCE: f64 = 0.02;
const SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerSample {
    pub t: f64,
    pub u1: f64,
    pub lower_bound: f64,
    pub u_mid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryLayerReport {
    pub dx: f64,
    pub dt: f64,
    pub safety: f64,
    pub n_steps: usize,
    pub t_final: f64,
    /// `U^N_1`
    pub u1_final: f64,
    /// `sum_{m<N} (1-2dt)^m (dt/2) (1-dx)^2 + (1-2dt)^N`
    pub lower_bound: f64,
    /// `U^n_1 >= bound_n - BOUND_SLACK` at every step.
    pub bound_holds: bool,
    pub min_slack: f64,
    /// `(1 + 3 exp(-2T)) / 4`
    pub limit: f64,
    pub limit_gap: f64,
    /// `U(T, 0.5)`
    pub interior_value: f64,
    pub interior_exact: f64,
    pub interior_err: f64,
    /// `U^N_1 - exp(-T)`
    pub boundary_gap: f64,
    pub samples: Vec<LayerSample>,
    pub pass: bool,
}

impl Report for BoundaryLayerReport {
    const KIND: &'static str = "boundary_layer";

    fn passed(&self) -> bool {
        self.pass
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["t", "u1", "lower_bound", "u_mid"]);
        for s in &self.samples {
            t.push(vec![Some(s.t), Some(s.u1), Some(s.lower_bound), Some(s.u_mid)]);
        }
        t
    }
}

/// Largest stable step: `1 - dt - dt j^2 (1 - x_j)^2 >= 0` for all `j`.
pub fn stable_dt(dx: f64) -> f64 {
    16.0 * dx * dx / (1.0 + 16.0 * dx * dx)
}

/// Runs to `T = 2` with `dt <= safety * 16 dx^2`, shortened so that whole
/// steps reach `T`. `1 / dx` must be an even integer.
pub fn boundary_layer_demo(dx: f64, safety: f64) -> Result<BoundaryLayerReport> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::InvalidArgument(format!("safety {safety} is outside (0, 1]")));
    }
    let m = (1.0 / dx).round() as usize;
    if !(dx > 0.0) || m < 4 || !m.is_multiple_of(2) || ((m as f64) * dx - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("1/dx must be an even integer >= 4, got dx = {dx}")));
    }
    let n_steps = (T_FINAL / (safety * 16.0 * dx * dx) - 1e-9).ceil() as usize;
    let dt = T_FINAL / n_steps as f64;
    // half of j^2 (1 - x_j)^2 is the second-difference weight
    let w: Vec<f64> = (0..=m)
        .map(|j| {
            let x = j as f64 * dx;
            0.5 * (j as f64).powi(2) * (1.0 - x).powi(2)
        })
        .collect();
    for j in 1..m {
        let c = 1.0 - dt - 2.0 * dt * w[j];
        if c < 0.0 {
            return Err(Error::CflViolation {
                node: j,
                control: 0,
                coefficient: c,
            });
        }
    }

    let mut u = vec![1.0; m + 1];
    let mut next = u.clone();
    let mut bound = 1.0;
    let mut min_slack = 0.0f64;
    let decay = 1.0 - 2.0 * dt;
    let source = 0.5 * dt * (1.0 - dx).powi(2);
    let every = (n_steps / SAMPLES).max(1);
    let mut samples = vec![LayerSample {
        t: 0.0,
        u1: 1.0,
        lower_bound: 1.0,
        u_mid: 1.0,
    }];
    for n in 1..=n_steps {
        for j in 1..m {
            next[j] = u[j] + dt * (w[j] * (u[j + 1] - 2.0 * u[j] + u[j - 1]) - u[j]);
        }
        std::mem::swap(&mut u, &mut next);
        bound = decay * bound + source;
        min_slack = min_slack.min(u[1] - bound);
        if n % every == 0 || n == n_steps {
            samples.push(LayerSample {
                t: n as f64 * dt,
                u1: u[1],
                lower_bound: bound,
                u_mid: u[m / 2],
            });
        }
    }
    let limit = (1.0 + 3.0 * (-2.0 * T_FINAL).exp()) / 4.0;
    let exact = (-T_FINAL).exp();
    let interior_err = (u[m / 2] - exact).abs();
    let bound_holds = min_slack >= -BOUND_SLACK;
    Ok(BoundaryLayerReport {
        dx,
        dt,
        safety,
        n_steps,
        t_final: T_FINAL,
        u1_final: u[1],
        lower_bound: bound,
        bound_holds,
        min_slack,
        limit,
        limit_gap: (bound - limit).abs(),
        interior_value: u[m / 2],
        interior_exact: exact,
        interior_err,
        boundary_gap: u[1] - exact,
        samples,
        pass: bound_holds && bound > 0.25 && interior_err <= INTERIOR_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridFunction;
    use crate::problem::builtin_problem;
    use crate::scheme::Scheme;
    use crate::solver::{solve, SolverConfig};

    #[test]
    fn matches_generic_kd_solver() {
        let p = builtin_problem("boundary-layer").unwrap();
        let r = boundary_layer_demo(1.0 / 16.0, 0.9).unwrap();
        let g = p.grid(17, T_FINAL, r.n_steps).unwrap();
        let sol = solve(&p, Scheme::Kd, &g, SolverConfig::with_theta(0.0)).unwrap();
        let last: &GridFunction = sol.final_level();
        assert!((last.values[1] - r.u1_final).abs() < 1e-13);
        assert!((last.values[8] - r.interior_value).abs() < 1e-13);
    }

    #[test]
    fn bound_and_limit_along_ladder() {
        let mut errs = Vec::new();
        for m in [32.0, 64.0, 128.0] {
            let r = boundary_layer_demo(1.0 / m, 0.9).unwrap();
            assert!(r.bound_holds);
            assert!(r.limit_gap <= 0.02, "{}", r.limit_gap);
            assert!(r.u1_final > r.interior_exact + 0.1);
            errs.push(r.interior_err);
        }
        assert!(errs[2] <= 0.5 * errs[0]);
    }

    #[test]
    fn rejects_unstable_or_bad_input() {
        // the node x = 1/2 needs dt <= 16 dx^2 / (1 + 16 dx^2)
        assert!(matches!(boundary_layer_demo(1.0 / 8.0, 1.0), Err(Error::CflViolation { .. })));
        assert!(boundary_layer_demo(1.0 / 64.0, 0.0).is_err());
        assert!(boundary_layer_demo(1.0 / 64.0, 1.5).is_err());
        assert!(boundary_layer_demo(0.3, 0.5).is_err());
        assert!(stable_dt(1.0 / 64.0) > 0.99 * 16.0 / 4096.0);
    }
}
