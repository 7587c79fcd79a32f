//! Truncated linear-interpolation semi-Lagrangian stencils.
//!
//! Each diffusion column `s_j` contributes a leg pair `x +- sqrt(h) s_j`
//! approximating `|s_j|^2 phi_ee / 2` along `e = s_j / |s_j|`; the drift uses
//! the point `x + h b`. Off-grid endpoints are interpolated multilinearly.
//! A leg leaving the box is cut at its first boundary intersection and the
//! pair switches to the three-point nonuniform second difference.

use serde::{Deserialize, Serialize};

use super::{scheme_dt_bound, Scheme, StencilRow};
use crate::error::{Error, Result};
use crate::grid::{Point, SpaceTimeGrid};
use crate::problem::ControlProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SLConfig {
    pub theta: f64,
    /// Internal step `h`; defaults to the smallest mesh width.
    pub stencil_step: Option<f64>,
    /// Optional `C` capping the time step at `C (1 - theta) dx^(3/2)`.
    pub cfl_constant: Option<f64>,
}

impl SLConfig {
    pub fn new(theta: f64) -> Self {
        Self {
            theta,
            stencil_step: None,
            cfl_constant: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidArgument(format!("theta = {} is outside [0, 1]", self.theta)));
        }
        if let Some(h) = self.stencil_step {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument(format!("stencil step {h} must be positive")));
            }
        }
        Ok(())
    }

    pub fn step(&self, grid: &SpaceTimeGrid) -> f64 {
        self.stencil_step.unwrap_or_else(|| grid.dx_min())
    }
}

/// Distance from `x` along the unit vector `e` to the boundary of the box.
fn exit_distance(grid: &SpaceTimeGrid, x: Point, e: Point) -> (f64, usize) {
    let (lo, hi) = (grid.lower(), grid.upper());
    let mut best = (f64::INFINITY, 0);
    for a in 0..grid.dim() {
        let d = if e[a] > 0.0 {
            (hi[a] - x[a]) / e[a]
        } else if e[a] < 0.0 {
            (lo[a] - x[a]) / e[a]
        } else {
            continue;
        };
        if d < best.0 {
            best = (d, a);
        }
    }
    best
}

struct Builder<'a> {
    p: &'a ControlProblem,
    grid: &'a SpaceTimeGrid,
    t: f64,
    row: StencilRow,
}

impl Builder<'_> {
    fn add(&mut self, x: Point, e: Point, len: f64, exit: (f64, usize), w: f64) -> Result<()> {
        let (lo, hi) = (self.grid.lower(), self.grid.upper());
        let mut y = [0.0; 2];
        for a in 0..self.grid.dim() {
            y[a] = (x[a] + len * e[a]).clamp(lo[a], hi[a]);
        }
        self.row.center_weight += w;
        if len >= exit.0 {
            let a = exit.1;
            y[a] = if e[a] > 0.0 { hi[a] } else { lo[a] };
            let psi = (self.p.psi1)(self.t, y);
            self.row.push_boundary(y, psi, w);
        } else {
            for (i, wi) in self.grid.interpolation_weights(y)? {
                self.row.push_node(i, w * wi);
            }
        }
        Ok(())
    }
}

pub fn assemble_sl(
    p: &ControlProblem,
    grid: &SpaceTimeGrid,
    t: f64,
    control: usize,
    node: usize,
    cfg: &SLConfig,
) -> Result<StencilRow> {
    if !grid.is_interior(node) {
        return Err(Error::NotInterior(node));
    }
    let h = cfg.step(grid);
    let dim = grid.dim();
    let alpha = p.controls[control];
    let x = grid.point(node);
    let sigma = (p.sigma)(alpha, t, x);
    let b = (p.drift)(alpha, t, x);
    let c = (p.discount)(alpha, t, x);
    let mut bld = Builder {
        p,
        grid,
        t,
        row: StencilRow::empty(node, control),
    };
    bld.row.constant = (p.running_cost)(alpha, t, x);

    for j in 0..sigma.cols {
        let col = sigma.column(j);
        let norm = col[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let e = [col[0] / norm, if dim == 2 { col[1] / norm } else { 0.0 }];
        let minus = [-e[0], -e[1]];
        let leg = h.sqrt() * norm;
        let exit_p = exit_distance(grid, x, e);
        let exit_m = exit_distance(grid, x, minus);
        let dp = leg.min(exit_p.0);
        let dm = leg.min(exit_m.0);
        if !(dp > 0.0 && dm > 0.0) {
            return Err(Error::ZeroLeg { node });
        }
        let coef = 0.5 * norm * norm;
        bld.add(x, e, dp, exit_p, coef * 2.0 / (dp * (dp + dm)))?;
        bld.add(x, minus, dm, exit_m, coef * 2.0 / (dm * (dp + dm)))?;
    }

    let nb = b[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb > 0.0 {
        let e = [b[0] / nb, if dim == 2 { b[1] / nb } else { 0.0 }];
        let exit = exit_distance(grid, x, e);
        let len = (h * nb).min(exit.0);
        if !(len > 0.0) {
            return Err(Error::ZeroLeg { node });
        }
        bld.add(x, e, len, exit, nb / len)?;
    }

    let mut row = bld.row;
    row.center_weight -= c;
    Ok(row)
}

/// Largest `dt` for which every explicit-part row stays positive over the
/// sampled time levels; `+inf` for `theta = 1`.
pub fn cfl_bound(p: &ControlProblem, grid: &SpaceTimeGrid, cfg: &SLConfig) -> Result<f64> {
    cfg.validate()?;
    if cfg.theta >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let mut bound = scheme_dt_bound(p, grid, &Scheme::Sl(*cfg), cfg.theta)?;
    if let Some(c) = cfg.cfl_constant {
        bound = bound.min(c * (1.0 - cfg.theta) * grid.dx_min().powf(1.5));
    }
    Ok(bound)
}

/// `C K (|1 - 2 theta| dt eps^-3 + dt^2 eps^-5 + dx eps^-3)`.
pub fn consistency_error_model(dt: f64, dx: f64, eps: f64, theta: f64, k: f64, c: f64) -> Result<f64> {
    if !(dt > 0.0 && dx > 0.0 && eps > 0.0) {
        return Err(Error::InvalidArgument("dt, dx and eps must be positive".into()));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("theta = {theta} is outside [0, 1]")));
    }
    Ok(c * k * ((1.0 - 2.0 * theta).abs() * dt * eps.powi(-3) + dt * dt * eps.powi(-5) + dx * eps.powi(-3)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::testing::constant;
    use crate::problem::{builtin_problem, Sigma};
    use crate::scheme::{assemble_level, check_positive_type, Target};

    fn line(n: usize) -> SpaceTimeGrid {
        SpaceTimeGrid::with_final_time(&[0.0], &[1.0], &[n], 1.0, 1).unwrap()
    }

    #[test]
    fn interior_legs_on_nodes() {
        // sqrt(2 dx) = 1/4 with dx = 1/32
        let g = line(33);
        let p = constant(1, Sigma::scalar(2f64.sqrt()), [0.0; 2], 0.0, 0.0);
        let cfg = SLConfig::new(1.0);
        let row = assemble_sl(&p, &g, 0.0, 0, 16, &cfg).unwrap();
        assert_eq!(row.entries.len(), 2);
        assert!(row.entries.iter().all(|e| matches!(e.0, Target::Node(8) | Target::Node(24))));
        for e in &row.entries {
            assert!((e.1 - 16.0).abs() < 1e-9);
        }
        for node in 9..24 {
            let row = assemble_sl(&p, &g, 0.0, 0, node, &cfg).unwrap();
            assert!((row.apply_fn(&g, |x| x[0] * x[0]) + 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn no_diffusion_no_drift() {
        let g = line(17);
        let p = constant(1, Sigma::scalar(0.0), [0.0; 2], 0.7, 0.3);
        let row = assemble_sl(&p, &g, 0.0, 0, 5, &SLConfig::new(0.5)).unwrap();
        assert!(row.entries.is_empty());
        assert_eq!(row.center_weight, -0.7);
        assert_eq!(row.apply(&[2.0; 17]), -0.7 * 2.0 - 0.3);
    }

    #[test]
    fn truncated_leg_is_exact_on_quadratics() {
        // node at 3 dx, leg 10 dx: delta- = 0.3 leg, delta+ = leg
        let g = line(33);
        let dx: f64 = 1.0 / 32.0;
        let sigma = 10.0 * dx.sqrt();
        let p = constant(1, Sigma::scalar(sigma), [0.0; 2], 0.0, 0.0);
        let row = assemble_sl(&p, &g, 0.0, 0, 3, &SLConfig::new(1.0)).unwrap();
        let boundary: Vec<_> = row
            .entries
            .iter()
            .filter_map(|e| match e.0 {
                Target::Boundary { x, .. } => Some((x[0], e.1)),
                _ => None,
            })
            .collect();
        assert_eq!(boundary.len(), 1);
        assert_eq!(boundary[0].0, 0.0);
        let (dp, dm) = (10.0 * dx, 3.0 * dx);
        let coef = 0.5 * sigma * sigma;
        assert!((boundary[0].1 - coef * 2.0 / (dm * (dp + dm))).abs() < 1e-9);
        assert!((row.center_weight - coef * 2.0 / (dp * dm)).abs() < 1e-9);
        let exact = -coef * 2.0;
        assert!((row.apply_fn(&g, |x| x[0] * x[0]) - exact).abs() < 1e-10);
    }

    #[test]
    fn constants_and_affine() {
        let p = constant(1, Sigma::scalar(1.3), [0.8, 0.0], 0.4, -0.2);
        for n in [17usize, 33] {
            let g = line(n);
            for node in g.interior_nodes() {
                let row = assemble_sl(&p, &g, 0.0, 0, node, &SLConfig::new(0.0)).unwrap();
                assert!((row.apply_fn(&g, |_| 1.0) - (-0.4 + 0.2)).abs() < 1e-12);
                // b.D phi exact for affine phi: truncated legs stay on the line
                let x = g.point(node)[0];
                let v = row.apply_fn(&g, |y| 2.0 * y[0] + 1.0);
                assert!((v - (-0.8 * 2.0 - 0.4 * (2.0 * x + 1.0) + 0.2)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn two_dimensional_rows_are_positive() {
        let p = builtin_problem("manufactured-2d").unwrap();
        let g = p.grid(17, 1.0, 1).unwrap();
        let rows = assemble_level(&p, &g, 0.3, &Scheme::Sl(SLConfig::new(1.0))).unwrap();
        for r in &rows.rows {
            let rep = check_positive_type(r, 0.0, 1.0);
            assert!(rep.pass && rep.min_weight > 0.0);
        }
        // tr[a D^2] of x^2 + y^2 + x y: a11 2 + 2 a12 + a22 2
        let row = &rows.rows[0][rows.rows[0].len() / 2];
        let v = row.apply_fn(&g, |x| x[0] * x[0] + x[1] * x[1] + x[0] * x[1]);
        let x = g.point(row.center);
        let phi = x[0] * x[0] + x[1] * x[1] + x[0] * x[1];
        let l = (p.running_cost)(1.0, 0.3, x);
        let expected = -(2.0 * 0.5 + 2.0 * 0.15 + 2.0 * 0.5) - l;
        // interpolation of a quadratic costs O(dx^2 / h) = O(dx)
        assert!((v - expected).abs() < 0.2, "{v} vs {expected} ({phi})");
    }

    fn truncation_orders() -> (f64, f64) {
        let sigma = 2f64.sqrt();
        let p = constant(1, Sigma::scalar(sigma), [0.0; 2], 0.0, 0.0);
        let phi = |x: Point| (3.0 * x[0]).sin();
        let lap = |x: f64| -9.0 * (3.0 * x).sin();
        let mut inner = Vec::new();
        let mut outer = Vec::new();
        let ladder = [32usize, 64, 128, 256];
        for &n in &ladder {
            let g = line(n + 1);
            let kappa = (g.dx_min()).sqrt() * sigma;
            let (mut ei, mut eo): (f64, f64) = (0.0, 0.0);
            for node in g.interior_nodes() {
                let x = g.point(node);
                let row = assemble_sl(&p, &g, 0.0, 0, node, &SLConfig::new(1.0)).unwrap();
                let err = (row.apply_fn(&g, phi) + lap(x[0])).abs();
                if g.distance_to_boundary(x).unwrap() > kappa {
                    ei = ei.max(err);
                } else {
                    eo = eo.max(err);
                }
            }
            inner.push(ei);
            outer.push(eo);
        }
        let slope = |e: &[f64]| (e[0] / e[3]).ln() / 8f64.ln();
        (slope(&inner), slope(&outer))
    }

    #[test]
    fn consistency_orders() {
        let (inner, outer) = truncation_orders();
        assert!(inner >= 0.9, "interior order {inner}");
        assert!(outer >= 0.4, "near-boundary order {outer}");
    }

    #[test]
    fn cfl_scales_like_dx_three_halves() {
        let p = builtin_problem("manufactured-1d").unwrap();
        let mut pts = Vec::new();
        for n in [32usize, 64, 128, 256] {
            let g = p.grid(n + 1, 1.0, 4).unwrap();
            let b = cfl_bound(&p, &g, &SLConfig::new(0.0)).unwrap();
            let half = cfl_bound(&p, &g, &SLConfig::new(0.5)).unwrap();
            assert!((half - 2.0 * b).abs() <= 1e-12 * b);
            pts.push(((1.0 / n as f64).ln(), b.ln()));
        }
        let slope = (pts[3].1 - pts[0].1) / (pts[3].0 - pts[0].0);
        assert!((1.4..=1.6).contains(&slope), "exponent {slope}");
        let g = p.grid(33, 1.0, 4).unwrap();
        assert_eq!(cfl_bound(&p, &g, &SLConfig::new(1.0)).unwrap(), f64::INFINITY);
        let b = cfl_bound(&p, &g, &SLConfig::new(0.0)).unwrap();
        let rows = assemble_level(&p, &g, 0.0, &Scheme::Sl(SLConfig::new(0.0))).unwrap();
        let all: Vec<StencilRow> = rows.rows.concat();
        assert!(check_positive_type(&all, b, 0.0).pass);
        assert!(!check_positive_type(&all, b * (1.0 + 1e-9), 0.0).pass);
    }

    #[test]
    fn error_model() {
        let e = consistency_error_model(1e-3, 1e-2, 0.1, 1.0, 1.0, 1.0).unwrap();
        assert!((e - 11.1).abs() < 1e-9);
        let half = consistency_error_model(1e-3, 1e-2, 0.1, 0.5, 1.0, 1.0).unwrap();
        assert!((half - 10.1).abs() < 1e-9);
        let (w1, w2, w3) = (1e-3 * 1e3, 1e-6 * 1e5, 1e-2 * 1e3);
        let doubled = consistency_error_model(1e-3, 1e-2, 0.2, 1.0, 1.0, 1.0).unwrap();
        assert!((doubled / e - (w1 / 8.0 + w2 / 32.0 + w3 / 8.0) / (w1 + w2 + w3)).abs() < 1e-12);
        assert!(consistency_error_model(0.0, 1e-2, 0.1, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn rejects_boundary_nodes_and_bad_theta() {
        let p = builtin_problem("manufactured-1d").unwrap();
        let g = p.grid(9, 1.0, 1).unwrap();
        assert!(matches!(assemble_sl(&p, &g, 0.0, 0, 8, &SLConfig::new(1.0)), Err(Error::NotInterior(8))));
        assert!(cfl_bound(&p, &g, &SLConfig::new(1.5)).is_err());
    }
}
