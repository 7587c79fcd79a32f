//! Truncation error of the scheme on eps-scaled test functions, fitted to
//! the three-term model `A dt/eps^3 + B dt^2/eps^5 + C dx/eps^3`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use super::fit::nnls;
use super::report::{Report, Table};
use crate::error::{Error, Result};
use crate::grid::{Point, SpaceTimeGrid};
use crate::problem::ControlProblem;
use crate::scheme::{assemble_level, Scheme, SchemeKind};

pub const RESIDUAL_LIMIT: f64 = 0.15;
pub const THETA_TERM_SHARE_LIMIT: f64 = 0.01;
/// Kink speed in `z = e.(x - x0) - v (t - t0) / eps`.
pub const KINK_SPEED: f64 = 1.0;
pub const FEATURES: [&str; 3] = ["dt/eps^3", "dt^2/eps^5", "dx/eps^3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFamily {
    /// `|z|` convolved with a Gaussian of width `eps`, travelling in time.
    Kink,
    /// `exp(-t) prod sin(pi x_i)`, independent of `eps`.
    Smooth,
}

/// Value, time derivative, gradient and Hessian of a test function.
struct Jet {
    v: f64,
    t: f64,
    q: Point,
    h: [[f64; 2]; 2],
}

struct TestFunction {
    family: TestFamily,
    eps: f64,
    dim: usize,
    x0: Point,
    t0: f64,
    e: Point,
}

impl TestFunction {
    fn z(&self, t: f64, x: Point) -> f64 {
        let mut z = -KINK_SPEED * (t - self.t0) / self.eps;
        for i in 0..self.dim {
            z += self.e[i] * (x[i] - self.x0[i]);
        }
        z
    }

    fn value(&self, t: f64, x: Point) -> f64 {
        match self.family {
            TestFamily::Kink => {
                let (z, e) = (self.z(t, x), self.eps);
                e * (2.0 / PI).sqrt() * (-z * z / (2.0 * e * e)).exp() + z * erf(z / (e * SQRT_2))
            }
            TestFamily::Smooth => (-t).exp() * (0..self.dim).map(|i| (PI * x[i]).sin()).product::<f64>(),
        }
    }

    fn jet(&self, t: f64, x: Point) -> Jet {
        let v = self.value(t, x);
        match self.family {
            TestFamily::Kink => {
                let (z, e) = (self.z(t, x), self.eps);
                let k1 = erf(z / (e * SQRT_2));
                let k2 = (2.0 / PI).sqrt() / e * (-z * z / (2.0 * e * e)).exp();
                let mut q = [0.0; 2];
                let mut h = [[0.0; 2]; 2];
                for i in 0..self.dim {
                    q[i] = k1 * self.e[i];
                    for j in 0..self.dim {
                        h[i][j] = k2 * self.e[i] * self.e[j];
                    }
                }
                Jet {
                    v,
                    t: -KINK_SPEED / e * k1,
                    q,
                    h,
                }
            }
            TestFamily::Smooth => {
                let s: Vec<f64> = (0..self.dim).map(|i| (PI * x[i]).sin()).collect();
                let c: Vec<f64> = (0..self.dim).map(|i| (PI * x[i]).cos()).collect();
                let et = (-t).exp();
                let mut q = [0.0; 2];
                let mut h = [[0.0; 2]; 2];
                for i in 0..self.dim {
                    let others: f64 = (0..self.dim).filter(|&k| k != i).map(|k| s[k]).product();
                    q[i] = et * PI * c[i] * others;
                    h[i][i] = -PI * PI * v;
                    for j in 0..self.dim {
                        if j != i {
                            let rest: f64 = (0..self.dim).filter(|&k| k != i && k != j).map(|k| s[k]).product();
                            h[i][j] = et * PI * PI * c[i] * c[j] * rest;
                        }
                    }
                }
                Jet { v, t: -v, q, h }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencySample {
    pub eps: f64,
    pub dt: f64,
    /// Max over interior nodes at distance `> eps` from the boundary.
    pub truncation: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub problem: String,
    pub scheme: SchemeKind,
    pub theta: f64,
    pub family: TestFamily,
    pub dx: f64,
    pub samples: Vec<ConsistencySample>,
    pub features: [&'static str; 3],
    pub coefficients: Vec<f64>,
    pub relative_residual: f64,
    /// Coefficient of the first-order time term over the largest one.
    pub theta_term_share: f64,
    /// Largest `T(eps / 2) / T(eps)` at fixed `dt`.
    pub max_halving_growth: f64,
    pub pass: bool,
}

impl Report for ConsistencyReport {
    const KIND: &'static str = "consistency";

    fn passed(&self) -> bool {
        self.pass
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["eps", "dt", "dx", "truncation", "model"]);
        for s in &self.samples {
            let f = features(s.eps, s.dt, self.dx);
            let model: f64 = f.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum();
            t.push(vec![Some(s.eps), Some(s.dt), Some(self.dx), Some(s.truncation), Some(model)]);
        }
        t
    }
}

fn features(eps: f64, dt: f64, dx: f64) -> [f64; 3] {
    [dt / eps.powi(3), dt * dt / eps.powi(5), dx / eps.powi(3)]
}

/// Max `|phi_t + F(phi) - S(phi)|` over interior nodes in `Omega^eps` for
/// one step of length `dt`, with the continuous terms taken at
/// `t_{n-1} + theta dt`.
pub fn truncation_error(
    p: &ControlProblem,
    scheme: Scheme,
    theta: f64,
    nodes: usize,
    dt: f64,
    eps: f64,
    family: TestFamily,
) -> Result<(f64, usize)> {
    let grid = p.grid(nodes, dt, 1)?;
    let t_theta = theta * dt;
    let mut x0 = [0.0; 2];
    let mut e = [0.0; 2];
    for i in 0..p.dim {
        x0[i] = 0.5 * (p.lower[i] + p.upper[i]);
        e[i] = 1.0 / (p.dim as f64).sqrt();
    }
    let phi = TestFunction {
        family,
        eps,
        dim: p.dim,
        x0,
        t0: t_theta,
        e,
    };
    let before = assemble_level(p, &grid, 0.0, &scheme)?;
    let after = assemble_level(p, &grid, dt, &scheme)?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (m, j) in grid.interior_nodes().into_iter().enumerate() {
        let x = grid.point(j);
        if grid.distance_to_boundary(x)? <= eps {
            continue;
        }
        count += 1;
        let (p0, p1) = (phi.value(0.0, x), phi.value(dt, x));
        let mut s = f64::NEG_INFINITY;
        for k in 0..p.n_controls() {
            let l1 = after.rows[k][m].apply_fn(&grid, |y| phi.value(dt, y));
            let l0 = before.rows[k][m].apply_fn(&grid, |y| phi.value(0.0, y));
            s = s.max((p1 - p0) / dt + theta * l1 + (1.0 - theta) * l0);
        }
        let jet = phi.jet(t_theta, x);
        let f = p.hamiltonian(t_theta, x, jet.v, jet.q, jet.h).0;
        worst = worst.max((jet.t + f - s).abs());
    }
    Ok((worst, count))
}

/// Truncation errors on the `eps` x `dt` ladder and the nonnegative fit of
/// the model terms. Each `dt` is a multiple of `dx`.
pub fn consistency_probe(
    p: &ControlProblem,
    kind: SchemeKind,
    theta: f64,
    nodes: usize,
    eps_ladder: &[f64],
    dt_factors: &[f64],
    family: TestFamily,
) -> Result<ConsistencyReport> {
    if eps_ladder.is_empty() || dt_factors.is_empty() {
        return Err(Error::InvalidArgument("eps and dt ladders must be nonempty".into()));
    }
    let probe_grid: SpaceTimeGrid = p.grid(nodes, 1.0, 1)?;
    let (dx, dx_max) = (probe_grid.dx_min(), probe_grid.dx_max());
    if let Some(e) = eps_ladder.iter().find(|&&e| !(e >= 2.0 * dx_max)) {
        return Err(Error::Precondition(format!("eps = {e} is below twice the mesh width {dx_max}")));
    }
    if dt_factors.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::InvalidArgument("dt factors must be positive".into()));
    }
    let scheme = Scheme::from_kind(kind, theta);
    let mut samples = Vec::new();
    for &eps in eps_ladder {
        for &f in dt_factors {
            let dt = f * dx;
            let (truncation, count) = truncation_error(p, scheme, theta, nodes, dt, eps, family)?;
            if count == 0 {
                return Err(Error::Precondition(format!("no interior nodes farther than eps = {eps} from the boundary")));
            }
            samples.push(ConsistencySample {
                eps,
                dt,
                truncation,
                nodes: count,
            });
        }
    }
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|i| samples.iter().map(|s| features(s.eps, s.dt, dx)[i]).collect())
        .collect();
    let y: Vec<f64> = samples.iter().map(|s| s.truncation).collect();
    let fit = nnls(&cols, &y)?;
    let cmax = fit.coefficients.iter().cloned().fold(0.0, f64::max);
    let share = if cmax > 0.0 { fit.coefficients[0] / cmax } else { 0.0 };
    let mut growth: f64 = 0.0;
    for a in &samples {
        for b in &samples {
            if b.dt == a.dt && (b.eps - 0.5 * a.eps).abs() < 1e-12 * a.eps && a.truncation > 0.0 {
                growth = growth.max(b.truncation / a.truncation);
            }
        }
    }
    let pass = fit.relative_residual <= RESIDUAL_LIMIT
        && (theta != 0.5 || share <= THETA_TERM_SHARE_LIMIT)
        && growth <= 32.0;
    Ok(ConsistencyReport {
        problem: p.name.clone(),
        scheme: kind,
        theta,
        family,
        dx,
        samples,
        features: FEATURES,
        coefficients: fit.coefficients,
        relative_residual: fit.relative_residual,
        theta_term_share: share,
        max_halving_growth: growth,
        pass,
    })
}
