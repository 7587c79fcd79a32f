//! Lipschitz-preserving smoothing of the initial data that keeps the
//! compatibility with the boundary data.
//!
//! With `g = Psi0 - Psi1(0, .)` the data are first clipped towards zero by
//! `tau = 2 C1 |zeta|_1 eps`, which makes them vanish within distance `2 eps`
//! of the boundary, then extended by zero and mollified with a bump of radius
//! `eps`. The result differs from `Psi1(0, .)` only where `d(x) > eps`.

use std::sync::Arc;

use serde::Serialize;

use super::audit::{barrier_norm, compatibility_constant, FineMesh};
use super::{ControlProblem, SpaceField, SpaceTimeField};
use crate::error::{Error, Result};
use crate::grid::{Point, SpaceTimeGrid};

/// Midpoints per axis of the mollifier quadrature.
pub const QUADRATURE_POINTS: usize = 32;

#[derive(Debug, Clone, Serialize)]
pub struct SmoothingReport {
    pub eps: f64,
    pub threshold: f64,
    pub c1: f64,
    pub zeta_norm: f64,
    pub sup_error: f64,
    pub lipschitz: f64,
    pub lipschitz_psi0: f64,
    pub sample_count: usize,
}

/// `Psi_eps` as an evaluator.
#[derive(Clone)]
pub struct SmoothedInitialData {
    psi0: SpaceField,
    psi1: SpaceTimeField,
    dim: usize,
    lower: Point,
    upper: Point,
    eps: f64,
    threshold: f64,
    nodes: Vec<(Point, f64)>,
}

impl std::fmt::Debug for SmoothedInitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothedInitialData")
            .field("eps", &self.eps)
            .field("threshold", &self.threshold)
            .field("quadrature_nodes", &self.nodes.len())
            .finish()
    }
}

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// Midpoint rule for the unit bump on the unit ball, normalized to unit
/// discrete mass.
fn mollifier_nodes(dim: usize) -> Vec<(Point, f64)> {
    let h = 2.0 / QUADRATURE_POINTS as f64;
    let mid = |i: usize| -1.0 + (i as f64 + 0.5) * h;
    let mut nodes = Vec::new();
    let ny = if dim == 2 { QUADRATURE_POINTS } else { 1 };
    for j in 0..ny {
        for i in 0..QUADRATURE_POINTS {
            let y = [mid(i), if dim == 2 { mid(j) } else { 0.0 }];
            let w = bump(y[0] * y[0] + y[1] * y[1]);
            if w > 0.0 {
                nodes.push((y, w));
            }
        }
    }
    let mass: f64 = nodes.iter().map(|n| n.1).sum();
    for n in &mut nodes {
        n.1 /= mass;
    }
    nodes
}

impl SmoothedInitialData {
    fn clipped(&self, x: Point) -> f64 {
        let inside = (0..self.dim).all(|a| x[a] > self.lower[a] && x[a] < self.upper[a]);
        if !inside {
            return 0.0;
        }
        let g = (self.psi0)(x) - (self.psi1)(0.0, x);
        g.signum() * (g.abs() - self.threshold).max(0.0)
    }

    pub fn value(&self, x: Point) -> f64 {
        let conv: f64 = self
            .nodes
            .iter()
            .map(|(y, w)| w * self.clipped([x[0] - self.eps * y[0], x[1] - self.eps * y[1]]))
            .sum();
        (self.psi1)(0.0, x) + conv
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn into_field(self) -> SpaceField {
        Arc::new(move |x| self.value(x))
    }
}

/// Builds `Psi_eps` and measures `|Psi0 - Psi_eps|` and `Lip(Psi_eps)` on a
/// 4x refinement of the grid.
pub fn smooth_initial_data(
    p: &ControlProblem,
    grid: &SpaceTimeGrid,
    eps: f64,
) -> Result<(SmoothedInitialData, SmoothingReport)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps} is outside (0, 1)")));
    }
    if p.barrier.is_none() {
        return Err(Error::MissingBarrier);
    }
    p.check_grid(grid)?;
    let factor = FineMesh::factor_for(grid, 4);
    let c1 = compatibility_constant(p, grid, factor)?.sampled_max;
    let zeta_norm = barrier_norm(p, grid)?;
    let threshold = 2.0 * c1 * zeta_norm * eps;

    let smoothed = SmoothedInitialData {
        psi0: p.psi0.clone(),
        psi1: p.psi1.clone(),
        dim: p.dim,
        lower: p.lower,
        upper: p.upper,
        eps,
        threshold,
        nodes: mollifier_nodes(p.dim),
    };

    let mesh = FineMesh::new(grid, factor);
    let smooth_vals: Vec<f64> = (0..mesh.len()).map(|k| smoothed.value(mesh.point(k))).collect();
    let psi0_vals: Vec<f64> = (0..mesh.len()).map(|k| (p.psi0)(mesh.point(k))).collect();
    let sup_error = smooth_vals
        .iter()
        .zip(&psi0_vals)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let lip = |v: &[f64]| {
        mesh.neighbour_pairs()
            .map(|(a, b)| {
                let (xa, xb) = (mesh.point(a), mesh.point(b));
                let d = ((xa[0] - xb[0]).powi(2) + (xa[1] - xb[1]).powi(2)).sqrt();
                (v[a] - v[b]).abs() / d
            })
            .fold(0.0, f64::max)
    };
    let report = SmoothingReport {
        eps,
        threshold,
        c1,
        zeta_norm,
        sup_error,
        lipschitz: lip(&smooth_vals),
        lipschitz_psi0: lip(&psi0_vals),
        sample_count: mesh.len(),
    };
    Ok((smoothed, report))
}
