//! Sensitivity of the discrete solution to constant shifts of each
//! coefficient.

use rayon::prelude::*;
use serde::Serialize;

use super::fit::log_slope;
use super::report::{Report, Table};
use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::problem::{ControlProblem, Perturbation};
use crate::scheme::{Scheme, SchemeKind};
use crate::solver::{solve, Solution, SolverConfig};

pub const EXPONENT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Sigma,
    Drift,
    Discount,
    RunningCost,
}

impl Field {
    pub const ALL: [Field; 4] = [Field::Sigma, Field::Drift, Field::Discount, Field::RunningCost];

    pub fn perturbation(self, delta: f64) -> Perturbation {
        let mut d = Perturbation::default();
        match self {
            Field::Sigma => d.sigma = delta,
            Field::Drift => d.drift = delta,
            Field::Discount => d.discount = delta,
            Field::RunningCost => d.running_cost = delta,
        }
        d
    }

    /// Smallest acceptable exponent of `sup |u_h - u_h'|` in `delta`:
    /// square-root for the diffusion, linear for the others.
    pub fn required_exponent(self) -> f64 {
        match self {
            Field::Sigma => 0.5 - EXPONENT_TOLERANCE,
            _ => 1.0 - EXPONENT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceSeries {
    pub field: Field,
    pub deltas: Vec<f64>,
    pub differences: Vec<f64>,
    pub fitted_exponent: Option<f64>,
    pub required_exponent: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceReport {
    pub problem: String,
    pub scheme: SchemeKind,
    pub theta: f64,
    pub series: Vec<DependenceSeries>,
    pub pass: bool,
}

impl Report for DependenceReport {
    const KIND: &'static str = "dependence";

    fn passed(&self) -> bool {
        self.pass
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["delta", "sigma", "drift", "discount", "running_cost"]);
        if let Some(first) = self.series.first() {
            for (i, d) in first.deltas.iter().enumerate() {
                let mut row = vec![Some(*d)];
                for f in Field::ALL {
                    row.push(self.series.iter().find(|s| s.field == f).map(|s| s.differences[i]));
                }
                t.push(row);
            }
        }
        t
    }
}

/// `max |u - v|` over all levels and nodes.
pub fn sup_difference(u: &Solution, v: &Solution) -> f64 {
    u.levels
        .iter()
        .zip(&v.levels)
        .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

pub fn continuous_dependence_probe(
    p: &ControlProblem,
    kind: SchemeKind,
    theta: f64,
    grid: &SpaceTimeGrid,
    deltas: &[f64],
) -> Result<DependenceReport> {
    if deltas.len() < 2 || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidArgument("need at least two positive perturbation sizes".into()));
    }
    let scheme = Scheme::from_kind(kind, theta);
    let cfg = SolverConfig::with_theta(theta);
    let base = solve(p, scheme, grid, cfg)?;
    let series = Field::ALL
        .iter()
        .map(|&field| {
            let differences: Vec<f64> = deltas
                .par_iter()
                .map(|&d| {
                    let q = p.perturbed(field.perturbation(d));
                    Ok(sup_difference(&base, &solve(&q, scheme, grid, cfg)?))
                })
                .collect::<Result<_>>()?;
            let fitted_exponent = log_slope(deltas, &differences);
            let required = field.required_exponent();
            // a field the solution does not depend on passes trivially
            let inert = differences.iter().all(|d| *d <= 1e-13);
            Ok(DependenceSeries {
                field,
                deltas: deltas.to_vec(),
                differences,
                fitted_exponent,
                required_exponent: required,
                pass: inert || fitted_exponent.is_some_and(|e| e >= required),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DependenceReport {
        problem: p.name.clone(),
        scheme: kind,
        theta,
        pass: series.iter().all(|s| s.pass),
        series,
    })
}
