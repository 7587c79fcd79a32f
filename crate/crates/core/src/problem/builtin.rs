//! Benchmark problems with known structure.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{BarrierValue, ControlProblem, Sigma};
use crate::error::{Error, Result};

pub const BUILTIN_NAMES: [&str; 4] = [
    "boundary-layer",
    "manufactured-1d",
    "manufactured-2d",
    "degenerate-drift",
];

pub fn builtin_problem(name: &str) -> Result<ControlProblem> {
    match name {
        "manufactured-1d" => Ok(manufactured_1d()),
        "manufactured-2d" => Ok(manufactured_2d()),
        "boundary-layer" => Ok(boundary_layer()),
        "degenerate-drift" => Ok(degenerate_drift()),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// `u = exp(-t) sin(pi x)` on (0, 1) with diffusions `a in {1/2, 1}`;
/// the control `a = 1` is optimal wherever `u > 0`.
fn manufactured_1d() -> ControlProblem {
    ControlProblem {
        name: "manufactured-1d".into(),
        dim: 1,
        lower: [0.0, 0.0],
        upper: [1.0, 0.0],
        controls: vec![0.5, 1.0],
        sigma: Arc::new(|a, _, _| Sigma::scalar((2.0 * a).sqrt())),
        drift: Arc::new(|_, _, _| [0.0, 0.0]),
        discount: Arc::new(|_, _, _| 0.0),
        running_cost: Arc::new(|_, t, x| (PI * PI - 1.0) * (-t).exp() * (PI * x[0]).sin()),
        psi0: Arc::new(|x| (PI * x[0]).sin()),
        psi1: Arc::new(|_, _| 0.0),
        barrier: Some(Arc::new(|_, x| BarrierValue {
            value: x[0] * (1.0 - x[0]),
            grad: [1.0 - 2.0 * x[0], 0.0],
            hess: [[-2.0, 0.0], [0.0, 0.0]],
            time_derivative: 0.0,
        })),
        exact_solution: Some(Arc::new(|t, x| (-t).exp() * (PI * x[0]).sin())),
    }
}

const CROSS: f64 = 0.15;

/// `u = exp(-t) sin(pi x) sin(pi y)` on the unit square with two diagonally
/// dominant diffusions `[[1/2, +-0.15], [+-0.15, 1/2]]`. The running costs
/// are chosen so that `L^a u = u + g_a` with `max(g_1, g_2) = 0`, control 1
/// being optimal where `x <= y`.
fn manufactured_2d() -> ControlProblem {
    let off = 2.0 * CROSS;
    let diag2 = (1.0 - off * off).sqrt();
    ControlProblem {
        name: "manufactured-2d".into(),
        dim: 2,
        lower: [0.0, 0.0],
        upper: [1.0, 1.0],
        controls: vec![1.0, 2.0],
        sigma: Arc::new(move |a, _, _| {
            let s = if a < 1.5 { off } else { -off };
            Sigma {
                rows: 2,
                cols: 2,
                data: [[1.0, 0.0], [s, diag2]],
            }
        }),
        drift: Arc::new(|_, _, _| [0.0, 0.0]),
        discount: Arc::new(|_, _, _| 0.0),
        running_cost: Arc::new(|a, t, x| {
            let e = (-t).exp();
            let u = e * (PI * x[0]).sin() * (PI * x[1]).sin();
            let v = e * (PI * x[0]).cos() * (PI * x[1]).cos();
            let a12 = if a < 1.5 { CROSS } else { -CROSS };
            let s = e * (x[0] - x[1]);
            let g = if a < 1.5 { -s.max(0.0) } else { -(-s).max(0.0) };
            PI * PI * u - 2.0 * PI * PI * a12 * v - u - g
        }),
        psi0: Arc::new(|x| (PI * x[0]).sin() * (PI * x[1]).sin()),
        psi1: Arc::new(|_, _| 0.0),
        barrier: None,
        exact_solution: Some(Arc::new(|t, x| (-t).exp() * (PI * x[0]).sin() * (PI * x[1]).sin())),
    }
}

/// `u_t - x^2 (1-x)^2 u_xx / 2 + u = 0` with unit initial and boundary data.
/// The diffusion degenerates at both ends, so no barrier exists.
fn boundary_layer() -> ControlProblem {
    ControlProblem {
        name: "boundary-layer".into(),
        dim: 1,
        lower: [0.0, 0.0],
        upper: [1.0, 0.0],
        controls: vec![1.0],
        sigma: Arc::new(|_, _, x| Sigma::scalar(x[0] * (1.0 - x[0]))),
        drift: Arc::new(|_, _, _| [0.0, 0.0]),
        discount: Arc::new(|_, _, _| -1.0),
        running_cost: Arc::new(|_, _, _| 0.0),
        psi0: Arc::new(|_| 1.0),
        psi1: Arc::new(|_, _| 1.0),
        barrier: None,
        exact_solution: None,
    }
}

/// Pure transport with outward drift `b^a(x) = a (2x - 1)`, `a in {1, 2}`,
/// and unit running cost. `zeta = exp(4t) x (1-x)` is a barrier.
fn degenerate_drift() -> ControlProblem {
    ControlProblem {
        name: "degenerate-drift".into(),
        dim: 1,
        lower: [0.0, 0.0],
        upper: [1.0, 0.0],
        controls: vec![1.0, 2.0],
        sigma: Arc::new(|_, _, _| Sigma::scalar(0.0)),
        drift: Arc::new(|a, _, x| [a * (2.0 * x[0] - 1.0), 0.0]),
        discount: Arc::new(|_, _, _| 0.0),
        running_cost: Arc::new(|_, _, _| 1.0),
        psi0: Arc::new(|x| (PI * x[0]).sin()),
        psi1: Arc::new(|_, _| 0.0),
        barrier: Some(Arc::new(|t, x| {
            let e = (4.0 * t).exp();
            BarrierValue {
                value: e * x[0] * (1.0 - x[0]),
                grad: [e * (1.0 - 2.0 * x[0]), 0.0],
                hess: [[-2.0 * e, 0.0], [0.0, 0.0]],
                time_derivative: 4.0 * e * x[0] * (1.0 - x[0]),
            }
        })),
        exact_solution: None,
    }
}
