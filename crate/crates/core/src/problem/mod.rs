//! HJB problem data: coefficient fields over a finite control set, initial
//! and boundary data, and an optional barrier function.
//!
//! The equation is `u_t + sup_a L^a(t, x, u, Du, D^2u) = 0` with
//! `L^a(t, x, r, q, X) = -tr[a X] - b.q - c r - l` and `a = sigma sigma^T / 2`.

pub mod audit;
pub mod builtin;
pub mod config;
pub mod expr;
pub mod smoothing;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Point, SpaceTimeGrid};

pub use audit::{audit_a1, audit_a2, audit_a3, AuditReport, Witness};
pub use builtin::builtin_problem;
pub use smoothing::{smooth_initial_data, SmoothedInitialData, SmoothingReport};

/// A `d x P` diffusion factor with `d, P <= 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sigma {
    pub rows: usize,
    pub cols: usize,
    pub data: [[f64; 2]; 2],
}

impl Sigma {
    pub fn scalar(s: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: [[s, 0.0], [0.0, 0.0]],
        }
    }

    pub fn zero(rows: usize) -> Self {
        Self {
            rows,
            cols: rows,
            data: [[0.0; 2]; 2],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if !(1..=2).contains(&d) {
            return Err(Error::DimensionMismatch(format!("sigma has {d} rows")));
        }
        let p = rows[0].len();
        if !(1..=2).contains(&p) || rows.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch(
                "sigma rows must all have 1 or 2 columns".into(),
            ));
        }
        let mut data = [[0.0; 2]; 2];
        for (i, r) in rows.iter().enumerate() {
            data[i][..p].copy_from_slice(r);
        }
        Ok(Self { rows: d, cols: p, data })
    }

    pub fn column(&self, j: usize) -> Point {
        [self.data[0][j], self.data[1][j]]
    }

    /// `a = sigma sigma^T / 2`.
    pub fn diffusion(&self) -> [[f64; 2]; 2] {
        let mut a = [[0.0; 2]; 2];
        for i in 0..2 {
            for k in 0..2 {
                a[i][k] = 0.5 * (0..self.cols).map(|j| self.data[i][j] * self.data[k][j]).sum::<f64>();
            }
        }
        a
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite())
    }
}

/// Barrier value and derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BarrierValue {
    pub value: f64,
    pub grad: Point,
    pub hess: [[f64; 2]; 2],
    pub time_derivative: f64,
}

pub type ScalarField = Arc<dyn Fn(f64, f64, Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(f64, f64, Point) -> Point + Send + Sync>;
pub type SigmaField = Arc<dyn Fn(f64, f64, Point) -> Sigma + Send + Sync>;
pub type SpaceField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type SpaceTimeField = Arc<dyn Fn(f64, Point) -> f64 + Send + Sync>;
pub type BarrierField = Arc<dyn Fn(f64, Point) -> BarrierValue + Send + Sync>;

/// Coefficient fields are evaluated as `field(alpha, t, x)`.
#[derive(Clone)]
pub struct ControlProblem {
    pub name: String,
    pub dim: usize,
    pub lower: Point,
    pub upper: Point,
    pub controls: Vec<f64>,
    pub sigma: SigmaField,
    pub drift: VectorField,
    pub discount: ScalarField,
    pub running_cost: ScalarField,
    pub psi0: SpaceField,
    pub psi1: SpaceTimeField,
    pub barrier: Option<BarrierField>,
    pub exact_solution: Option<SpaceTimeField>,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lower", &&self.lower[..self.dim])
            .field("upper", &&self.upper[..self.dim])
            .field("controls", &self.controls)
            .field("barrier", &self.barrier.is_some())
            .field("exact_solution", &self.exact_solution.is_some())
            .finish()
    }
}

/// Additive perturbation of the coefficients, used by continuous-dependence
/// probes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Perturbation {
    pub sigma: f64,
    pub drift: f64,
    pub discount: f64,
    pub running_cost: f64,
}

impl ControlProblem {
    pub fn validate(&self) -> Result<()> {
        if self.controls.is_empty() {
            return Err(Error::InvalidArgument("control set is empty".into()));
        }
        if !(1..=2).contains(&self.dim) {
            return Err(Error::UnsupportedDimension(self.dim));
        }
        Ok(())
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    /// Grid on the problem's domain with `nodes` per axis and `n_steps` time
    /// steps up to `t_final`.
    pub fn grid(&self, nodes: usize, t_final: f64, n_steps: usize) -> Result<SpaceTimeGrid> {
        let n = vec![nodes; self.dim];
        SpaceTimeGrid::with_final_time(
            &self.lower[..self.dim],
            &self.upper[..self.dim],
            &n,
            t_final,
            n_steps,
        )
    }

    pub fn check_grid(&self, grid: &SpaceTimeGrid) -> Result<()> {
        if grid.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "problem is {}-dimensional, grid is {}-dimensional",
                self.dim,
                grid.dim()
            )));
        }
        for a in 0..self.dim {
            let tol = 1e-12 * (self.upper[a] - self.lower[a]).abs().max(1.0);
            if (grid.lower()[a] - self.lower[a]).abs() > tol || (grid.upper()[a] - self.upper[a]).abs() > tol {
                return Err(Error::DimensionMismatch(format!(
                    "grid box does not match the problem domain on axis {a}"
                )));
            }
        }
        Ok(())
    }

    pub fn diffusion(&self, alpha: f64, t: f64, x: Point) -> [[f64; 2]; 2] {
        (self.sigma)(alpha, t, x).diffusion()
    }

    /// `L^a(t, x, r, q, X)` for control index `k`.
    pub fn operator(&self, k: usize, t: f64, x: Point, r: f64, q: Point, hess: [[f64; 2]; 2]) -> f64 {
        let alpha = self.controls[k];
        let a = self.diffusion(alpha, t, x);
        let b = (self.drift)(alpha, t, x);
        let d = self.dim;
        let mut tr = 0.0;
        let mut bq = 0.0;
        for i in 0..d {
            bq += b[i] * q[i];
            for j in 0..d {
                tr += a[i][j] * hess[j][i];
            }
        }
        -tr - bq - (self.discount)(alpha, t, x) * r - (self.running_cost)(alpha, t, x)
    }

    /// `F = sup_a L^a`, with the lowest index winning ties.
    pub fn hamiltonian(&self, t: f64, x: Point, r: f64, q: Point, hess: [[f64; 2]; 2]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for k in 0..self.n_controls() {
            let v = self.operator(k, t, x, r, q, hess);
            if v > best.0 {
                best = (v, k);
            }
        }
        best
    }

    /// `-zeta_t + b.Dzeta + tr[a D^2 zeta] + c zeta` for control index `k`.
    pub fn barrier_generator(&self, k: usize, t: f64, x: Point) -> Result<f64> {
        let barrier = self.barrier.as_ref().ok_or(Error::MissingBarrier)?;
        let z = barrier(t, x);
        let alpha = self.controls[k];
        let a = self.diffusion(alpha, t, x);
        let b = (self.drift)(alpha, t, x);
        let c = (self.discount)(alpha, t, x);
        let d = self.dim;
        let mut v = -z.time_derivative + c * z.value;
        for i in 0..d {
            v += b[i] * z.grad[i];
            for j in 0..d {
                v += a[i][j] * z.hess[j][i];
            }
        }
        Ok(v)
    }

    /// Restriction to a subset of the controls (by index).
    pub fn with_controls(&self, indices: &[usize]) -> Result<ControlProblem> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("control subset is empty".into()));
        }
        let mut p = self.clone();
        p.controls = indices
            .iter()
            .map(|&i| {
                self.controls
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::InvalidArgument(format!("control index {i} out of range")))
            })
            .collect::<Result<_>>()?;
        Ok(p)
    }

    /// Copy with every coefficient shifted by a constant.
    pub fn perturbed(&self, delta: Perturbation) -> ControlProblem {
        let mut p = self.clone();
        if delta.sigma != 0.0 {
            let f = self.sigma.clone();
            p.sigma = Arc::new(move |a, t, x| {
                let mut s = f(a, t, x);
                for i in 0..s.rows {
                    for j in 0..s.cols {
                        s.data[i][j] += delta.sigma;
                    }
                }
                s
            });
        }
        if delta.drift != 0.0 {
            let f = self.drift.clone();
            let d = self.dim;
            p.drift = Arc::new(move |a, t, x| {
                let mut b = f(a, t, x);
                for v in b.iter_mut().take(d) {
                    *v += delta.drift;
                }
                b
            });
        }
        if delta.discount != 0.0 {
            let f = self.discount.clone();
            p.discount = Arc::new(move |a, t, x| f(a, t, x) + delta.discount);
        }
        if delta.running_cost != 0.0 {
            let f = self.running_cost.clone();
            p.running_cost = Arc::new(move |a, t, x| f(a, t, x) + delta.running_cost);
        }
        p.exact_solution = None;
        p
    }
}
