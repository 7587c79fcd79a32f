//! JSON problem configuration.
//!
//! A configuration is either `{"builtin": "<name>"}` or a full description
//! whose coefficient fields are expression strings:
//!
//! ```json
//! {
//!   "name": "heat",
//!   "dim": 1,
//!   "lower": [0.0],
//!   "upper": [1.0],
//!   "controls": [0.5, 1.0],
//!   "sigma": [["sqrt(2*alpha)"]],
//!   "drift": ["0"],
//!   "discount": "0",
//!   "running_cost": "(pi^2 - 1)*exp(-t)*sin(pi*x)",
//!   "psi0": "sin(pi*x)",
//!   "psi1": "0",
//!   "barrier": "x*(1-x)",
//!   "exact": "exp(-t)*sin(pi*x)"
//! }
//! ```
//!
//! `sigma` is a `dim x P` matrix (`P <= 2`). Barrier derivatives are taken
//! symbolically. Optional `grid` and `solver` sections carry run defaults.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::expr::{Env, Expr, Var};
use super::{builtin_problem, BarrierValue, ControlProblem, Sigma};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nodes: Option<usize>,
    pub t_final: Option<f64>,
    pub n_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub theta: Option<f64>,
    pub scheme: Option<String>,
    pub policy_tol: Option<f64>,
    pub policy_max_iters: Option<usize>,
    pub linear_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressionProblem {
    pub name: Option<String>,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub controls: Vec<f64>,
    pub sigma: Vec<Vec<String>>,
    pub drift: Option<Vec<String>>,
    pub discount: Option<String>,
    pub running_cost: Option<String>,
    pub psi0: String,
    pub psi1: String,
    pub barrier: Option<String>,
    pub exact: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Builtin { builtin: String },
    Expressions(Box<ExpressionProblem>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    #[serde(flatten)]
    pub problem: ProblemSource,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
}

impl ProblemConfig {
    pub fn from_json(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// A builtin name or the path of a JSON file.
    pub fn resolve(spec: &str) -> Result<Self> {
        if super::builtin::BUILTIN_NAMES.contains(&spec) {
            return Ok(Self {
                problem: ProblemSource::Builtin { builtin: spec.into() },
                grid: GridSection::default(),
                solver: SolverSection::default(),
            });
        }
        let path = Path::new(spec);
        if path.exists() {
            Self::from_path(path)
        } else {
            Err(Error::UnknownProblem(spec.into()))
        }
    }

    pub fn build(&self) -> Result<ControlProblem> {
        match &self.problem {
            ProblemSource::Builtin { builtin } => builtin_problem(builtin),
            ProblemSource::Expressions(e) => e.build(),
        }
    }
}

fn parse_field(src: &str, what: &str) -> Result<Expr> {
    Expr::parse(src).map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn forbid(e: &Expr, var: Var, what: &str) -> Result<()> {
    if e.depends_on(var) {
        Err(Error::Config(format!("{what} must not depend on {var:?}")))
    } else {
        Ok(())
    }
}

impl ExpressionProblem {
    pub fn build(&self) -> Result<ControlProblem> {
        let d = self.dim;
        if !(1..=2).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        if self.lower.len() != d || self.upper.len() != d {
            return Err(Error::DimensionMismatch("lower/upper length differs from dim".into()));
        }
        if self.controls.is_empty() {
            return Err(Error::Config("controls must be nonempty".into()));
        }
        if self.sigma.len() != d {
            return Err(Error::DimensionMismatch(format!("sigma needs {d} rows")));
        }
        let cols = self.sigma[0].len();
        if !(1..=2).contains(&cols) || self.sigma.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("sigma rows need 1 or 2 equal-length columns".into()));
        }
        let check_dim = |e: &Expr, what: &str| if d == 1 { forbid(e, Var::X2, what) } else { Ok(()) };

        let mut sigma_e = Vec::new();
        for (i, row) in self.sigma.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                let e = parse_field(s, &format!("sigma[{i}][{j}]"))?;
                check_dim(&e, "sigma")?;
                sigma_e.push((i, j, e));
            }
        }
        let drift_src = self.drift.clone().unwrap_or_else(|| vec!["0".into(); d]);
        if drift_src.len() != d {
            return Err(Error::DimensionMismatch(format!("drift needs {d} entries")));
        }
        let drift_e: Vec<Expr> = drift_src
            .iter()
            .map(|s| parse_field(s, "drift"))
            .collect::<Result<_>>()?;
        let discount_e = parse_field(self.discount.as_deref().unwrap_or("0"), "discount")?;
        let cost_e = parse_field(self.running_cost.as_deref().unwrap_or("0"), "running_cost")?;
        let psi0_e = parse_field(&self.psi0, "psi0")?;
        let psi1_e = parse_field(&self.psi1, "psi1")?;
        for e in drift_e.iter().chain([&discount_e, &cost_e]) {
            check_dim(e, "coefficient")?;
        }
        forbid(&psi0_e, Var::Alpha, "psi0")?;
        forbid(&psi0_e, Var::T, "psi0")?;
        forbid(&psi1_e, Var::Alpha, "psi1")?;
        check_dim(&psi0_e, "psi0")?;
        check_dim(&psi1_e, "psi1")?;

        let sigma_e = Arc::new(sigma_e);
        let drift_e = Arc::new(drift_e);
        let mut p = ControlProblem {
            name: self.name.clone().unwrap_or_else(|| "custom".into()),
            dim: d,
            lower: [self.lower[0], if d == 2 { self.lower[1] } else { 0.0 }],
            upper: [self.upper[0], if d == 2 { self.upper[1] } else { 0.0 }],
            controls: self.controls.clone(),
            sigma: Arc::new(move |a, t, x| {
                let env = Env::new(a, t, x);
                let mut s = Sigma::zero(d);
                s.cols = cols;
                for (i, j, e) in sigma_e.iter() {
                    s.data[*i][*j] = e.eval(&env);
                }
                s
            }),
            drift: Arc::new(move |a, t, x| {
                let env = Env::new(a, t, x);
                let mut b = [0.0; 2];
                for (v, e) in b.iter_mut().zip(drift_e.iter()) {
                    *v = e.eval(&env);
                }
                b
            }),
            discount: Arc::new(move |a, t, x| discount_e.eval(&Env::new(a, t, x))),
            running_cost: Arc::new(move |a, t, x| cost_e.eval(&Env::new(a, t, x))),
            psi0: Arc::new(move |x| psi0_e.eval(&Env::new(0.0, 0.0, x))),
            psi1: Arc::new(move |t, x| psi1_e.eval(&Env::new(0.0, t, x))),
            barrier: None,
            exact_solution: None,
        };
        if let Some(src) = &self.barrier {
            let z = parse_field(src, "barrier")?;
            forbid(&z, Var::Alpha, "barrier")?;
            check_dim(&z, "barrier")?;
            let gx = z.diff(Var::X1);
            let gy = z.diff(Var::X2);
            let hxx = gx.diff(Var::X1);
            let hxy = gx.diff(Var::X2);
            let hyy = gy.diff(Var::X2);
            let zt = z.diff(Var::T);
            p.barrier = Some(Arc::new(move |t, x| {
                let env = Env::new(0.0, t, x);
                let xy = hxy.eval(&env);
                BarrierValue {
                    value: z.eval(&env),
                    grad: [gx.eval(&env), gy.eval(&env)],
                    hess: [[hxx.eval(&env), xy], [xy, hyy.eval(&env)]],
                    time_derivative: zt.eval(&env),
                }
            }));
        }
        if let Some(src) = &self.exact {
            let u = parse_field(src, "exact")?;
            forbid(&u, Var::Alpha, "exact")?;
            p.exact_solution = Some(Arc::new(move |t, x| u.eval(&Env::new(0.0, t, x))));
        }
        Ok(p)
    }
}
