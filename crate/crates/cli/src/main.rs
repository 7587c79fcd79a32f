use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hjb_core::harness::*;
use hjb_core::problem::config::ProblemConfig;
use hjb_core::scheme::{scheme_dt_bound, Scheme, SchemeKind};
use hjb_core::solver::{solve, SolverConfig};
use hjb_core::{ControlProblem, Error};

#[derive(Parser)]
#[command(name = "hjb", version, about = "Monotone schemes for parabolic HJB equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Builtin name or path to a JSON problem file.
    #[arg(long, default_value = "manufactured-1d")]
    problem: String,
    /// `kd` or `sl`; defaults to the config value, then `sl`.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    /// Output directory for the JSON, CSV and .dat files.
    #[arg(long, default_value = "hjb-out")]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Linear,
    Parabolic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Kink,
    Smooth,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once and report per-level diagnostics.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Error ladder and fitted order.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "17,33,65,129")]
        nodes: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        t_final: f64,
        #[arg(long, value_enum, default_value = "linear")]
        dt_rule: Rule,
        #[arg(long, default_value_t = 1.0)]
        dt_coef: f64,
    },
    /// Truncation-error fit on mollified test functions.
    Consistency {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 129)]
        nodes: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1")]
        eps: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25")]
        dt_factors: Vec<f64>,
        #[arg(long, value_enum, default_value = "kink")]
        family: Family,
    },
    /// Barrier constant along a refinement ladder.
    BarrierAudit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "33,65,129")]
        nodes: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        t_final: f64,
        #[arg(long, value_enum, default_value = "linear")]
        dt_rule: Rule,
        #[arg(long, default_value_t = 1.0)]
        dt_coef: f64,
    },
    /// Switching-system gap as the switching cost decreases.
    Switching {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 65)]
        nodes: usize,
        #[arg(long, default_value_t = 0.5)]
        t_final: f64,
        #[arg(long, default_value_t = 64)]
        steps: usize,
        /// Control indices per mode, e.g. `0;1` or `0,1;1`.
        #[arg(long, default_value = "0;1")]
        modes: String,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.025")]
        k: Vec<f64>,
    },
    /// Solution sensitivity to shifted coefficients.
    Dependence {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 33)]
        nodes: usize,
        #[arg(long, default_value_t = 0.5)]
        t_final: f64,
        #[arg(long, default_value_t = 16)]
        steps: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
        deltas: Vec<f64>,
    },
    /// Explicit finite differences near a degenerate boundary.
    BoundaryLayer {
        #[arg(long, default_value_t = 0.015625)]
        dx: f64,
        #[arg(long, default_value_t = 0.99)]
        safety: f64,
        #[arg(long, default_value = "hjb-out")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::UnknownProblem(_)
            | Error::InvalidArgument(_)
            | Error::Expression(_)
            | Error::MissingBarrier
            | Error::Precondition(_)
            | Error::UnsupportedDimension(_)
            | Error::DimensionMismatch(_)
            | Error::InvalidGrid(_) => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

struct Loaded {
    config: ProblemConfig,
    problem: ControlProblem,
    kind: SchemeKind,
    theta: f64,
}

fn load(c: &Common) -> Result<Loaded, Failure> {
    let config = ProblemConfig::resolve(&c.problem).map_err(|e| Failure::Config(e.to_string()))?;
    let problem = config.build().map_err(|e| Failure::Config(e.to_string()))?;
    let scheme = c.scheme.clone().or(config.solver.scheme.clone()).unwrap_or_else(|| "sl".into());
    let kind: SchemeKind = scheme.parse().map_err(|e: Error| Failure::Config(e.to_string()))?;
    let theta = c.theta.or(config.solver.theta).unwrap_or(1.0);
    if !(0.0..=1.0).contains(&theta) {
        return Err(Failure::Config(format!("theta {theta} is outside [0, 1]")));
    }
    Ok(Loaded {
        config,
        problem,
        kind,
        theta,
    })
}

fn dt_rule(rule: Rule, c: f64) -> DtRule {
    match rule {
        Rule::Linear => DtRule::Linear(c),
        Rule::Parabolic => DtRule::Parabolic(c),
    }
}

fn parse_modes(s: &str) -> Result<Vec<Vec<usize>>, Failure> {
    s.split(';')
        .map(|m| {
            m.split(',')
                .map(|i| i.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::Config(format!("bad mode list `{s}`: {e}")))
        })
        .collect()
}

fn emit<R: Report>(out: &Path, stem: &str, report: &R, quiet: bool) -> Result<bool, Failure> {
    let paths = write_report(out, stem, report)?;
    let pass = report.passed();
    if !quiet {
        println!("{}: {}", R::KIND, if pass { "pass" } else { "FAIL" });
        for p in paths {
            println!("  wrote {}", p.display());
        }
    }
    Ok(pass)
}

#[derive(Serialize)]
struct SolveReport {
    problem: String,
    scheme: SchemeKind,
    theta: f64,
    nodes: usize,
    dt: f64,
    n_steps: usize,
    max_residual: f64,
    sup_bound_ok: bool,
    err_global: Option<f64>,
    err_interior: Option<f64>,
    /// (t, sup |U|, sup error, Howard iterations, residual) per level.
    #[serde(skip)]
    rows: Vec<Vec<Option<f64>>>,
    pass: bool,
}

impl Report for SolveReport {
    const KIND: &'static str = "solve";

    fn passed(&self) -> bool {
        self.pass
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["t", "sup_norm", "error", "howard_iterations", "residual"]);
        for r in &self.rows {
            t.push(r.clone());
        }
        t
    }
}

fn run_solve(
    c: &Common,
    nodes: Option<usize>,
    t_final: Option<f64>,
    steps: Option<usize>,
) -> Result<bool, Failure> {
    let l = load(c)?;
    let p = &l.problem;
    let nodes = nodes.or(l.config.grid.nodes).unwrap_or(33);
    let t_final = t_final.or(l.config.grid.t_final).unwrap_or(1.0);
    let scheme = Scheme::from_kind(l.kind, l.theta);
    let n_steps = match steps.or(l.config.grid.n_steps) {
        Some(n) => n,
        None => {
            // dt = dx, shortened to the explicit bound when there is one
            let probe = p.grid(nodes, t_final, 1)?;
            let bound = scheme_dt_bound(p, &probe, &scheme, l.theta)?;
            let dt = probe.dx_min().min(0.9 * bound);
            (t_final / dt - 1e-9).ceil() as usize
        }
    };
    let grid = p.grid(nodes, t_final, n_steps)?;
    let mut cfg = SolverConfig::with_theta(l.theta);
    if let Some(v) = l.config.solver.policy_tol {
        cfg.policy_tol = v;
    }
    if let Some(v) = l.config.solver.policy_max_iters {
        cfg.policy_max_iters = v;
    }
    if let Some(v) = l.config.solver.linear_tol {
        cfg.linear_tol = v;
    }
    let sol = solve(p, scheme, &grid, cfg)?;
    let errors = p
        .exact_solution
        .as_ref()
        .map(|u| sol.errors_against(u.as_ref(), convergence::INTERIOR_MARGIN));
    let rows = sol
        .levels
        .iter()
        .enumerate()
        .map(|(n, f)| {
            let t = grid.time(n);
            let err = p.exact_solution.as_ref().map(|u| {
                f.values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| (v - u(t, grid.point(j))).abs())
                    .fold(0.0, f64::max)
            });
            let step = n.checked_sub(1).and_then(|i| sol.steps.get(i));
            vec![
                Some(t),
                Some(f.sup_norm()),
                err,
                step.map(|s| s.howard_iterations as f64),
                step.map(|s| s.residual),
            ]
        })
        .collect();
    let max_residual = sol.max_residual();
    let finite = sol.levels.iter().all(|f| f.is_finite());
    let report = SolveReport {
        problem: p.name.clone(),
        scheme: l.kind,
        theta: l.theta,
        nodes,
        dt: grid.dt(),
        n_steps,
        max_residual,
        sup_bound_ok: sol.sup_bound_ok,
        err_global: errors.map(|e| e.0),
        err_interior: errors.map(|e| e.1),
        rows,
        pass: finite && sol.sup_bound_ok,
    };
    emit(&c.out, "solve", &report, c.quiet)
}

fn run(cmd: Command) -> Result<bool, Failure> {
    match cmd {
        Command::Solve {
            common,
            nodes,
            t_final,
            steps,
        } => run_solve(&common, nodes, t_final, steps),
        Command::Converge {
            common,
            nodes,
            t_final,
            dt_rule: rule,
            dt_coef,
        } => {
            let l = load(&common)?;
            let ladder = LadderSpec {
                nodes,
                t_final,
                dt_rule: dt_rule(rule, dt_coef),
            };
            let r = convergence_study(&l.problem, l.kind, l.theta, &ladder)?;
            emit(&common.out, "converge", &r, common.quiet)
        }
        Command::Consistency {
            common,
            nodes,
            eps,
            dt_factors,
            family,
        } => {
            let l = load(&common)?;
            let family = match family {
                Family::Kink => TestFamily::Kink,
                Family::Smooth => TestFamily::Smooth,
            };
            let r = consistency_probe(&l.problem, l.kind, l.theta, nodes, &eps, &dt_factors, family)?;
            emit(&common.out, "consistency", &r, common.quiet)
        }
        Command::BarrierAudit {
            common,
            nodes,
            t_final,
            dt_rule: rule,
            dt_coef,
        } => {
            let l = load(&common)?;
            let ladder = LadderSpec {
                nodes,
                t_final,
                dt_rule: dt_rule(rule, dt_coef),
            };
            let r = barrier_audit(&l.problem, l.kind, l.theta, &ladder, common.seed)?;
            emit(&common.out, "barrier_audit", &r, common.quiet)
        }
        Command::Switching {
            common,
            nodes,
            t_final,
            steps,
            modes,
            k,
        } => {
            let l = load(&common)?;
            let modes = parse_modes(&modes)?;
            let grid = l.problem.grid(nodes, t_final, steps)?;
            let r = switching_study(&l.problem, l.kind, l.theta, &grid, &modes, &k)?;
            emit(&common.out, "switching", &r, common.quiet)
        }
        Command::Dependence {
            common,
            nodes,
            t_final,
            steps,
            deltas,
        } => {
            let l = load(&common)?;
            let grid = l.problem.grid(nodes, t_final, steps)?;
            let r = continuous_dependence_probe(&l.problem, l.kind, l.theta, &grid, &deltas)?;
            emit(&common.out, "dependence", &r, common.quiet)
        }
        Command::BoundaryLayer { dx, safety, out, quiet } => {
            let r = boundary_layer_demo(dx, safety)?;
            emit(&out, "boundary_layer", &r, quiet)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(1)
        }
    }
}
