//! Sampling audits of the standing assumptions: coefficient regularity, the
//! barrier inequality and the initial/boundary compatibility condition.
//!
//! These are statistical certificates. Norms are estimated on a refinement
//! of the solver grid plus random nearby pairs, using the parabolic distance
//! `|x - y| + |t - s|^(1/2)` for Hölder quotients.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ControlProblem;
use crate::error::{Error, Result};
use crate::grid::{Point, SpaceTimeGrid};

/// Slack for inequalities that hold analytically.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Slack for sampled seminorms.
pub const SEMINORM_TOL: f64 = 1e-6;
/// Relative growth of a difference-quotient estimate under one extra
/// halving of the sampling mesh above which a field is flagged
/// non-Lipschitz.
pub const GROWTH_FACTOR: f64 = 1.2;

const MAX_FINE_NODES: usize = 70_000;
const TIME_SAMPLES: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    pub control: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub assumption: String,
    pub sampled_max: f64,
    pub sample_count: usize,
    pub pass: bool,
    pub witness: Option<Witness>,
    pub details: BTreeMap<String, f64>,
}

type Sample = [f64; 4];

fn norm(v: &Sample) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &Sample, b: &Sample) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn parabolic_distance(t: f64, x: Point, s: f64, y: Point) -> f64 {
    ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt() + (t - s).abs().sqrt()
}

/// Uniform refinement of the spatial grid by an integer factor.
#[derive(Debug, Clone)]
pub(crate) struct FineMesh {
    pub dim: usize,
    pub lower: Point,
    pub nodes: [usize; 2],
    pub h: Point,
    pub upper: Point,
}

impl FineMesh {
    pub fn new(grid: &SpaceTimeGrid, factor: usize) -> Self {
        let mut nodes = [1usize; 2];
        let mut h = [1.0; 2];
        for a in 0..grid.dim() {
            nodes[a] = (grid.nodes_per_axis()[a] - 1) * factor + 1;
            h[a] = grid.dx()[a] / factor as f64;
        }
        Self {
            dim: grid.dim(),
            lower: grid.lower(),
            upper: grid.upper(),
            nodes,
            h,
        }
    }

    /// Largest factor `<= preferred` (halving) such that the mesh refined by
    /// `2 * factor` stays within the node budget.
    pub fn factor_for(grid: &SpaceTimeGrid, preferred: usize) -> usize {
        let mut r = preferred.max(1);
        while r > 1 {
            let n: usize = (0..grid.dim())
                .map(|a| (grid.nodes_per_axis()[a] - 1) * 2 * r + 1)
                .product();
            if n <= MAX_FINE_NODES {
                break;
            }
            r /= 2;
        }
        r
    }

    pub fn len(&self) -> usize {
        self.nodes[0] * self.nodes[1]
    }

    pub fn point(&self, k: usize) -> Point {
        let i = k % self.nodes[0];
        let j = k / self.nodes[0];
        let c = |a: usize, i: usize| {
            if a >= self.dim {
                0.0
            } else if i + 1 == self.nodes[a] {
                self.upper[a]
            } else {
                self.lower[a] + i as f64 * self.h[a]
            }
        };
        [c(0, i), c(1, j)]
    }

    pub fn on_boundary(&self, k: usize) -> bool {
        let ij = [k % self.nodes[0], k / self.nodes[0]];
        (0..self.dim).any(|a| ij[a] == 0 || ij[a] + 1 == self.nodes[a])
    }

    /// Pairs of axis-neighbours `(k, k')`.
    pub fn neighbour_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let nx = self.nodes[0];
        let ny = self.nodes[1];
        let dim = self.dim;
        (0..self.len()).flat_map(move |k| {
            let i = k % nx;
            let j = k / nx;
            let right = (i + 1 < nx).then_some((k, k + 1));
            let up = (dim > 1 && j + 1 < ny).then_some((k, k + nx));
            right.into_iter().chain(up)
        })
    }
}

fn time_samples(t_final: f64) -> Vec<f64> {
    (0..TIME_SAMPLES)
        .map(|i| t_final * i as f64 / (TIME_SAMPLES - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Seminorm {
    sup: f64,
    semi: f64,
    witness: (f64, Point),
}

/// Sup norm and Hölder-1 seminorm (parabolic distance) of `f` over the fine
/// mesh at the given times.
fn grid_seminorm(mesh: &FineMesh, times: &[f64], f: &dyn Fn(f64, Point) -> Result<Sample>) -> Result<Seminorm> {
    let mut sup: f64 = 0.0;
    let mut semi: f64 = 0.0;
    let mut witness = (0.0, [0.0; 2]);
    let mut prev: Option<Vec<Sample>> = None;
    for (ti, &t) in times.iter().enumerate() {
        let vals: Vec<Sample> = (0..mesh.len()).map(|k| f(t, mesh.point(k))).collect::<Result<_>>()?;
        for (k, v) in vals.iter().enumerate() {
            sup = sup.max(norm(v));
            if let Some(p) = &prev {
                let dist = (t - times[ti - 1]).abs().sqrt();
                let q = diff_norm(v, &p[k]) / dist;
                if q > semi {
                    semi = q;
                    witness = (t, mesh.point(k));
                }
            }
        }
        for (a, b) in mesh.neighbour_pairs() {
            let (xa, xb) = (mesh.point(a), mesh.point(b));
            let q = diff_norm(&vals[a], &vals[b]) / parabolic_distance(t, xa, t, xb);
            if q > semi {
                semi = q;
                witness = (t, xa);
            }
        }
        prev = Some(vals);
    }
    Ok(Seminorm { sup, semi, witness })
}

fn random_pair_seminorm(
    grid: &SpaceTimeGrid,
    mesh: &FineMesh,
    pairs: usize,
    rng: &mut ChaCha8Rng,
    f: &dyn Fn(f64, Point) -> Result<Sample>,
) -> Result<(f64, f64)> {
    let t_final = grid.t_final();
    let (lo, hi) = (grid.lower(), grid.upper());
    let mut sup: f64 = 0.0;
    let mut semi: f64 = 0.0;
    let hmax = mesh.h[..mesh.dim].iter().copied().fold(0.0, f64::max);
    for _ in 0..pairs {
        let t = rng.gen_range(0.0..=t_final);
        let s = (t + rng.gen_range(-1.0..=1.0) * 4.0 * hmax * hmax).clamp(0.0, t_final);
        let mut x = [0.0; 2];
        let mut y = [0.0; 2];
        for a in 0..grid.dim() {
            x[a] = rng.gen_range(lo[a]..=hi[a]);
            y[a] = (x[a] + rng.gen_range(-2.0..=2.0) * mesh.h[a]).clamp(lo[a], hi[a]);
        }
        let d = parabolic_distance(t, x, s, y);
        let (fx, fy) = (f(t, x)?, f(s, y)?);
        sup = sup.max(norm(&fx)).max(norm(&fy));
        if d > 0.0 {
            semi = semi.max(diff_norm(&fx, &fy) / d);
        }
    }
    Ok((sup, semi))
}

fn finite(name: &str, v: Sample, alpha: f64, t: f64, x: Point) -> Result<Sample> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(v)
    } else {
        Err(Error::CoefficientEvaluation(format!(
            "{name} is not finite at alpha={alpha}, t={t}, x={x:?}"
        )))
    }
}

/// Estimates `[Psi0]_1 + |sigma|_1 + |b|_1 + |c|_1 + |l|_1` (suprema over
/// controls). Passes when every estimate is finite and no difference
/// quotient keeps growing under refinement.
pub fn audit_a1(p: &ControlProblem, grid: &SpaceTimeGrid, samples: usize, seed: u64) -> Result<AuditReport> {
    if samples < 2 {
        return Err(Error::InvalidArgument("audit needs at least 2 samples".into()));
    }
    p.check_grid(grid)?;
    let r = FineMesh::factor_for(grid, 4);
    let coarse = FineMesh::new(grid, r);
    let fine = FineMesh::new(grid, 2 * r);
    let times = time_samples(grid.t_final());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut details = BTreeMap::new();
    let mut pass = true;
    let mut witness = None;
    let mut count = 0usize;

    // Initial data: spatial Lipschitz constant only.
    let psi0 = |_: f64, x: Point| -> Result<Sample> { finite("psi0", [(p.psi0)(x), 0.0, 0.0, 0.0], 0.0, 0.0, x) };
    let psi_c = grid_seminorm(&coarse, &[0.0], &psi0)?;
    let psi_f = grid_seminorm(&fine, &[0.0], &psi0)?;
    count += coarse.len() + fine.len();
    details.insert("psi0_lipschitz".into(), psi_f.semi);
    if psi_f.semi > GROWTH_FACTOR * psi_c.semi + SEMINORM_TOL {
        pass = false;
        witness = Some(Witness {
            t: 0.0,
            x: psi_f.witness.1[..p.dim].to_vec(),
            control: None,
        });
    }
    let mut c0 = psi_f.semi;

    type FieldFn<'a> = Box<dyn Fn(f64, f64, Point) -> Sample + 'a>;
    let fields: Vec<(&str, FieldFn)> = vec![
        (
            "sigma",
            Box::new(|a, t, x| {
                let s = (p.sigma)(a, t, x);
                [s.data[0][0], s.data[0][1], s.data[1][0], s.data[1][1]]
            }),
        ),
        (
            "drift",
            Box::new(|a, t, x| {
                let b = (p.drift)(a, t, x);
                [b[0], b[1], 0.0, 0.0]
            }),
        ),
        ("discount", Box::new(|a, t, x| [(p.discount)(a, t, x), 0.0, 0.0, 0.0])),
        ("running_cost", Box::new(|a, t, x| [(p.running_cost)(a, t, x), 0.0, 0.0, 0.0])),
    ];

    for (name, field) in &fields {
        let mut sup: f64 = 0.0;
        let mut semi: f64 = 0.0;
        for &alpha in &p.controls {
            let f = |t: f64, x: Point| finite(name, field(alpha, t, x), alpha, t, x);
            let c = grid_seminorm(&coarse, &times, &f)?;
            let fi = grid_seminorm(&fine, &times, &f)?;
            let (rs, rq) = random_pair_seminorm(grid, &coarse, samples, &mut rng, &f)?;
            count += (coarse.len() + fine.len()) * times.len() + 2 * samples;
            sup = sup.max(c.sup).max(fi.sup).max(rs);
            semi = semi.max(fi.semi).max(rq);
            if fi.semi > GROWTH_FACTOR * c.semi + SEMINORM_TOL {
                pass = false;
                details.insert(format!("{name}_growth"), fi.semi / c.semi.max(f64::MIN_POSITIVE));
                if witness.is_none() {
                    witness = Some(Witness {
                        t: fi.witness.0,
                        x: fi.witness.1[..p.dim].to_vec(),
                        control: Some(alpha),
                    });
                }
            }
        }
        details.insert(format!("{name}_sup"), sup);
        details.insert(format!("{name}_seminorm"), semi);
        c0 += sup + semi;
    }
    details.insert("C0".into(), c0);
    Ok(AuditReport {
        assumption: "A1".into(),
        sampled_max: c0,
        sample_count: count,
        pass: pass && c0.is_finite(),
        witness,
        details,
    })
}

/// Samples `-zeta_t + b.Dzeta + tr[a D^2 zeta] + c zeta` over controls and a
/// space-time sample set; checks positivity inside and vanishing on the
/// lateral boundary.
pub fn audit_a2(p: &ControlProblem, grid: &SpaceTimeGrid, samples: usize, seed: u64) -> Result<AuditReport> {
    let barrier = p.barrier.as_ref().ok_or(Error::MissingBarrier)?;
    p.check_grid(grid)?;
    let mesh = FineMesh::new(grid, FineMesh::factor_for(grid, 4));
    let times = time_samples(grid.t_final());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut max_lhs = f64::NEG_INFINITY;
    let mut witness = None;
    let mut zeta_min = f64::INFINITY;
    let mut zeta_boundary: f64 = 0.0;
    let mut count = 0usize;

    let mut visit = |t: f64, x: Point, interior: bool| -> Result<()> {
        let z = barrier(t, x);
        if !z.value.is_finite() {
            return Err(Error::CoefficientEvaluation(format!("barrier not finite at t={t}, x={x:?}")));
        }
        if interior {
            zeta_min = zeta_min.min(z.value);
            for k in 0..p.n_controls() {
                let v = p.barrier_generator(k, t, x)?;
                if !v.is_finite() {
                    return Err(Error::CoefficientEvaluation(format!(
                        "barrier generator not finite at t={t}, x={x:?}"
                    )));
                }
                if v > max_lhs {
                    max_lhs = v;
                    witness = Some(Witness {
                        t,
                        x: x[..p.dim].to_vec(),
                        control: Some(p.controls[k]),
                    });
                }
            }
        } else if t > 0.0 {
            zeta_boundary = zeta_boundary.max(z.value.abs());
        }
        count += 1;
        Ok(())
    };

    for &t in &times {
        for k in 0..mesh.len() {
            visit(t, mesh.point(k), !mesh.on_boundary(k))?;
        }
    }
    let (lo, hi) = (grid.lower(), grid.upper());
    for _ in 0..samples {
        let t = rng.gen_range(0.0..=grid.t_final());
        let mut x = [0.0; 2];
        for a in 0..p.dim {
            // open box
            x[a] = lo[a] + (hi[a] - lo[a]) * rng.gen_range(1e-9..1.0 - 1e-9);
        }
        visit(t, x, true)?;
    }

    let mut details = BTreeMap::new();
    details.insert("zeta_min_interior".into(), zeta_min);
    details.insert("zeta_max_boundary".into(), zeta_boundary);
    let pass = max_lhs <= -1.0 + IDENTITY_TOL && zeta_min > 0.0 && zeta_boundary <= 1e-10;
    Ok(AuditReport {
        assumption: "A2".into(),
        sampled_max: max_lhs,
        sample_count: count,
        pass,
        witness,
        details,
    })
}

/// Smallest `C1` with `|Psi0 - Psi1(0, .)| <= C1 zeta(0, .)` over the
/// spatial nodes; fails where `zeta(0, .) = 0` but the data disagree.
pub fn audit_a3(p: &ControlProblem, grid: &SpaceTimeGrid) -> Result<AuditReport> {
    p.check_grid(grid)?;
    compatibility_constant(p, grid, 1)
}

pub(crate) fn compatibility_constant(p: &ControlProblem, grid: &SpaceTimeGrid, factor: usize) -> Result<AuditReport> {
    let barrier = p.barrier.as_ref().ok_or(Error::MissingBarrier)?;
    let mesh = FineMesh::new(grid, factor);
    let mut c1: f64 = 0.0;
    let mut mismatch: f64 = 0.0;
    let mut witness = None;
    for k in 0..mesh.len() {
        let x = mesh.point(k);
        let gap = ((p.psi0)(x) - (p.psi1)(0.0, x)).abs();
        let z = barrier(0.0, x).value;
        if !gap.is_finite() || !z.is_finite() {
            return Err(Error::CoefficientEvaluation(format!("data not finite at x={x:?}")));
        }
        if z > 0.0 {
            let ratio = gap / z;
            if ratio > c1 {
                c1 = ratio;
                witness = Some(Witness {
                    t: 0.0,
                    x: x[..p.dim].to_vec(),
                    control: None,
                });
            }
        } else if gap > mismatch {
            mismatch = gap;
            witness = Some(Witness {
                t: 0.0,
                x: x[..p.dim].to_vec(),
                control: None,
            });
        }
    }
    let mut details = BTreeMap::new();
    details.insert("C1".into(), c1);
    details.insert("mismatch_where_zeta_vanishes".into(), mismatch);
    Ok(AuditReport {
        assumption: "A3".into(),
        sampled_max: c1,
        sample_count: mesh.len(),
        pass: c1.is_finite() && mismatch <= 1e-10,
        witness,
        details,
    })
}

/// `|zeta|_1 = |zeta|_0 + [zeta]_1` over the closed space-time box.
pub(crate) fn barrier_norm(p: &ControlProblem, grid: &SpaceTimeGrid) -> Result<f64> {
    let barrier = p.barrier.as_ref().ok_or(Error::MissingBarrier)?;
    let mesh = FineMesh::new(grid, FineMesh::factor_for(grid, 4));
    let times = time_samples(grid.t_final());
    let f = |t: f64, x: Point| -> Result<Sample> { finite("barrier", [barrier(t, x).value, 0.0, 0.0, 0.0], 0.0, t, x) };
    let s = grid_seminorm(&mesh, &times, &f)?;
    Ok(s.sup + s.semi)
}
