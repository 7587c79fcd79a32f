//! Policy iteration for `max_k (A^k U - r^k) = 0` where every `A^k` has a
//! positive diagonal and nonpositive off-diagonal entries with weak diagonal
//! dominance.

use serde::Serialize;
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Row `m` reads `diag[m] U_m - sum off[m] (i, v) U_i - rhs[m]`, `v >= 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControlSystem {
    pub diag: Vec<f64>,
    pub off: Vec<SmallVec<[(usize, f64); 8]>>,
    pub rhs: Vec<f64>,
}

impl ControlSystem {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn residual(&self, m: usize, u: &[f64]) -> f64 {
        let mut s = self.diag[m] * u[m] - self.rhs[m];
        for &(i, v) in &self.off[m] {
            s -= v * u[i];
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HowardConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub linear_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HowardResult {
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
    pub linear_solves: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// Iterates never increased after the first policy evaluation.
    pub monotone: bool,
}

fn improve(systems: &[ControlSystem], u: &[f64], current: &[usize]) -> (Vec<usize>, f64) {
    let n = u.len();
    let mut policy = vec![0usize; n];
    let mut worst: f64 = 0.0;
    for m in 0..n {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (k, s) in systems.iter().enumerate() {
            let r = s.residual(m, u);
            if r > best.0 {
                best = (r, k);
            }
        }
        // keep the current control when it is tied with the best up to rounding
        let mut choice = best.1;
        if let Some(&c) = current.get(m) {
            if c < systems.len() && c != choice {
                let rc = systems[c].residual(m, u);
                let scale = systems[c].diag[m] * u[m].abs() + systems[c].rhs[m].abs() + 1.0;
                if best.0 - rc <= 4.0 * f64::EPSILON * scale {
                    choice = c;
                }
            }
        }
        policy[m] = choice;
        worst = worst.max(best.0.abs());
    }
    (policy, worst)
}

fn scale(systems: &[ControlSystem], u: &[f64]) -> f64 {
    systems
        .iter()
        .flat_map(|s| s.diag.iter().zip(u).map(|(d, v)| d * v.abs()))
        .fold(0.0, f64::max)
}

pub fn howard_solve(systems: &[ControlSystem], initial: &[f64], cfg: &HowardConfig) -> Result<HowardResult> {
    let n = initial.len();
    if systems.is_empty() {
        return Err(Error::InvalidArgument("no control systems".into()));
    }
    if systems.iter().any(|s| s.len() != n || s.off.len() != n || s.rhs.len() != n) {
        return Err(Error::DimensionMismatch("system size differs from the initial guess".into()));
    }
    let mut u = initial.to_vec();
    let mut policy: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut linear_solves = 0;
    let mut monotone = true;
    for it in 1..=cfg.max_iters {
        let (next, residual) = improve(systems, &u, &policy);
        history.push(residual);
        if next == policy && residual <= cfg.tol * (1.0 + scale(systems, &u)) {
            return Ok(HowardResult {
                values: u,
                policy,
                iterations: it,
                linear_solves,
                residual,
                residual_history: history,
                monotone,
            });
        }
        policy = next;
        let frozen = freeze(systems, &policy);
        let v = solve_linear(&frozen, &u, cfg.linear_tol)?;
        if linear_solves > 0 {
            let tol = 1e-9 * (1.0 + u.iter().fold(0.0f64, |a, x| a.max(x.abs())));
            if v.iter().zip(&u).any(|(a, b)| *a > b + tol) {
                monotone = false;
            }
        }
        linear_solves += 1;
        u = v;
    }
    let (_, residual) = improve(systems, &u, &policy);
    Err(Error::PolicyIteration {
        iterations: cfg.max_iters,
        residual,
    })
}

pub(crate) fn freeze(systems: &[ControlSystem], policy: &[usize]) -> ControlSystem {
    let n = policy.len();
    let mut out = ControlSystem {
        diag: Vec::with_capacity(n),
        off: Vec::with_capacity(n),
        rhs: Vec::with_capacity(n),
    };
    for (m, &k) in policy.iter().enumerate() {
        out.diag.push(systems[k].diag[m]);
        out.off.push(systems[k].off[m].clone());
        out.rhs.push(systems[k].rhs[m]);
    }
    out
}

/// Affordable dense-band work for a direct solve.
const BAND_BUDGET: usize = 50_000_000;
const GAUSS_SEIDEL_SWEEPS: usize = 20_000;

/// Solves the frozen-policy system: banded LU when affordable, otherwise
/// Gauss–Seidel to `linear_tol`.
pub fn solve_linear(sys: &ControlSystem, guess: &[f64], linear_tol: f64) -> Result<Vec<f64>> {
    let n = sys.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (mut kl, mut ku) = (0usize, 0usize);
    for (m, row) in sys.off.iter().enumerate() {
        for &(i, _) in row {
            if i < m {
                kl = kl.max(m - i);
            } else {
                ku = ku.max(i - m);
            }
        }
    }
    for (m, d) in sys.diag.iter().enumerate() {
        if !(*d > 0.0) {
            return Err(Error::SingularSystem(m));
        }
    }
    if n.saturating_mul((kl + 1) * (ku + 1)) <= BAND_BUDGET {
        banded_lu(sys, kl, ku)
    } else {
        gauss_seidel(sys, guess, linear_tol)
    }
}

fn banded_lu(sys: &ControlSystem, kl: usize, ku: usize) -> Result<Vec<f64>> {
    let n = sys.len();
    let w = kl + ku + 1;
    let mut a = vec![0.0; n * w];
    let at = |i: usize, j: usize| i * w + (j + kl - i);
    for m in 0..n {
        a[at(m, m)] += sys.diag[m];
        for &(i, v) in &sys.off[m] {
            a[at(m, i)] -= v;
        }
    }
    let mut b = sys.rhs.clone();
    for k in 0..n {
        let piv = a[at(k, k)];
        if !(piv > 0.0) {
            return Err(Error::SingularSystem(k));
        }
        let last_row = (k + kl).min(n - 1);
        let last_col = (k + ku).min(n - 1);
        for i in k + 1..=last_row {
            let f = a[at(i, k)] / piv;
            if f == 0.0 {
                continue;
            }
            for j in k + 1..=last_col {
                let akj = a[at(k, j)];
                if akj != 0.0 {
                    a[at(i, j)] -= f * akj;
                }
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in k + 1..=(k + ku).min(n - 1) {
            s -= a[at(k, j)] * x[j];
        }
        x[k] = s / a[at(k, k)];
    }
    Ok(x)
}

fn gauss_seidel(sys: &ControlSystem, guess: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = sys.len();
    let mut x = guess.to_vec();
    let mut change = f64::INFINITY;
    for _ in 0..GAUSS_SEIDEL_SWEEPS {
        change = 0.0;
        let mut norm: f64 = 0.0;
        for m in 0..n {
            let mut s = sys.rhs[m];
            for &(i, v) in &sys.off[m] {
                s += v * x[i];
            }
            let new = s / sys.diag[m];
            change = change.max((new - x[m]).abs());
            norm = norm.max(new.abs());
            x[m] = new;
        }
        if change <= tol * (1.0 + norm) {
            return Ok(x);
        }
    }
    Err(Error::LinearSolver(change))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_system(rng: &mut ChaCha8Rng, n: usize) -> ControlSystem {
        let mut s = ControlSystem::default();
        for m in 0..n {
            let mut row = SmallVec::new();
            let mut sum = 0.0;
            for _ in 0..3 {
                let i = rng.gen_range(0..n);
                if i != m && !row.iter().any(|e: &(usize, f64)| e.0 == i) {
                    let v = rng.gen_range(0.0..1.0);
                    sum += v;
                    row.push((i, v));
                }
            }
            s.diag.push(sum + rng.gen_range(0.05..1.0));
            s.off.push(row);
            s.rhs.push(rng.gen_range(-1.0..1.0));
        }
        s
    }

    fn value_iteration(systems: &[ControlSystem], n: usize) -> Vec<f64> {
        let mut u = vec![0.0; n];
        loop {
            let mut change: f64 = 0.0;
            for m in 0..n {
                let v = systems
                    .iter()
                    .map(|s| (s.rhs[m] + s.off[m].iter().map(|&(i, w)| w * u[i]).sum::<f64>()) / s.diag[m])
                    .fold(f64::INFINITY, f64::min);
                change = change.max((v - u[m]).abs());
                u[m] = v;
            }
            if change < 1e-14 {
                return u;
            }
        }
    }

    const CFG: HowardConfig = HowardConfig {
        tol: 1e-10,
        max_iters: 100,
        linear_tol: 1e-13,
    };

    #[test]
    fn matches_value_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let systems: Vec<_> = (0..3).map(|_| random_system(&mut rng, 20)).collect();
            let oracle = value_iteration(&systems, 20);
            let r = howard_solve(&systems, &[0.0; 20], &CFG).unwrap();
            let err = r.values.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "err {err}");
            assert!(r.iterations <= 10);
            assert!(r.monotone);
            let lo = howard_solve(&systems, &[-10.0; 20], &CFG).unwrap();
            let hi = howard_solve(&systems, &[10.0; 20], &CFG).unwrap();
            let gap = lo.values.iter().zip(&hi.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap < 1e-9);
        }
    }

    #[test]
    fn single_control_needs_one_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_system(&mut rng, 15);
        let r = howard_solve(std::slice::from_ref(&s), &[0.0; 15], &CFG).unwrap();
        assert_eq!(r.linear_solves, 1);
        assert_eq!(r.iterations, 2);
        for m in 0..15 {
            assert!(s.residual(m, &r.values).abs() < 1e-12);
        }
    }

    #[test]
    fn gauss_seidel_agrees_with_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_system(&mut rng, 30);
        let n = s.len();
        let lu = banded_lu(&s, n - 1, n - 1).unwrap();
        let gs = gauss_seidel(&s, &vec![0.0; n], 1e-15).unwrap();
        for (a, b) in lu.iter().zip(&gs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let mut s = ControlSystem::default();
        s.diag.push(0.0);
        s.off.push(SmallVec::new());
        s.rhs.push(1.0);
        assert!(matches!(solve_linear(&s, &[0.0], 1e-12), Err(Error::SingularSystem(0))));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let systems: Vec<_> = (0..3).map(|_| random_system(&mut rng, 20)).collect();
        let cfg = HowardConfig { max_iters: 1, ..CFG };
        assert!(matches!(
            howard_solve(&systems, &[0.0; 20], &cfg),
            Err(Error::PolicyIteration { .. })
        ));
    }
}
