//! Kushner–Dupuis finite differences: central second differences on the
//! axes, a sign-dependent corner pair for the cross derivative and upwind
//! drift. Positive type iff `|a12| <= min(a11 hy/hx, a22 hx/hy)`.

use smallvec::SmallVec;

use super::StencilRow;
use crate::error::{Error, Result};
use crate::grid::{Point, SpaceTimeGrid};
use crate::problem::ControlProblem;

/// Offsets `(di, dj)` and weights of the off-center entries.
pub type Offsets = SmallVec<[([i32; 2], f64); 8]>;

/// Off-center weights of `tr[a D^2] + b.D` on a mesh with widths `h`.
pub fn kd_offsets(dim: usize, a: [[f64; 2]; 2], b: Point, h: Point) -> Offsets {
    let mut out = Offsets::new();
    if dim == 1 {
        let w = a[0][0] / (h[0] * h[0]);
        out.push(([-1, 0], w + (-b[0]).max(0.0) / h[0]));
        out.push(([1, 0], w + b[0].max(0.0) / h[0]));
        return out;
    }
    let a12 = a[0][1];
    let cross = a12.abs() / (h[0] * h[1]);
    let wx = a[0][0] / (h[0] * h[0]) - cross;
    let wy = a[1][1] / (h[1] * h[1]) - cross;
    out.push(([-1, 0], wx + (-b[0]).max(0.0) / h[0]));
    out.push(([1, 0], wx + b[0].max(0.0) / h[0]));
    out.push(([0, -1], wy + (-b[1]).max(0.0) / h[1]));
    out.push(([0, 1], wy + b[1].max(0.0) / h[1]));
    if a12 > 0.0 {
        out.push(([1, 1], cross));
        out.push(([-1, -1], cross));
    } else if a12 < 0.0 {
        out.push(([1, -1], cross));
        out.push(([-1, 1], cross));
    }
    out
}

pub(crate) fn kd_row(
    grid: &SpaceTimeGrid,
    node: usize,
    control: usize,
    a: [[f64; 2]; 2],
    b: Point,
    c: f64,
    l: f64,
) -> StencilRow {
    let [i, j] = grid.multi_index(node);
    let mut row = StencilRow::empty(node, control);
    let offsets = kd_offsets(grid.dim(), a, b, grid.dx());
    let total: f64 = offsets.iter().map(|o| o.1).sum();
    row.center_weight = total - c;
    row.constant = l;
    for ([di, dj], w) in offsets {
        let ni = (i as i64 + di as i64) as usize;
        let nj = (j as i64 + dj as i64) as usize;
        row.push_node(grid.index(ni, nj), w);
    }
    row
}

pub fn assemble_kd(
    p: &ControlProblem,
    grid: &SpaceTimeGrid,
    t: f64,
    control: usize,
    node: usize,
) -> Result<StencilRow> {
    if grid.dim() > 2 {
        return Err(Error::UnsupportedDimension(grid.dim()));
    }
    if !grid.is_interior(node) {
        return Err(Error::NotInterior(node));
    }
    let alpha = p.controls[control];
    let x = grid.point(node);
    let a = p.diffusion(alpha, t, x);
    let b = (p.drift)(alpha, t, x);
    let c = (p.discount)(alpha, t, x);
    let l = (p.running_cost)(alpha, t, x);
    Ok(kd_row(grid, node, control, a, b, c, l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::testing::constant;
    use crate::problem::{builtin_problem, Sigma};
    use crate::scheme::{assemble_level, check_positive_type, scheme_dt_bound, Scheme, Target};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn square(n: usize) -> SpaceTimeGrid {
        SpaceTimeGrid::with_final_time(&[0.0, 0.0], &[1.0, 1.0], &[n, n], 1.0, 1).unwrap()
    }

    fn weight(row: &StencilRow, grid: &SpaceTimeGrid, di: i64, dj: i64) -> f64 {
        let [i, j] = grid.multi_index(row.center);
        let target = grid.index((i as i64 + di) as usize, (j as i64 + dj) as usize);
        row.entries
            .iter()
            .find(|e| e.0 == Target::Node(target))
            .map_or(0.0, |e| e.1)
    }

    #[test]
    fn laplacian_stencil() {
        let g = square(9);
        let h = 0.125;
        let s2 = 2f64.sqrt();
        let p = constant(2, Sigma::from_rows(&[vec![s2, 0.0], vec![0.0, s2]]).unwrap(), [0.0; 2], 0.0, 0.0);
        let row = assemble_kd(&p, &g, 0.0, 0, g.index(4, 4)).unwrap();
        assert!((row.center_weight - 4.0 / (h * h)).abs() < 1e-9);
        for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            assert!((weight(&row, &g, di, dj) - 1.0 / (h * h)).abs() < 1e-9);
        }
        assert_eq!(row.entries.len(), 4);
    }

    #[test]
    fn cross_term_uses_sign_dependent_corners() {
        let g = square(9);
        let h2 = 0.125 * 0.125;
        let row = kd_row(&g, g.index(4, 4), 0, [[1.0, 0.4], [0.4, 1.0]], [0.0; 2], 0.0, 0.0);
        assert!((weight(&row, &g, 1, 1) - 0.4 / h2).abs() < 1e-9);
        assert!((weight(&row, &g, -1, -1) - 0.4 / h2).abs() < 1e-9);
        assert_eq!(weight(&row, &g, 1, -1), 0.0);
        assert!((weight(&row, &g, 1, 0) - 0.6 / h2).abs() < 1e-9);
        assert!(check_positive_type(&[row], 0.0, 1.0).pass);

        let neg = kd_row(&g, g.index(4, 4), 0, [[1.0, -0.4], [-0.4, 1.0]], [0.0; 2], 0.0, 0.0);
        assert!((weight(&neg, &g, 1, -1) - 0.4 / h2).abs() < 1e-9);
        assert_eq!(weight(&neg, &g, 1, 1), 0.0);
    }

    #[test]
    fn non_dominant_diffusion_is_flagged() {
        let g = square(9);
        let row = kd_row(&g, g.index(4, 4), 0, [[1.0, 1.2], [1.2, 1.0]], [0.0; 2], 0.0, 0.0);
        let rep = check_positive_type(&[row], 0.0, 1.0);
        assert!(!rep.pass);
        assert!((rep.min_weight + 0.2 / (0.125 * 0.125)).abs() < 1e-9);
        assert_eq!(rep.first_violation.unwrap().node, g.index(4, 4));
    }

    fn quadratic_check(b: Point) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = square(17);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let q: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let a11 = rng.gen_range(0.5..1.5);
            let a22 = rng.gen_range(0.5..1.5);
            let a12 = rng.gen_range(-0.4..0.4);
            let (c, l) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let phi = |x: Point| q[0] + q[1] * x[0] + q[2] * x[1] + q[3] * x[0] * x[0] + q[4] * x[0] * x[1] + q[5] * x[1] * x[1];
            let node = g.index(rng.gen_range(1..16), rng.gen_range(1..16));
            let x = g.point(node);
            let row = kd_row(&g, node, 0, [[a11, a12], [a12, a22]], b, c, l);
            let grad = [q[1] + 2.0 * q[3] * x[0] + q[4] * x[1], q[2] + q[4] * x[0] + 2.0 * q[5] * x[1]];
            let tr = a11 * 2.0 * q[3] + 2.0 * a12 * q[4] + a22 * 2.0 * q[5];
            let exact = -tr - b[0] * grad[0] - b[1] * grad[1] - c * phi(x) - l;
            worst = worst.max((row.apply_fn(&g, phi) - exact).abs());
        }
        worst
    }

    #[test]
    fn exact_on_quadratics_without_drift() {
        assert!(quadratic_check([0.0; 2]) < 1e-10);
        // upwinding adds an O(dx) error
        let e = quadratic_check([1.0, -0.5]);
        assert!(e > 1e-6 && e < 0.2, "{e}");
    }

    #[test]
    fn second_order_on_quartic() {
        let a = |x: Point| [[1.0 + 0.3 * x[0], 0.2 * x[1]], [0.2 * x[1], 1.0 + 0.1 * x[1]]];
        let phi = |x: Point| x[0].powi(4) + x[1].powi(4) + x[0] * x[0] * x[1] * x[1];
        let lap = |x: Point| {
            let (xx, yy, xy) = (12.0 * x[0] * x[0] + 2.0 * x[1] * x[1], 12.0 * x[1] * x[1] + 2.0 * x[0] * x[0], 4.0 * x[0] * x[1]);
            let m = a(x);
            m[0][0] * xx + 2.0 * m[0][1] * xy + m[1][1] * yy
        };
        let mut pts = Vec::new();
        for n in [9usize, 17, 33, 65] {
            let g = square(n);
            let node = g.node_at([0.5, 0.25]).unwrap();
            let x = g.point(node);
            let row = kd_row(&g, node, 0, a(x), [0.0; 2], 0.0, 0.0);
            let err = (row.apply_fn(&g, phi) + lap(x)).abs();
            pts.push(((1.0 / (n - 1) as f64).ln(), err.ln()));
        }
        let order = (pts[3].1 - pts[0].1) / (pts[3].0 - pts[0].0);
        assert!(order >= 1.9, "order {order}");
    }

    #[test]
    fn explicit_heat_bound() {
        let g = SpaceTimeGrid::with_final_time(&[0.0], &[1.0], &[33], 1.0, 1).unwrap();
        let dx = 1.0 / 32.0;
        // a = (1 + 1) / 2 = 1 exactly
        let p = constant(1, Sigma::from_rows(&[vec![1.0, 1.0]]).unwrap(), [0.0; 2], 0.0, 0.0);
        let rows = assemble_level(&p, &g, 0.0, &Scheme::Kd).unwrap();
        assert!(check_positive_type(&rows.rows[0], dx * dx / 2.0, 0.0).pass);
        assert!(!check_positive_type(&rows.rows[0], dx * dx, 0.0).pass);
        assert!(check_positive_type(&rows.rows[0], 10.0, 1.0).pass);
        let bound = scheme_dt_bound(&p, &g, &Scheme::Kd, 0.0).unwrap();
        assert!((bound - dx * dx / 2.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_layer_stability() {
        let p = builtin_problem("boundary-layer").unwrap();
        let dx = 1.0 / 64.0;
        let g = p.grid(65, 2.0, 1).unwrap();
        let rows = assemble_level(&p, &g, 0.0, &Scheme::Kd).unwrap();
        // a = x^2 (1-x)^2 / 2, c = -1: w_c = x^2 (1-x)^2 / dx^2 + 1
        for r in &rows.rows[0] {
            let x = g.point(r.center)[0];
            let v = x * x * (1.0 - x) * (1.0 - x);
            assert!((r.center_weight - (v / (dx * dx) + 1.0)).abs() < 1e-9);
        }
        assert!(check_positive_type(&rows.rows[0], 0.99 * 16.0 * dx * dx, 0.0).pass);
        let bound = scheme_dt_bound(&p, &g, &Scheme::Kd, 0.0).unwrap();
        assert!((bound - 16.0 * dx * dx / (1.0 + 16.0 * dx * dx)).abs() < 1e-15);
    }

    #[test]
    fn not_interior() {
        let p = builtin_problem("manufactured-1d").unwrap();
        let g = p.grid(9, 1.0, 1).unwrap();
        assert!(matches!(assemble_kd(&p, &g, 0.0, 0, 0), Err(Error::NotInterior(0))));
        let mut q = p.clone();
        q.drift = Arc::new(|_, _, _| [1.0, 0.0]);
        let row = assemble_kd(&q, &g, 0.0, 0, 4).unwrap();
        assert!(check_positive_type(&[row], 0.0, 1.0).pass);
    }
}
