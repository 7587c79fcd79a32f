use hjb_core::grid::GridFunction;
use hjb_core::scheme::{assemble_level, check_positive_type, scheme_dt_bound, Scheme, SchemeKind};
use hjb_core::solver::{solve, SolverConfig, Stepper};
use hjb_core::{builtin_problem, SpaceTimeGrid};
use proptest::prelude::*;

fn grid_1d(nodes: usize, dt: f64) -> SpaceTimeGrid {
    SpaceTimeGrid::new(&[0.0], &[1.0], &[nodes], dt, 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_preserves_order(
        f in prop::collection::vec(-1.0f64..1.0, 33),
        eta in prop::collection::vec(0.0f64..1.0, 33),
        frac in 0.1f64..1.0,
        sl in any::<bool>(),
        theta_idx in 0usize..3,
    ) {
        let theta = [0.0, 0.5, 1.0][theta_idx];
        let p = builtin_problem("manufactured-1d").unwrap();
        let kind = if sl { SchemeKind::Sl } else { SchemeKind::Kd };
        let scheme = Scheme::from_kind(kind, theta);
        let bound = scheme_dt_bound(&p, &grid_1d(33, 0.01), &scheme, theta).unwrap();
        let dt = if bound.is_finite() { frac * bound } else { frac * 0.1 };
        let g = grid_1d(33, dt);
        let mut st = Stepper::new(&p, &g, scheme, SolverConfig::with_theta(theta)).unwrap();
        let upper: Vec<f64> = f.iter().zip(&eta).map(|(a, b)| a + b).collect();
        let a = st.advance(&GridFunction::new(0, f)).unwrap().0;
        let b = st.advance(&GridFunction::new(0, upper)).unwrap().0;
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!(x <= y);
        }
    }

    #[test]
    fn rows_positive_below_bound(frac in 0.0f64..1.0, nodes in 9usize..80, theta_idx in 0usize..2) {
        let theta = [0.0, 0.5][theta_idx];
        let p = builtin_problem("manufactured-1d").unwrap();
        for kind in [SchemeKind::Kd, SchemeKind::Sl] {
            let scheme = Scheme::from_kind(kind, theta);
            let g = grid_1d(nodes, 0.01);
            let bound = scheme_dt_bound(&p, &g, &scheme, theta).unwrap();
            let rows = assemble_level(&p, &g, 0.0, &scheme).unwrap();
            for control in &rows.rows {
                prop_assert!(check_positive_type(control, frac * bound, theta).pass);
            }
        }
    }

    #[test]
    fn constant_shift_of_data_shifts_solution(s in -2.0f64..2.0) {
        // c = 0 and a constant shift of the boundary and initial data: the
        // scheme commutes with adding constants
        let p = builtin_problem("manufactured-1d").unwrap();
        let mut q = p.clone();
        let (a, b) = (p.psi0.clone(), p.psi1.clone());
        q.psi0 = std::sync::Arc::new(move |x| a(x) + s);
        q.psi1 = std::sync::Arc::new(move |t, x| b(t, x) + s);
        let g = p.grid(17, 0.25, 8).unwrap();
        let cfg = SolverConfig::with_theta(1.0);
        let scheme = Scheme::from_kind(SchemeKind::Sl, 1.0);
        let u = solve(&p, scheme, &g, cfg).unwrap();
        let v = solve(&q, scheme, &g, cfg).unwrap();
        for (x, y) in u.final_level().values.iter().zip(&v.final_level().values) {
            prop_assert!((y - x - s).abs() < 1e-9);
        }
    }
}

#[test]
fn solutions_stay_bounded_by_data() {
    // zero running cost, no discount: a monotone scheme stays within the
    // range of the initial and boundary data
    let p = builtin_problem("manufactured-1d").unwrap();
    let mut q = p.clone();
    q.running_cost = std::sync::Arc::new(|_, _, _| 0.0);
    let g = q.grid(33, 0.5, 32).unwrap();
    let u = solve(&q, Scheme::from_kind(SchemeKind::Sl, 1.0), &g, SolverConfig::with_theta(1.0)).unwrap();
    for level in &u.levels {
        for v in &level.values {
            assert!((-1e-12..=1.0 + 1e-12).contains(v));
        }
    }
}
