//! Algebraic invariants of the discrete operators, checked on random data.

use std::sync::{Arc, OnceLock};

use cwsbie::bvp::BoundarySolver;
use cwsbie::fields::bs_surface_current;
use cwsbie::geometry::{CoefficientTable, FourierTorus, SurfaceGrid};
use cwsbie::layer_potentials::LayerOperators;
use cwsbie::surface_fields::{surface_divergence, FourierSeries, HarmonicSurfaceBasis, SurfaceCurrent};
use cwsbie::vec3;
use proptest::prelude::*;

/// A shaped torus (elongated, with a helical ripple) at a small resolution.
fn solver() -> &'static BoundarySolver {
    static SOLVER: OnceLock<BoundarySolver> = OnceLock::new();
    SOLVER.get_or_init(|| {
        let table = CoefficientTable {
            nfp: 1,
            r_coeffs: vec![(0, 0, 3.0), (1, 0, 1.0), (1, 1, 0.1)],
            z_coeffs: vec![(1, 0, 1.3)],
        };
        let torus = FourierTorus::new(&table).unwrap();
        let grid = SurfaceGrid::new(&torus, 24, 24).unwrap();
        BoundarySolver::new(Arc::new(LayerOperators::assemble(grid).unwrap()))
    })
}

fn density(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn series() -> impl Strategy<Value = FourierSeries> {
    prop::collection::vec((-3i32..=3, -3i32..=3, -1.0f64..1.0), 1..6).prop_map(|terms| FourierSeries {
        cos: terms.iter().filter(|t| (t.0, t.1) != (0, 0)).copied().collect(),
        sin: terms.iter().rev().filter(|t| (t.0, t.1) != (0, 0)).map(|t| (t.1, t.0, -t.2)).collect(),
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn duality_product_is_symmetric_and_positive(a in density(576), b in density(576)) {
        let ops = solver().operators();
        prop_assert!(close(ops.duality_inner_product(&a, &b), ops.duality_inner_product(&b, &a), 1e-12));
        prop_assert!(ops.duality_inner_product(&a, &a) > 0.0);
    }

    #[test]
    fn double_layer_transpose_is_the_weighted_adjoint(a in density(576), b in density(576)) {
        // ∫ (W a) b = −∫ a (Wᵀʳ b)
        let ops = solver().operators();
        let grid = ops.grid();
        let lhs = grid.inner(&ops.apply_double(&a), &b);
        let rhs = -grid.inner(&a, &ops.apply_double_transpose(&b));
        prop_assert!(close(lhs, rhs, 1e-10));
    }

    #[test]
    fn half_minus_wt_lands_in_mean_zero(a in density(576)) {
        let ops = solver().operators();
        let grid = ops.grid();
        let out = ops.apply_half_minus_wt(&a);
        let scale = grid.l2_norm(&a);
        prop_assert!(grid.mean(&out).abs() <= 1e-10 * scale);
    }

    #[test]
    fn operators_are_linear(a in density(576), b in density(576), s in -3.0f64..3.0) {
        let ops = solver().operators();
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
        let (fa, fb, fc) = (ops.apply_half_plus_wt(&a), ops.apply_half_plus_wt(&b), ops.apply_half_plus_wt(&combo));
        for k in 0..combo.len() {
            prop_assert!(close(fc[k], fa[k] + s * fb[k], 1e-12));
        }
    }

    #[test]
    fn interior_neumann_reproduces_its_data(s in series()) {
        let solver = solver();
        let grid = solver.operators().grid();
        let mut b = s.sample(grid).0;
        let m = grid.mean(&b);
        b.iter_mut().for_each(|v| *v -= m);
        prop_assume!(grid.l2_norm(&b) > 1e-3);
        let sol = solver.solve_neumann_interior(&b).unwrap();
        let err: Vec<f64> = sol.normal_derivative.iter().zip(&b).map(|(x, y)| x - y).collect();
        prop_assert!(grid.l2_norm(&err) <= 1e-8 * grid.l2_norm(&b));
        prop_assert!(grid.mean(&sol.trace).abs() < 1e-10 * grid.l2_norm(&sol.trace).max(1.0));
    }

    #[test]
    fn realized_currents_are_divergence_free_with_linear_fields(s in series(), alpha in -1.0f64..1.0, beta in -1.0f64..1.0) {
        let grid = solver().operators().grid();
        let basis = HarmonicSurfaceBasis::new(grid).unwrap();
        let j = SurfaceCurrent { stream_coeffs: s.clone(), alpha, beta }.realize(grid, &basis);
        let div = surface_divergence(grid, &j);
        prop_assert!(div.iter().all(|d| d.abs() < 1e-8 * (1.0 + j.max_norm())));
        // BS is linear in the current.
        let probes = [[3.0, 0.1, 0.2], [-0.2, 2.6, -0.3]];
        let half = SurfaceCurrent { stream_coeffs: s, alpha, beta }.realize(grid, &basis).scaled(0.5);
        let full = bs_surface_current(grid, &j, &probes);
        let halved = bs_surface_current(grid, &half, &probes);
        for (f, h) in full.iter().zip(&halved) {
            prop_assert!(vec3::norm(vec3::sub(*f, vec3::scale(*h, 2.0))) <= 1e-12 * (1.0 + vec3::norm(*f)));
        }
    }
}
