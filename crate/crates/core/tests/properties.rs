use std::sync::Arc;

use proptest::prelude::*;

use pfasst_fem::collocation::CollocationTable;
use pfasst_fem::fem::{build_injection, build_interp_restriction};
use pfasst_fem::pfasst::{BlockState, CompositeOperator, Level};
use pfasst_fem::problems::zeldovich;
use pfasst_fem::{BcMode, Formulation, LagrangeSpace, Mesh1D, SpatialOperators, StepProblem};

fn sorted_nodes() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::btree_set(1u32..1000, 1..7).prop_map(|set| {
        let mut v: Vec<f64> = set.into_iter().map(|k| k as f64 / 1000.0).collect();
        if let Some(last) = v.last_mut() {
            *last = 1.0;
        }
        v.dedup();
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadrature_integrates_interpolants(tau in sorted_nodes()) {
        let t = CollocationTable::from_nodes(tau.clone()).unwrap();
        let m = tau.len();
        for deg in 0..m {
            for row in 0..m {
                let v: f64 = (0..m).map(|j| t.q[(row, j)] * tau[j].powi(deg as i32)).sum();
                let exact = tau[row].powi(deg as i32 + 1) / (deg + 1) as f64;
                prop_assert!((v - exact).abs() < 1e-9);
            }
            let sd: f64 = t.qdelta.row(m - 1).iter().sum();
            prop_assert!((sd - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn restriction_inverts_injection(order in 1usize..=3, half in 1usize..24, by_order in any::<bool>()) {
        let n = 2 * half;
        let fine = LagrangeSpace::new(Mesh1D::uniform(-3.0, 5.0, n).unwrap(), order).unwrap();
        let coarse = if by_order && order > 1 {
            LagrangeSpace::new(*fine.mesh(), order - 1).unwrap()
        } else {
            LagrangeSpace::new(fine.mesh().coarsened().unwrap(), order).unwrap()
        };
        let rt = build_interp_restriction(&fine, &coarse).unwrap().to_dense()
            .matmul(&build_injection(&coarse, &fine).unwrap().to_dense());
        for i in 0..rt.rows() {
            for j in 0..rt.cols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                prop_assert!((rt[(i, j)] - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn injection_preserves_functions(order in 1usize..=3, half in 1usize..16, x in -3.0f64..5.0) {
        let fine = LagrangeSpace::new(Mesh1D::uniform(-3.0, 5.0, 2 * half).unwrap(), order).unwrap();
        let coarse = LagrangeSpace::new(fine.mesh().coarsened().unwrap(), order).unwrap();
        let uc = coarse.interpolate(|y| (0.7 * y).sin());
        let uf = build_injection(&coarse, &fine).unwrap().matvec(&uc);
        prop_assert!((fine.evaluate(&uf, x) - coarse.evaluate(&uc, x)).abs() < 1e-12);
    }

    #[test]
    fn parallel_sweep_ignores_step_order(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(), scale in 0.5f64..1.0) {
        let spec = zeldovich();
        let space = LagrangeSpace::new(Mesh1D::uniform(-20.0, 20.0, 16).unwrap(), 2).unwrap();
        let ops = Arc::new(SpatialOperators::new(space, BcMode::Natural).unwrap());
        let table = Arc::new(CollocationTable::radau_right(3).unwrap());
        let p = StepProblem::new(ops, spec.reaction, table, 0.25, Formulation::Mass);
        let op = CompositeOperator::new(p, 4);
        let u00: Vec<f64> = space.interpolate(spec.initial_profile).iter().map(|v| v * scale).collect();
        let u = op.sweep_sequential(Level::Fine, &BlockState::spread(&u00, 4, 3), &u00, None).unwrap();
        let a = op.sweep_parallel(Level::Fine, &u, &u00, None).unwrap();
        let b = op.sweep_parallel_in_order(Level::Fine, &u, &u00, None, &perm).unwrap();
        prop_assert_eq!(a, b);
    }
}
