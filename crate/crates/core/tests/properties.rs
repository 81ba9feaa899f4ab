use chatterfree::integrator::{project_to_manifold, ProjectionOptions};
use chatterfree::library::{make_case_study_1, StickSlip2Params};
use chatterfree::sliding::{local_sign, product_weights, weights_from_normals, NormalBlock};
use chatterfree::{build_sign_matrix, simulate, FlowMap, HybridModel, SimConfig, SwitchingFunction, WeightOptions};
use proptest::prelude::*;

proptest! {
    #[test]
    fn sign_matrix_columns_are_distinct_patterns(p in 1usize..=8) {
        let s = build_sign_matrix(p).unwrap();
        let mut seen = std::collections::HashSet::new();
        for i in 0..s.cols() {
            let col = s.column(i);
            prop_assert!(col.iter().all(|v| *v == 1 || *v == -1));
            prop_assert_eq!(s.column_of(&col), Some(i));
            prop_assert!(seen.insert(col));
        }
        prop_assert_eq!(seen.len(), 1usize << p);
    }

    #[test]
    fn product_weights_are_convex(alphas in prop::collection::vec(0.0f64..=1.0, 1..6)) {
        let w = product_weights(&alphas);
        prop_assert_eq!(w.len(), 1usize << alphas.len());
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn attractive_blocks_give_tangent_convex_weights(
        m in 1usize..=2,
        speeds in prop::collection::vec(0.05f64..2.0, 4 * 2),
        shear in prop::collection::vec(-0.02f64..0.02, 4 * 2),
    ) {
        // Every flow points toward the intersection on every active manifold.
        let flows = 1usize << m;
        let mut values = Vec::with_capacity(flows * m);
        for c in 0..flows {
            for k in 0..m {
                let i = c * m + k;
                values.push(-f64::from(local_sign(k, c)) * speeds[i] + shear[i] * speeds[i]);
            }
        }
        let block = NormalBlock::new(m, values);
        prop_assume!(block.is_attractive(1e-9));
        let w = weights_from_normals(&block, None, &WeightOptions::default()).unwrap();
        prop_assert!((w.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(w.weights.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(block.residual(&w.weights) <= 1e-10, "residual {}", block.residual(&w.weights));
    }

    #[test]
    fn projection_onto_plane_matches_closed_form(
        normal in prop::collection::vec(-2.0f64..2.0, 3),
        offset in -1.0f64..1.0,
        point in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        let nn: f64 = normal.iter().map(|v| v * v).sum();
        prop_assume!(nn > 1e-2);
        let n = [normal[0], normal[1], normal[2]];
        let model = HybridModel::builder(["x", "y", "z"])
            .switching(
                SwitchingFunction::new("plane", move |x: &[f64]| n[0] * x[0] + n[1] * x[1] + n[2] * x[2] - offset)
                    .with_gradient(move |_: &[f64], g: &mut [f64]| g.copy_from_slice(&n))
                    .affine(),
            )
            .flow(FlowMap::new("lo", |_: &[f64], d: &mut [f64]| d.fill(0.0)))
            .flow(FlowMap::new("hi", |_: &[f64], d: &mut [f64]| d.fill(0.0)))
            .build()
            .unwrap();
        let opts = ProjectionOptions { max_newton: 2, ..Default::default() };
        let x = project_to_manifold(&model, &point, &[0], &opts).unwrap();
        let s = (n[0] * point[0] + n[1] * point[1] + n[2] * point[2] - offset) / nn;
        for i in 0..3 {
            prop_assert!((x[i] - (point[i] - s * n[i])).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn repeated_runs_are_identical(amp in -2.0f64..2.0, phi in 0.0f64..6.0) {
        let p = StickSlip2Params { amp, phi, ..Default::default() };
        let model = make_case_study_1(p).unwrap();
        let cfg = SimConfig { t_end: 40.0, ..Default::default() };
        let a = simulate(&model, &p.initial_state(), &cfg).unwrap();
        let b = simulate(&model, &p.initial_state(), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }
}
