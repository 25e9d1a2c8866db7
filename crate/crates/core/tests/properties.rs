use std::collections::BTreeSet;
use std::f64::consts::PI;

use proptest::prelude::*;

use hypflow_core::cellcomplex::{generate_tiling, load_complex, BallSequence, TilingKind};
use hypflow_core::conditions::{check_theorem_ii, face_capacity, face_count_in, FaceRange, WSource};
use hypflow_core::curvaturefield::assemble;
use hypflow_core::facepacking::{closure_residual, face_jacobian, solve_dual_curvature, total_curvature_face};

fn face() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, 3..=8).prop_map(|s| s.into_iter().map(f64::exp).collect())
}

fn kind() -> impl Strategy<Value = TilingKind> {
    prop_oneof![Just(TilingKind::Square), Just(TilingKind::Triangular), Just(TilingKind::Hexagonal)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn closure_holds_and_totals_are_bounded(k in face()) {
        let dual = solve_dual_curvature(&k).unwrap();
        prop_assert!(dual.curvature > 1.0);
        prop_assert!(closure_residual(&k, &dual).abs() < 1e-10);
        let sol = total_curvature_face(&k, Some(dual)).unwrap();
        for t in sol.totals() {
            prop_assert!(t > 0.0 && t < PI);
        }
    }

    #[test]
    fn face_jacobian_sign_structure(k in face()) {
        let j = face_jacobian(&k).unwrap();
        prop_assert!(j.max_asymmetry() < 1e-8);
        for i in 0..j.n {
            prop_assert!(j.get(i, i) > 0.0);
            prop_assert!(j.row_sum(i) > 0.0);
            for c in (0..j.n).filter(|&c| c != i) {
                prop_assert!(j.get(i, c) < 0.0);
            }
        }
    }

    #[test]
    fn scaling_all_curvatures_up_raises_every_total(k in face(), lift in 0.01f64..1.0) {
        // the row sums are positive, so a uniform increase of s raises each T_i
        let before: Vec<f64> = total_curvature_face(&k, None).unwrap().totals().collect();
        let lifted: Vec<f64> = k.iter().map(|x| x * lift.exp()).collect();
        let after: Vec<f64> = total_curvature_face(&lifted, None).unwrap().totals().collect();
        for (a, b) in before.iter().zip(&after) {
            prop_assert!(b > a);
        }
    }

    #[test]
    fn field_assembly_is_deterministic_and_symmetric(
        kind in kind(),
        radius in 1usize..4,
        seed in prop::collection::vec(-2.0f64..2.0, 16),
    ) {
        let c = generate_tiling(kind, radius).unwrap();
        let s: Vec<f64> = (0..c.vertex_count()).map(|v| seed[v % seed.len()]).collect();
        let a = assemble(&c, &s).unwrap();
        let b = assemble(&c, &s).unwrap();
        prop_assert!(a.totals.iter().zip(&b.totals).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert!(a.jacobian.max_interior_asymmetry() < 1e-8);
        for &i in c.interior() {
            prop_assert!(a.totals[i] > 0.0 && a.totals[i] < PI * c.degree(i) as f64);
        }
    }

    #[test]
    fn generated_complexes_round_trip(kind in kind(), radius in 1usize..5) {
        let c = generate_tiling(kind, radius).unwrap();
        prop_assert_eq!(load_complex(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn face_counts_are_bounded(ids in prop::collection::btree_set(0u64..40, 1..20)) {
        let balls = BallSequence::of_kind(TilingKind::Hexagonal, 3);
        for face in balls.enumeration().faces() {
            prop_assert!(face_count_in(face, &ids) <= face.len().min(ids.len()));
        }
    }

    #[test]
    fn capacity_grows_with_the_set(
        ids in prop::collection::btree_set(0u64..49, 1..12),
        extra in prop::collection::btree_set(0u64..49, 0..6),
    ) {
        let balls = BallSequence::of_kind(TilingKind::Square, 4);
        let bigger: BTreeSet<u64> = ids.union(&extra).copied().collect();
        for face in balls.enumeration().faces() {
            prop_assert!(face_capacity(face, &ids) <= face_capacity(face, &bigger));
        }
    }

    #[test]
    fn shrinking_that_never_breaks_the_bound(
        ids in prop::collection::btree_set(0u64..25, 1..8),
        level in 0.1f64..3.0,
        lambda in 0.0f64..1.0,
    ) {
        let balls = BallSequence::of_kind(TilingKind::Square, 5);
        let enumeration = balls.enumeration();
        let a = balls.default_prefix();
        let source = WSource::Explicit(vec![ids]);
        let run = |c: f64| {
            check_theorem_ii(&enumeration, &a, &move |_| Some(c), &source, |v| balls.neighbors(v), FaceRange::Conservative)
                .unwrap()
        };
        if run(level).holds() {
            prop_assert!(run(lambda * level).holds());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn flow_obeys_the_maximum_principle(
        that_seed in prop::collection::vec(1.0f64..6.0, 8),
        start_seed in prop::collection::vec(-1.5f64..1.0, 8),
    ) {
        use hypflow_core::curvaturefield::PrescribedCurvature;
        use hypflow_core::flow::{integrate_truncated_flow, monitor_report, FlowOptions};

        let c = generate_tiling(TilingKind::Square, 3).unwrap();
        let that = PrescribedCurvature::new(&c, (0..c.vertex_count()).map(|v| that_seed[v % 8]).collect()).unwrap();
        let s0: Vec<f64> = (0..c.vertex_count()).map(|v| start_seed[(v * 5) % 8]).collect();
        let trace = integrate_truncated_flow(&c, &s0, &that, &FlowOptions::default()).unwrap();
        prop_assert!(trace.converged);
        prop_assert!(monitor_report(&trace).is_empty());
        prop_assert!(trace.stats.derivative_bound_margin > 0.0);
        prop_assert!(trace.final_state.iter().all(|s| s.is_finite()));
        for v in c.boundary_vertices() {
            prop_assert_eq!(trace.final_state[v].to_bits(), s0[v].to_bits());
        }
    }
}
