//! Property-based tests for the numeric invariants the pipeline relies on.

use proptest::prelude::*;

use graspvae::eval_harness::spearman;
use graspvae::grasp_data::{
    canonicalize_quaternion, denormalize, normalize, quaternion_norm, GraspConfiguration,
    GraspRecord, NormalizationStats, TabletopPlane,
};

fn arb_quaternion() -> impl Strategy<Value = [f64; 4]> {
    [-1.0f64..1.0, -1.0..1.0, -1.0..1.0, -1.0..1.0]
        .prop_filter("nonzero", |q| quaternion_norm(*q) > 1e-3)
        .prop_map(|q| {
            let n = quaternion_norm(q);
            [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonicalization_is_idempotent_and_norm_preserving(q in arb_quaternion()) {
        let once = canonicalize_quaternion(q);
        let twice = canonicalize_quaternion(once);
        prop_assert_eq!(once, twice);
        prop_assert!((quaternion_norm(once) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_round_trips(
        px in -0.2f64..0.2, py in -0.2f64..0.2, pz in 0.0f64..0.3,
        q in arb_quaternion(),
        spread in 0.0f64..1.5,
    ) {
        let plane = TabletopPlane::new([0.0, 0.0, 1.0, 0.0]).unwrap();
        // Two corner records pin the normalization ranges so the probe
        // record always lies inside them.
        let mut records = vec![
            GraspRecord {
                grasp: GraspConfiguration::new([-0.2, -0.2, 0.0], [0.0, 0.0, 0.0, 1.0], 0.0)
                    .unwrap(),
                plane,
                label: None,
            },
            GraspRecord {
                grasp: GraspConfiguration::new([0.2, 0.2, 0.3], [0.0, 0.0, 0.0, 1.0], 1.5)
                    .unwrap(),
                plane,
                label: None,
            },
        ];
        let probe = GraspRecord {
            grasp: GraspConfiguration::new([px, py, pz], q, spread).unwrap(),
            plane,
            label: None,
        };
        records.push(probe.clone());
        let stats = NormalizationStats::from_records(&records).unwrap();
        let (vector, out_of_range) = normalize(&probe, &stats);
        prop_assert!(!out_of_range);
        let back = denormalize(&vector[0..8], &stats).unwrap();
        prop_assert!(!back.spread_clamped);
        for i in 0..3 {
            prop_assert!((back.config.position[i] - probe.grasp.position[i]).abs() < 1e-12);
        }
        for i in 0..4 {
            prop_assert!((back.config.orientation[i] - probe.grasp.orientation[i]).abs() < 1e-12);
        }
        prop_assert!((back.config.spread - probe.grasp.spread).abs() < 1e-12);
    }

    #[test]
    fn spearman_is_invariant_under_monotone_transforms(
        xs in proptest::collection::vec(-100.0f64..100.0, 5..30),
        ys in proptest::collection::vec(-100.0f64..100.0, 5..30),
    ) {
        let n = xs.len().min(ys.len());
        let xs = &xs[..n];
        let ys = &ys[..n];
        let spread = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - v.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread(xs) > 1e-9 && spread(ys) > 1e-9);
        let rho = spearman(xs, ys).unwrap();
        // exp is strictly increasing, so ranks — and the coefficient — are
        // unchanged.
        let warped: Vec<f64> = xs.iter().map(|x| (x / 50.0).exp()).collect();
        let rho_warped = spearman(&warped, ys).unwrap();
        prop_assert!((rho - rho_warped).abs() < 1e-9);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&rho));
    }
}
