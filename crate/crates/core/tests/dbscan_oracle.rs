use proptest::prelude::*;

use radseg::stage1::{cluster_labels, CorePointRule, MinNeighbors, NeighborhoodCriterion, RangeRelation};
use radseg_oracle as oracle;

fn criterion(kind: u8, a: f64, b: f64) -> NeighborhoodCriterion {
    match kind % 3 {
        0 => NeighborhoodCriterion::Box { eps_xy: a, eps_vr: b, eps_t: 0.2 },
        1 => NeighborhoodCriterion::EuclidXy { eps_xy: a, eps_vr: b, eps_t: 0.2 },
        _ => NeighborhoodCriterion::EuclidXyVr { eps_xyvr: a, vr_scale: b, eps_t: 0.2 },
    }
}

fn rule(adaptive: bool, n: f64, alpha: f64, reciprocal: bool) -> CorePointRule {
    let n_min = if adaptive {
        MinNeighbors::Adaptive {
            n_min_50: n,
            alpha_r: alpha,
            relation: if reciprocal { RangeRelation::Reciprocal } else { RangeRelation::Literal },
        }
    } else {
        MinNeighbors::Fixed { n_min: n }
    };
    CorePointRule { v_r_min: 0.3, n_min }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn matches_reference(
        seed in any::<u64>(),
        n in 0usize..160,
        side in 2.0f64..15.0,
        kind in any::<u8>(),
        eps in 0.3f64..2.0,
        vr in 0.3f64..3.0,
        adaptive in any::<bool>(),
        n_min in 1.0f64..6.0,
        alpha in 0.0f64..1.0,
        reciprocal in any::<bool>(),
    ) {
        let mut rng = oracle::rng(seed);
        let window = oracle::random_window(&mut rng, n, side, 4.0);
        let crit = criterion(kind, eps, vr);
        let rule = rule(adaptive, n_min, alpha, reciprocal);
        prop_assert_eq!(cluster_labels(&window, &crit, &rule), oracle::dbscan(&window, &crit, &rule));
    }

    #[test]
    fn partition_ignores_input_order(seed in any::<u64>(), n in 1usize..120, shift in 0usize..120) {
        let mut rng = oracle::rng(seed);
        let window = oracle::random_window(&mut rng, n, 8.0, 3.0);
        let crit = criterion(2, 1.0, 1.0);
        let rule = CorePointRule::fixed(3.0, 0.3);
        let base = cluster_labels(&window, &crit, &rule);
        let k = shift % n;
        let mut rotated = window.clone();
        rotated.rotate_left(k);
        let mut back = cluster_labels(&rotated, &crit, &rule);
        back.rotate_right(k);
        // cores and noise never depend on order; only borders shared by two
        // clusters may switch sides
        for (a, b) in base.iter().zip(&back) {
            prop_assert_eq!(a.is_none(), b.is_none());
        }
    }
}
