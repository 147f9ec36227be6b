use proptest::prelude::*;

use radseg::filter::{filter_detections, neighbor_counts, removal_mask, FilterConfig, Quantifier};
use radseg_oracle as oracle;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn matches_reference(
        seed in any::<u64>(),
        n in 0usize..300,
        side in 2.0f64..30.0,
        eta1 in 0.05f64..1.0,
        d_xy in 0.3f64..2.5,
    ) {
        let mut rng = oracle::rng(seed);
        let dets = oracle::random_window(&mut rng, n, side, 1.0);
        let cfg = FilterConfig::new(eta1, d_xy);
        prop_assert_eq!(cfg.quantifier, Quantifier::Any);
        let counts: Vec<usize> = (0..n).map(|i| oracle::filter_neighbors(&dets, i, d_xy, cfg.dt)).collect();
        prop_assert_eq!(neighbor_counts(&dets, d_xy, cfg.dt), counts);
        prop_assert_eq!(removal_mask(&dets, &cfg), oracle::filter_mask(&dets, eta1, d_xy, cfg.dt));
    }

    #[test]
    fn outcome_partitions_input(seed in any::<u64>(), n in 0usize..200) {
        let mut rng = oracle::rng(seed);
        let dets = oracle::random_window(&mut rng, n, 10.0, 1.0);
        let out = filter_detections(&dets, &FilterConfig::new(0.2, 1.0));
        prop_assert_eq!(out.kept.len() + out.removed.len(), n);
        prop_assert_eq!(out.removed.len(), out.mask.iter().filter(|&&m| m).count());
    }

    #[test]
    fn all_quantifier_removes_no_more(seed in any::<u64>(), n in 0usize..200, eta1 in 0.05f64..1.0) {
        let mut rng = oracle::rng(seed);
        let dets = oracle::random_window(&mut rng, n, 10.0, 1.0);
        let any = FilterConfig::new(eta1, 1.0);
        let all = FilterConfig { quantifier: Quantifier::All, ..any };
        for (a, b) in removal_mask(&dets, &any).iter().zip(removal_mask(&dets, &all)) {
            prop_assert!(*a || !b);
        }
    }

    #[test]
    fn larger_radius_removes_no_more(seed in any::<u64>(), n in 0usize..200) {
        let mut rng = oracle::rng(seed);
        let dets = oracle::random_window(&mut rng, n, 10.0, 1.0);
        let small = removal_mask(&dets, &FilterConfig::new(0.2, 0.8));
        let large = removal_mask(&dets, &FilterConfig::new(0.2, 1.6));
        for (s, l) in small.iter().zip(&large) {
            prop_assert!(*s || !l);
        }
    }
}
