use proptest::prelude::*;

use radseg::score::{scores, LabeledPartition};
use radseg_oracle as oracle;

fn labels(max: u32) -> impl Strategy<Value = Option<u32>> {
    prop_oneof![1 => Just(None), 4 => (0..max).prop_map(Some)]
}

fn pairs() -> impl Strategy<Value = (Vec<Option<u32>>, Vec<Option<u32>>)> {
    (1usize..50).prop_flat_map(|n| (prop::collection::vec(labels(4), n), prop::collection::vec(labels(6), n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn matches_entropy_definition((truth, predicted) in pairs()) {
        let s = scores(&LabeledPartition::new(truth.clone(), predicted.clone()));
        let (h, c, v) = oracle::v_measure(&truth, &predicted);
        prop_assert!((s.homogeneity - h).abs() <= 1e-12, "h {} vs {}", s.homogeneity, h);
        prop_assert!((s.completeness - c).abs() <= 1e-12, "c {} vs {}", s.completeness, c);
        prop_assert!((s.v_measure - v).abs() <= 1e-12, "v {} vs {}", s.v_measure, v);
        for x in [s.homogeneity, s.completeness, s.v_measure] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&x));
        }
    }

    #[test]
    fn invariant_under_relabeling((truth, predicted) in pairs(), shift in 1u32..50) {
        let base = scores(&LabeledPartition::new(truth.clone(), predicted.clone()));
        let renamed: Vec<Option<u32>> = predicted.iter().map(|l| l.map(|v| (v + shift) * 7)).collect();
        let s = scores(&LabeledPartition::new(truth, renamed));
        prop_assert!((s.v_measure - base.v_measure).abs() <= 1e-12);
    }

    #[test]
    fn invariant_under_row_order((truth, predicted) in pairs(), k in 0usize..50) {
        let base = scores(&LabeledPartition::new(truth.clone(), predicted.clone()));
        let k = k % truth.len();
        let (mut t, mut p) = (truth, predicted);
        t.rotate_left(k);
        p.rotate_left(k);
        let s = scores(&LabeledPartition::new(t, p));
        prop_assert!((s.v_measure - base.v_measure).abs() <= 1e-12);
    }
}

#[test]
fn perfect_partition_scores_one() {
    let truth = vec![Some(0), Some(0), Some(1), None];
    let predicted = vec![Some(5), Some(5), Some(2), None];
    let s = scores(&LabeledPartition::new(truth, predicted));
    assert!((s.v_measure - 1.0).abs() < 1e-12);
}

#[test]
fn splitting_a_lone_object_zeroes_completeness() {
    let truth = vec![Some(0); 4];
    let predicted = vec![Some(0), Some(0), Some(1), Some(1)];
    let s = scores(&LabeledPartition::new(truth, predicted));
    assert_eq!(s.completeness, 0.0);
    assert_eq!(s.v_measure, 0.0);
}
