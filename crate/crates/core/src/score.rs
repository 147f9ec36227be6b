//! Entropy-based clustering scores.
//!
//! Ground truth uses `None` for background detections and predictions use
//! `None` for noise. Both are treated as one ordinary class each. Logs are
//! natural.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dbscan;
use crate::stage1::{neighbor_lists, CorePointRule, NeighborhoodCriterion};
use crate::types::{ClusterAssignment, Detection, Label};

/// Ground-truth class; `None` is background.
pub type Truth = Option<u32>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledPartition {
    pub truth: Vec<Truth>,
    pub predicted: Vec<Label>,
}

impl LabeledPartition {
    pub fn new(truth: Vec<Truth>, predicted: Vec<Label>) -> Self {
        assert_eq!(truth.len(), predicted.len(), "partition lengths differ");
        LabeledPartition { truth, predicted }
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

impl Scores {
    pub const PERFECT: Scores = Scores {
        homogeneity: 1.0,
        completeness: 1.0,
        v_measure: 1.0,
    };
}

fn entropy<K>(counts: &BTreeMap<K, usize>, n: usize) -> f64 {
    let n = n as f64;
    -counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// `1 − H(A|B)/H(A)`, or 1 when `H(A) = 0`.
fn one_minus_conditional<A: Ord + Copy, B: Ord + Copy>(a: &[A], b: &[B]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let mut na: BTreeMap<A, usize> = BTreeMap::new();
    let mut nb: BTreeMap<B, usize> = BTreeMap::new();
    let mut nab: BTreeMap<(A, B), usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *na.entry(x).or_default() += 1;
        *nb.entry(y).or_default() += 1;
        *nab.entry((x, y)).or_default() += 1;
    }
    let h_a = entropy(&na, n);
    if h_a <= 0.0 {
        return 1.0;
    }
    let nf = n as f64;
    let h_a_given_b = -nab
        .iter()
        .map(|(&(_, y), &c)| (c as f64 / nf) * (c as f64 / nb[&y] as f64).ln())
        .sum::<f64>();
    (1.0 - h_a_given_b / h_a).clamp(0.0, 1.0)
}

pub fn homogeneity(p: &LabeledPartition) -> f64 {
    one_minus_conditional(&p.truth, &p.predicted)
}

/// Completeness over all rows, background included.
pub fn completeness(p: &LabeledPartition) -> f64 {
    one_minus_conditional(&p.predicted, &p.truth)
}

/// Completeness over rows whose ground truth is a labeled object only, so
/// that clusters made of background never count against it.
pub fn completeness_modified(p: &LabeledPartition) -> f64 {
    let (truth, pred): (Vec<Truth>, Vec<Label>) = p
        .truth
        .iter()
        .zip(&p.predicted)
        .filter(|(t, _)| t.is_some())
        .map(|(&t, &k)| (t, k))
        .unzip();
    one_minus_conditional(&pred, &truth)
}

pub fn harmonic(h: f64, c: f64) -> f64 {
    if h + c <= 0.0 {
        0.0
    } else {
        2.0 * h * c / (h + c)
    }
}

pub fn v_measure(p: &LabeledPartition) -> f64 {
    harmonic(homogeneity(p), completeness_modified(p))
}

pub fn scores(p: &LabeledPartition) -> Scores {
    let h = homogeneity(p);
    let c = completeness_modified(p);
    Scores {
        homogeneity: h,
        completeness: c,
        v_measure: harmonic(h, c),
    }
}

/// Liberal box parameters used to split each ground-truth object into
/// target sub-clusters.
pub fn precluster_params() -> (NeighborhoodCriterion, CorePointRule) {
    (
        NeighborhoodCriterion::Box {
            eps_xy: 2.0,
            eps_vr: 25.0,
            eps_t: 0.25,
        },
        CorePointRule::fixed(2.0, 0.01),
    )
}

/// Target labels for optimization: every ground-truth object is clustered
/// on its own with liberal parameters over the whole log. Sub-clusters get
/// globally unique ids (objects in ascending id order); object detections
/// left as noise become background.
pub fn preclusters_from_ground_truth(dets: &[Detection]) -> Vec<Truth> {
    let (crit, rule) = precluster_params();
    let mut by_object: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        if let Some(g) = d.gt_label {
            by_object.entry(g).or_default().push(i);
        }
    }
    let mut out = vec![None; dets.len()];
    let mut next = 0u32;
    for idx in by_object.values() {
        let sub: Vec<Detection> = idx.iter().map(|&i| dets[i].clone()).collect();
        let nb = neighbor_lists(&sub, &crit);
        let core: Vec<bool> = sub
            .iter()
            .zip(&nb)
            .map(|(d, n)| rule.is_core(d, n.len()))
            .collect();
        let labels = dbscan::expand(&nb, &core);
        let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
        for (&i, l) in idx.iter().zip(&labels) {
            out[i] = l.map(|l| l + next);
        }
        next += count;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub window_start: f64,
    pub window_end: f64,
    pub detections: usize,
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub windows: Vec<WindowScore>,
    /// Detection-count weighted means over windows.
    pub aggregate: Scores,
}

/// Scores every window against `target` (indexed like the log the
/// assignments refer to) and aggregates with detection-count weights.
pub fn score_assignments(assignments: &[ClusterAssignment], target: &[Truth]) -> ScoreReport {
    let windows: Vec<WindowScore> = assignments
        .iter()
        .map(|a| {
            let truth = a.indices.iter().map(|&i| target[i]).collect();
            let s = scores(&LabeledPartition::new(truth, a.labels.clone()));
            WindowScore {
                window_start: a.window.0,
                window_end: a.window.1,
                detections: a.len(),
                homogeneity: s.homogeneity,
                completeness: s.completeness,
                v_measure: s.v_measure,
            }
        })
        .collect();
    let total: usize = windows.iter().map(|w| w.detections).sum();
    let aggregate = if total == 0 {
        Scores::PERFECT
    } else {
        let mean = |f: fn(&WindowScore) -> f64| {
            windows
                .iter()
                .map(|w| f(w) * w.detections as f64)
                .sum::<f64>()
                / total as f64
        };
        Scores {
            homogeneity: mean(|w| w.homogeneity),
            completeness: mean(|w| w.completeness),
            v_measure: mean(|w| w.v_measure),
        }
    };
    ScoreReport { windows, aggregate }
}

impl ScoreReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("window_start,window_end,detections,homogeneity,completeness,v_measure\n");
        for w in &self.windows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                w.window_start, w.window_end, w.detections, w.homogeneity, w.completeness, w.v_measure
            ));
        }
        let a = &self.aggregate;
        let n: usize = self.windows.iter().map(|w| w.detections).sum();
        s.push_str(&format!(
            "aggregate,aggregate,{},{},{},{}\n",
            n, a.homogeneity, a.completeness, a.v_measure
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(c: &[u32], k: &[u32]) -> LabeledPartition {
        LabeledPartition::new(
            c.iter().map(|&x| Some(x)).collect(),
            k.iter().map(|&x| Some(x)).collect(),
        )
    }

    #[test]
    fn spec_examples() {
        assert_eq!(homogeneity(&part(&[1, 1, 2, 2], &[1, 1, 1, 1])), 0.0);
        assert_eq!(homogeneity(&part(&[1, 1, 2, 2], &[1, 2, 3, 4])), 1.0);
        assert_eq!(homogeneity(&part(&[1, 1, 2, 2], &[5, 5, 7, 7])), 1.0);
        assert_eq!(completeness_modified(&part(&[1, 1, 1, 1], &[1, 1, 2, 2])), 0.0);
        assert_eq!(completeness_modified(&LabeledPartition::new(vec![None; 3], vec![Some(0); 3])), 1.0);
        assert_eq!(harmonic(0.0, 1.0), 0.0);
        assert!((harmonic(0.5, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(v_measure(&part(&[3, 3, 4], &[0, 0, 1])), 1.0);
    }

    #[test]
    fn background_clusters_are_free_for_completeness() {
        let p = LabeledPartition::new(
            vec![Some(0), Some(0), None, None, None],
            vec![Some(0), Some(0), Some(1), Some(2), None],
        );
        assert_eq!(completeness_modified(&p), 1.0);
        assert!(completeness(&p) < 1.0);
    }

    #[test]
    fn noise_is_its_own_class() {
        // two objects both predicted as noise: one impure predicted class
        let p = LabeledPartition::new(vec![Some(0), Some(0), Some(1), Some(1)], vec![None; 4]);
        assert_eq!(homogeneity(&p), 0.0);
    }

    #[test]
    fn gap_split_object_gives_two_targets() {
        let mk = |t: f64| Detection {
            time: t,
            sensor_id: 0,
            range: 10.0,
            azimuth: 0.0,
            radial_velocity: 1.0,
            amplitude: 0.0,
            x: 10.0,
            y: 0.0,
            gt_label: Some(7),
        };
        let mut dets: Vec<Detection> = (0..10).map(|i| mk(i as f64 * 0.05)).collect();
        dets.extend((0..10).map(|i| mk(1.5 + i as f64 * 0.05)));
        let target = preclusters_from_ground_truth(&dets);
        assert!(target[..10].iter().all(|&t| t == Some(0)));
        assert!(target[10..].iter().all(|&t| t == Some(1)));
    }

    #[test]
    fn nearby_objects_stay_apart() {
        let mk = |x: f64, g: u32| Detection {
            time: 0.0,
            sensor_id: 0,
            range: 10.0,
            azimuth: 0.0,
            radial_velocity: 1.0,
            amplitude: 0.0,
            x,
            y: 0.0,
            gt_label: Some(g),
        };
        let dets = vec![mk(0.0, 0), mk(0.1, 0), mk(0.2, 0), mk(0.5, 1), mk(0.6, 1), mk(0.7, 1)];
        let t = preclusters_from_ground_truth(&dets);
        assert_ne!(t[0], t[3]);
        assert!(t.iter().all(|x| x.is_some()));
    }

    #[test]
    fn weighted_aggregate() {
        let a = vec![
            ClusterAssignment::new((0.0, 1.0), vec![0, 1], vec![Some(0), Some(0)]),
            ClusterAssignment::new((1.0, 2.0), vec![2, 3, 4, 5], vec![Some(0); 4]),
        ];
        let target = vec![Some(0), Some(0), Some(0), Some(0), Some(1), Some(1)];
        let r = score_assignments(&a, &target);
        assert_eq!(r.windows[0].v_measure, 1.0);
        assert_eq!(r.windows[1].v_measure, 0.0);
        assert!((r.aggregate.v_measure - 1.0 / 3.0).abs() < 1e-15);
    }
}
