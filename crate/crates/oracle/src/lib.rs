//! Slow, direct reference implementations for differential testing, plus
//! seeded random input generators. Nothing here uses the spatial index or
//! the incremental bookkeeping of the library under test.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radseg::stage1::{CorePointRule, MinNeighbors, NeighborhoodCriterion, RangeRelation};
use radseg::{Detection, Label};

/// Neighbor relation written out from the criterion definitions. Distances
/// are compared squared so exact ties resolve as in the library.
pub fn neighbors(a: &Detection, b: &Detection, crit: &NeighborhoodCriterion) -> bool {
    let dt = (a.time - b.time).abs();
    let (dx, dy, dv) = (a.x - b.x, a.y - b.y, a.radial_velocity - b.radial_velocity);
    match *crit {
        NeighborhoodCriterion::Box { eps_xy, eps_vr, eps_t } => {
            dx.abs().max(dy.abs()) < eps_xy && dv.abs() < eps_vr && dt < eps_t
        }
        NeighborhoodCriterion::EuclidXy { eps_xy, eps_vr, eps_t } => {
            dx * dx + dy * dy < eps_xy * eps_xy && dv.abs() < eps_vr && dt < eps_t
        }
        NeighborhoodCriterion::EuclidXyVr { eps_xyvr, vr_scale, eps_t } => {
            dx * dx + dy * dy + (dv / vr_scale) * (dv / vr_scale) < eps_xyvr * eps_xyvr && dt < eps_t
        }
    }
}

pub fn min_neighbors(rule: &CorePointRule, range: f64) -> f64 {
    match rule.n_min {
        MinNeighbors::Fixed { n_min } => n_min,
        MinNeighbors::Adaptive { n_min_50, alpha_r, relation } => {
            let r = range.max(25.0).min(125.0);
            let x = match relation {
                RangeRelation::Literal => r / 50.0,
                RangeRelation::Reciprocal => 50.0 / r,
            };
            n_min_50 * (1.0 + alpha_r * (x - 1.0))
        }
    }
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    parent[i] = r;
    r
}

/// DBSCAN from the definitions: core points are connected through direct
/// core-core neighborhoods; a border point joins the cluster whose lowest
/// core index is smallest among the clusters of its core neighbors; the
/// rest is noise. Labels are numbered by lowest core index.
pub fn dbscan(dets: &[Detection], crit: &NeighborhoodCriterion, rule: &CorePointRule) -> Vec<Label> {
    let n = dets.len();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| i != j && neighbors(&dets[i], &dets[j], crit)).collect())
        .collect();
    let core: Vec<bool> = (0..n)
        .map(|i| {
            let count = adj[i].iter().filter(|&&a| a).count();
            dets[i].radial_velocity.abs() > rule.v_r_min && count as f64 >= min_neighbors(rule, dets[i].range)
        })
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && adj[i][j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    // roots are the lowest core index of each component
    let mut label_of_root = BTreeMap::new();
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            let next = label_of_root.len() as u32;
            label_of_root.entry(r).or_insert(next);
        }
    }
    (0..n)
        .map(|i| {
            if core[i] {
                return Some(label_of_root[&find(&mut parent, i)]);
            }
            (0..n)
                .filter(|&j| core[j] && adj[i][j])
                .map(|j| find(&mut parent, j))
                .min()
                .map(|r| label_of_root[&r])
        })
        .collect()
}

/// Number of other detections within `d_xy` (inclusive) and `|Δt| ≤ dt`.
pub fn filter_neighbors(dets: &[Detection], i: usize, d_xy: f64, dt: f64) -> usize {
    let d = &dets[i];
    dets.iter()
        .enumerate()
        .filter(|&(j, o)| j != i && (o.x - d.x) * (o.x - d.x) + (o.y - d.y) * (o.y - d.y) <= d_xy * d_xy && (o.time - d.time).abs() <= dt)
        .count()
}

/// Removal decision spelled out stage by stage.
pub fn filter_removes(abs_vr: f64, n: usize, eta1: f64) -> bool {
    let stages = [(eta1, 2), (eta1 / 5.0, 3), (eta1 / 10.0, 4), (eta1 / 50.0, 10)];
    n == 0 || stages.iter().any(|&(eta, min)| abs_vr < eta && n < min)
}

pub fn filter_mask(dets: &[Detection], eta1: f64, d_xy: f64, dt: f64) -> Vec<bool> {
    (0..dets.len())
        .map(|i| filter_removes(dets[i].radial_velocity.abs(), filter_neighbors(dets, i, d_xy, dt), eta1))
        .collect()
}

/// Entropy (natural log) of the empirical distribution of `xs`.
fn entropy<T: Ord + Copy>(xs: &[T]) -> f64 {
    let mut counts: BTreeMap<T, f64> = BTreeMap::new();
    for &x in xs {
        *counts.entry(x).or_default() += 1.0;
    }
    let n = xs.len() as f64;
    counts.values().map(|&c| -(c / n) * (c / n).ln()).sum()
}

/// `H(A | B)` computed as `H(A, B) − H(B)`.
fn conditional_entropy<A: Ord + Copy, B: Ord + Copy>(a: &[A], b: &[B]) -> f64 {
    let joint: Vec<(A, B)> = a.iter().copied().zip(b.iter().copied()).collect();
    entropy(&joint) - entropy(b)
}

fn one_minus_ratio<A: Ord + Copy, B: Ord + Copy>(a: &[A], b: &[B]) -> f64 {
    let h = entropy(a);
    if h == 0.0 {
        1.0
    } else {
        1.0 - conditional_entropy(a, b) / h
    }
}

/// Homogeneity, modified completeness and their harmonic mean. Background
/// truth (`None`) is a class for homogeneity and excluded from
/// completeness; noise is one predicted class.
pub fn v_measure(truth: &[Option<u32>], predicted: &[Label]) -> (f64, f64, f64) {
    let h = one_minus_ratio(truth, predicted);
    let (t, k): (Vec<Option<u32>>, Vec<Label>) = truth
        .iter()
        .zip(predicted)
        .filter(|(t, _)| t.is_some())
        .map(|(&t, &k)| (t, k))
        .unzip();
    let c = one_minus_ratio(&k, &t);
    let v = if h + c == 0.0 { 0.0 } else { 2.0 * h * c / (h + c) };
    (h, c, v)
}

/// Relabels a partition by order of first appearance.
pub fn canonical(labels: &[Label]) -> Vec<Label> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            l.map(|v| {
                let next = map.len() as u32;
                *map.entry(v).or_insert(next)
            })
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random window of `n` detections over a `side`×`side` square with
/// velocities in ±`vmax`, times in `[0, 0.25)`, and positions quantized to
/// a 0.05 m lattice so that distance ties occur.
pub fn random_window(rng: &mut ChaCha8Rng, n: usize, side: f64, vmax: f64) -> Vec<Detection> {
    let mut out: Vec<Detection> = (0..n)
        .map(|_| {
            let q = |v: f64| (v / 0.05).round() * 0.05;
            let x = q(rng.random::<f64>() * side) + 5.0;
            let y = q(rng.random::<f64>() * side - side / 2.0);
            let t = (rng.random::<f64>() * 5.0).floor() * 0.05;
            let v = q((2.0 * rng.random::<f64>() - 1.0) * vmax);
            let mut d = Detection::from_polar(t, 0, x.hypot(y), y.atan2(x), v);
            d.x = x;
            d.y = y;
            d
        })
        .collect();
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    out
}
