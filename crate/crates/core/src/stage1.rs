//! Sliding-window point clustering.
//!
//! DBSCAN over x/y/v_r/t with three neighborhood criteria, a core-point
//! radial-velocity gate and an optional range-adaptive minimum neighbor
//! count. Time acts as an independent variable: two detections can only be
//! neighbors when `|Δt| < ε_t`, which makes each window of length `ε_t`
//! self-contained.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dbscan;
use crate::error::{Error, Result};
use crate::grid::GridIndex;
use crate::types::{ClusterAssignment, Detection, Label};

pub const DEFAULT_EPS_T: f64 = 0.25;
pub const DEFAULT_HOP: f64 = 0.05;

/// Range clip applied before evaluating the adaptive minimum neighbor count.
pub const RANGE_CLIP: (f64, f64) = (25.0, 125.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeighborhoodCriterion {
    /// `|Δx| < ε_xy ∧ |Δy| < ε_xy ∧ |Δv_r| < ε_vr ∧ |Δt| < ε_t`
    Box { eps_xy: f64, eps_vr: f64, eps_t: f64 },
    /// `‖Δxy‖ < ε_xy ∧ |Δv_r| < ε_vr ∧ |Δt| < ε_t`
    EuclidXy { eps_xy: f64, eps_vr: f64, eps_t: f64 },
    /// `sqrt(Δx² + Δy² + Δv_r²/ε'_vr²) < ε_xyvr ∧ |Δt| < ε_t`
    EuclidXyVr {
        eps_xyvr: f64,
        vr_scale: f64,
        eps_t: f64,
    },
}

impl NeighborhoodCriterion {
    pub fn eps_t(&self) -> f64 {
        match *self {
            NeighborhoodCriterion::Box { eps_t, .. }
            | NeighborhoodCriterion::EuclidXy { eps_t, .. }
            | NeighborhoodCriterion::EuclidXyVr { eps_t, .. } => eps_t,
        }
    }

    /// Largest per-axis spatial offset that can still be a neighbor.
    pub fn spatial_reach(&self) -> f64 {
        match *self {
            NeighborhoodCriterion::Box { eps_xy, .. }
            | NeighborhoodCriterion::EuclidXy { eps_xy, .. } => eps_xy,
            NeighborhoodCriterion::EuclidXyVr { eps_xyvr, .. } => eps_xyvr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NeighborhoodCriterion::Box {
                eps_xy,
                eps_vr,
                eps_t,
            }
            | NeighborhoodCriterion::EuclidXy {
                eps_xy,
                eps_vr,
                eps_t,
            } => eps_xy > 0.0 && eps_vr > 0.0 && eps_t > 0.0,
            NeighborhoodCriterion::EuclidXyVr {
                eps_xyvr,
                vr_scale,
                eps_t,
            } => eps_xyvr > 0.0 && vr_scale > 0.0 && eps_t > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("all epsilons must be positive: {self:?}")))
        }
    }

    pub fn is_neighbor(&self, a: &Detection, b: &Detection) -> bool {
        let dt = (a.time - b.time).abs();
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        let dv = a.radial_velocity - b.radial_velocity;
        match *self {
            NeighborhoodCriterion::Box {
                eps_xy,
                eps_vr,
                eps_t,
            } => dx.abs() < eps_xy && dy.abs() < eps_xy && dv.abs() < eps_vr && dt < eps_t,
            NeighborhoodCriterion::EuclidXy {
                eps_xy,
                eps_vr,
                eps_t,
            } => dx * dx + dy * dy < eps_xy * eps_xy && dv.abs() < eps_vr && dt < eps_t,
            NeighborhoodCriterion::EuclidXyVr {
                eps_xyvr,
                vr_scale,
                eps_t,
            } => {
                let s = dv / vr_scale;
                dx * dx + dy * dy + s * s < eps_xyvr * eps_xyvr && dt < eps_t
            }
        }
    }
}

/// Direction of the range dependency of the adaptive minimum count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeRelation {
    /// `N50 · (1 + α · (clip(r)/50 − 1))`
    #[default]
    Literal,
    /// `N50 · (1 + α · (50/clip(r) − 1))`
    Reciprocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MinNeighbors {
    Fixed {
        n_min: f64,
    },
    Adaptive {
        n_min_50: f64,
        alpha_r: f64,
        #[serde(default)]
        relation: RangeRelation,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorePointRule {
    pub v_r_min: f64,
    pub n_min: MinNeighbors,
}

impl CorePointRule {
    pub fn fixed(n_min: f64, v_r_min: f64) -> Self {
        CorePointRule {
            v_r_min,
            n_min: MinNeighbors::Fixed { n_min },
        }
    }

    pub fn adaptive(n_min_50: f64, alpha_r: f64, v_r_min: f64) -> Self {
        CorePointRule {
            v_r_min,
            n_min: MinNeighbors::Adaptive {
                n_min_50,
                alpha_r,
                relation: RangeRelation::Literal,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.v_r_min >= 0.0
            && match self.n_min {
                MinNeighbors::Fixed { n_min } => n_min >= 0.0,
                MinNeighbors::Adaptive { n_min_50, .. } => n_min_50 > 0.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid core-point rule {self:?}")))
        }
    }

    /// Minimum neighbor count (real-valued) at sensor range `r`.
    pub fn n_min_at(&self, r: f64) -> f64 {
        match self.n_min {
            MinNeighbors::Fixed { n_min } => n_min,
            MinNeighbors::Adaptive {
                n_min_50,
                alpha_r,
                relation,
            } => {
                let rc = r.clamp(RANGE_CLIP.0, RANGE_CLIP.1);
                let ratio = match relation {
                    RangeRelation::Literal => rc / 50.0,
                    RangeRelation::Reciprocal => 50.0 / rc,
                };
                n_min_50 * (1.0 + alpha_r * (ratio - 1.0))
            }
        }
    }

    pub fn is_core(&self, d: &Detection, neighbor_count: usize) -> bool {
        d.speed_abs() > self.v_r_min && neighbor_count as f64 >= self.n_min_at(d.range)
    }
}

/// Neighbor lists (sorted, self excluded) for every detection of a window.
pub fn neighbor_lists(window: &[Detection], crit: &NeighborhoodCriterion) -> Vec<Vec<usize>> {
    let reach = crit.spatial_reach();
    let grid = GridIndex::build(window.iter().map(|d| (d.x, d.y)), reach * (1.0 + 1e-6));
    (0..window.len())
        .map(|i| {
            let d = &window[i];
            let mut out = Vec::new();
            grid.for_each_candidate(d.x, d.y, reach, |j| {
                if j != i && crit.is_neighbor(d, &window[j]) {
                    out.push(j);
                }
            });
            out.sort_unstable();
            out
        })
        .collect()
}

pub fn neighbors(window: &[Detection], i: usize, crit: &NeighborhoodCriterion) -> Vec<usize> {
    let mut out: Vec<usize> = (0..window.len())
        .filter(|&j| j != i && crit.is_neighbor(&window[i], &window[j]))
        .collect();
    out.sort_unstable();
    out
}

/// Labels for one window. Input order decides label numbering.
pub fn cluster_labels(
    window: &[Detection],
    crit: &NeighborhoodCriterion,
    rule: &CorePointRule,
) -> Vec<Label> {
    let nb = neighbor_lists(window, crit);
    let core: Vec<bool> = window
        .iter()
        .zip(&nb)
        .map(|(d, n)| rule.is_core(d, n.len()))
        .collect();
    dbscan::expand(&nb, &core)
}

pub fn cluster_window(
    window: &[Detection],
    crit: &NeighborhoodCriterion,
    rule: &CorePointRule,
) -> ClusterAssignment {
    let (lo, hi) = window.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| {
        (a.min(d.time), b.max(d.time))
    });
    let bounds = if window.is_empty() { (0.0, 0.0) } else { (lo, hi) };
    ClusterAssignment::new(
        bounds,
        (0..window.len()).collect(),
        cluster_labels(window, crit, rule),
    )
}

/// Window `[start, end]` and the slice of the (time-sorted) log inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpan {
    pub start: f64,
    pub end: f64,
    pub first: usize,
    pub last: usize,
}

impl WindowSpan {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.first..self.last
    }
}

pub fn check_sorted(log: &[Detection]) -> Result<()> {
    match log.windows(2).position(|w| w[1].time < w[0].time) {
        Some(i) => Err(Error::Unsorted { index: i + 1 }),
        None => Ok(()),
    }
}

/// Sliding windows of length `eps_t` advanced by `hop`, starting at the
/// first detection. The last window is the first one reaching the final
/// detection.
pub fn window_spans(times: &[f64], eps_t: f64, hop: f64) -> Result<Vec<WindowSpan>> {
    if !(eps_t > 0.0 && hop > 0.0) {
        return Err(Error::Config("window length and hop must be positive".into()));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Unsorted { index: i + 1 });
    }
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return Ok(Vec::new());
    };
    let count = if t1 - t0 <= eps_t {
        1
    } else {
        let x = (t1 - t0 - eps_t) / hop;
        let steps = if (x - x.round()).abs() < 1e-6 {
            x.round()
        } else {
            x.ceil()
        };
        steps as usize + 1
    };
    const TOL: f64 = 1e-9;
    Ok((0..count)
        .map(|k| {
            let start = t0 + k as f64 * hop;
            let end = start + eps_t;
            WindowSpan {
                start,
                end,
                first: times.partition_point(|&t| t < start - TOL),
                last: times.partition_point(|&t| t <= end + TOL),
            }
        })
        .collect())
}

/// Clusters every window of a time-sorted log independently. Windows may
/// be processed in parallel; the output is in window order.
pub fn cluster_stream(
    log: &[Detection],
    crit: &NeighborhoodCriterion,
    rule: &CorePointRule,
    hop: f64,
) -> Result<Vec<ClusterAssignment>> {
    check_sorted(log)?;
    let times: Vec<f64> = log.iter().map(|d| d.time).collect();
    let spans = window_spans(&times, crit.eps_t(), hop)?;
    Ok(spans
        .par_iter()
        .map(|s| {
            let labels = cluster_labels(&log[s.range()], crit, rule);
            ClusterAssignment::new((s.start, s.end), s.range().collect(), labels)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::densify;

    fn det(x: f64, y: f64, vr: f64, t: f64) -> Detection {
        Detection {
            time: t,
            sensor_id: 0,
            range: 50.0,
            azimuth: 0.0,
            radial_velocity: vr,
            amplitude: 0.0,
            x,
            y,
            gt_label: None,
        }
    }

    const BOX1: NeighborhoodCriterion = NeighborhoodCriterion::Box {
        eps_xy: 1.0,
        eps_vr: 5.0,
        eps_t: 0.25,
    };

    #[test]
    fn adaptive_count_fixed_point_at_50m() {
        for a in [0.0, 0.5, 0.99, 2.0] {
            assert_eq!(CorePointRule::adaptive(3.87, a, 0.0).n_min_at(50.0), 3.87);
        }
    }

    #[test]
    fn adaptive_count_clips() {
        let rule = CorePointRule::adaptive(3.0, 1.0, 0.0);
        assert!((rule.n_min_at(25.0) - 1.5).abs() < 1e-12);
        assert!((rule.n_min_at(10.0) - 1.5).abs() < 1e-12);
        assert!((rule.n_min_at(200.0) - 7.5).abs() < 1e-12);
        let recip = CorePointRule {
            n_min: MinNeighbors::Adaptive {
                n_min_50: 3.0,
                alpha_r: 1.0,
                relation: RangeRelation::Reciprocal,
            },
            v_r_min: 0.0,
        };
        assert!((recip.n_min_at(25.0) - 6.0).abs() < 1e-12);
        assert!((recip.n_min_at(125.0) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn coincident_points_neighbor_under_all() {
        let a = det(1.0, 2.0, 0.5, 0.1);
        for c in [
            BOX1,
            NeighborhoodCriterion::EuclidXy {
                eps_xy: 1.0,
                eps_vr: 1.0,
                eps_t: 0.25,
            },
            NeighborhoodCriterion::EuclidXyVr {
                eps_xyvr: 1.0,
                vr_scale: 1.0,
                eps_t: 0.25,
            },
        ] {
            assert!(c.is_neighbor(&a, &a));
        }
    }

    #[test]
    fn box_versus_euclid_diagonal() {
        let a = det(0.0, 0.0, 0.0, 0.0);
        let b = det(0.9, 0.9, 0.0, 0.0);
        assert!(BOX1.is_neighbor(&a, &b));
        let e = NeighborhoodCriterion::EuclidXy {
            eps_xy: 1.0,
            eps_vr: 5.0,
            eps_t: 0.25,
        };
        assert!(!e.is_neighbor(&a, &b));
    }

    #[test]
    fn scaled_velocity_axis() {
        let c = NeighborhoodCriterion::EuclidXyVr {
            eps_xyvr: 1.0,
            vr_scale: 2.0,
            eps_t: 0.25,
        };
        let a = det(0.0, 0.0, 0.0, 0.0);
        assert!(c.is_neighbor(&a, &det(0.0, 0.0, 1.9, 0.0)));
        assert!(!c.is_neighbor(&a, &det(0.0, 0.0, 2.1, 0.0)));
    }

    #[test]
    fn time_is_strict() {
        let a = det(0.0, 0.0, 0.0, 0.0);
        assert!(!BOX1.is_neighbor(&a, &det(0.0, 0.0, 0.0, 0.25)));
        assert!(BOX1.is_neighbor(&a, &det(0.0, 0.0, 0.0, 0.2499)));
    }

    #[test]
    fn all_isolated_is_noise() {
        let w: Vec<Detection> = (0..5).map(|i| det(10.0 * i as f64, 0.0, 3.0, 0.0)).collect();
        let a = cluster_window(&w, &BOX1, &CorePointRule::fixed(1.0, 0.0));
        assert!(a.labels.iter().all(|l| l.is_none()));
    }

    #[test]
    fn four_coincident_points_form_one_cluster() {
        let w = vec![det(1.0, 1.0, 2.0, 0.0); 4];
        let a = cluster_window(&w, &BOX1, &CorePointRule::fixed(3.0, 0.4));
        assert_eq!(a.labels, vec![Some(0); 4]);
    }

    #[test]
    fn velocity_gate_blocks_slow_cores() {
        let w = vec![det(1.0, 1.0, 0.2, 0.0); 4];
        let a = cluster_window(&w, &BOX1, &CorePointRule::fixed(3.0, 0.4));
        assert!(a.labels.iter().all(|l| l.is_none()));
    }

    /// Core/border/noise layout of the classic DBSCAN illustration with
    /// N_min = 2 (neighbors excluding the point itself): a dense chain of
    /// cores, two border points hanging off its ends, and a lone outlier.
    #[test]
    fn core_border_noise_figure() {
        let c = NeighborhoodCriterion::EuclidXy {
            eps_xy: 1.0,
            eps_vr: 10.0,
            eps_t: 1.0,
        };
        let pts = [
            (0.0, 0.0), // core
            (0.6, 0.3), // core
            (0.3, 0.7), // core
            (1.1, 0.8), // core
            (1.9, 1.2), // border: only neighbor is point 3
            (-0.9, -0.2), // border: only neighbor is point 0
            (4.0, 4.0), // noise
        ];
        let w: Vec<Detection> = pts.iter().map(|&(x, y)| det(x, y, 1.0, 0.0)).collect();
        let rule = CorePointRule::fixed(2.0, 0.0);
        let nb = neighbor_lists(&w, &c);
        let core: Vec<bool> = w.iter().zip(&nb).map(|(d, n)| rule.is_core(d, n.len())).collect();
        assert_eq!(core, vec![true, true, true, true, false, false, false]);
        let labels = cluster_window(&w, &c, &rule).labels;
        assert_eq!(
            labels,
            vec![Some(0), Some(0), Some(0), Some(0), Some(0), Some(0), None]
        );
    }

    #[test]
    fn short_log_single_window() {
        let times = [0.0, 0.1, 0.2];
        let spans = window_spans(&times, 0.25, 0.05).unwrap();
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].range(), 0..3);
    }

    #[test]
    fn window_count_uniform_log() {
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let spans = window_spans(&times, 0.25, 0.05).unwrap();
        assert_eq!(spans.len(), 16);
        assert!(spans.last().unwrap().end >= 1.0 - 1e-9);
    }

    #[test]
    fn unsorted_rejected() {
        let log = [det(0.0, 0.0, 1.0, 0.5), det(0.0, 0.0, 1.0, 0.1)];
        assert!(matches!(
            cluster_stream(&log, &BOX1, &CorePointRule::fixed(1.0, 0.0), 0.05),
            Err(Error::Unsorted { index: 1 })
        ));
    }

    #[test]
    fn bursts_never_share_a_cluster() {
        let mut log = Vec::new();
        for k in 0..4 {
            log.push(det(0.0, 0.0, 2.0, 0.01 * k as f64));
        }
        for k in 0..4 {
            log.push(det(0.0, 0.0, 2.0, 1.0 + 0.01 * k as f64));
        }
        let out = cluster_stream(&log, &BOX1, &CorePointRule::fixed(2.0, 0.0), 0.05).unwrap();
        for w in &out {
            for (a, la) in w.indices.iter().zip(&w.labels) {
                for (b, lb) in w.indices.iter().zip(&w.labels) {
                    if la.is_some() && la == lb {
                        assert_eq!(*a < 4, *b < 4);
                    }
                }
            }
        }
    }

    #[test]
    fn labels_are_dense() {
        let mut w = vec![det(0.0, 0.0, 2.0, 0.0); 3];
        w.extend(vec![det(10.0, 0.0, 2.0, 0.0); 3]);
        let a = cluster_window(&w, &BOX1, &CorePointRule::fixed(2.0, 0.0));
        assert!(a.is_dense());
        assert_eq!(densify(&a.labels), a.labels);
        assert_eq!(a.num_clusters(), 2);
    }
}
