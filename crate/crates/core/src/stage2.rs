//! Cluster merging.
//!
//! Stage-1 clusters are summarized (per-time-step centers, time span,
//! estimated full velocity) and clustered once more with DBSCAN, where two
//! summaries are neighbors if either their estimated velocities and closest
//! members agree, or their predicted centers continue into each other.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::coords::wrap_angle;
use crate::dbscan;
use crate::error::{Error, Result};
use crate::spline::Interpolant;
use crate::types::{densify, mount_for, Detection, Label, SensorMount};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMethod {
    Velocity,
    Continuation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub min_inliers: usize,
    /// Residual bound (m/s) for a member to count as an inlier.
    pub inlier_threshold: f64,
    /// Maximum trimming rounds; each round drops the worst member.
    pub max_rounds: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            min_inliers: 3,
            inlier_threshold: 0.5,
            max_rounds: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub method: MergeMethod,
    pub eps_d: f64,
    /// Radians; only used by the velocity method.
    pub eps_phi: f64,
    pub eps_v: f64,
    pub eps_t2: f64,
    pub n_min: f64,
    /// Bin width used to group members into time steps.
    pub time_step: f64,
    /// Resampling step of the fitted center trajectory.
    pub resample_step: f64,
    pub solver: SolverConfig,
}

impl MergeConfig {
    /// Cluster continuation with `ε_pred = 0.94`, `ε_v = 2.72`.
    pub fn continuation() -> Self {
        MergeConfig {
            method: MergeMethod::Continuation,
            eps_d: 0.94,
            eps_phi: PI,
            eps_v: 2.72,
            eps_t2: 0.35,
            n_min: 1.0,
            time_step: 0.05,
            resample_step: 0.01,
            solver: SolverConfig::default(),
        }
    }

    /// Velocity estimate with `ε_d = 1.00`, `ε_φ = 23.11°`, `ε_v = 1.04`.
    pub fn velocity() -> Self {
        MergeConfig {
            method: MergeMethod::Velocity,
            eps_d: 1.00,
            eps_phi: 23.11f64.to_radians(),
            eps_v: 1.04,
            ..Self::continuation()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.eps_d,
            self.eps_phi,
            self.eps_v,
            self.eps_t2,
            self.time_step,
            self.resample_step,
            self.solver.inlier_threshold,
        ];
        if pos.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config(format!("merge thresholds must be positive: {self:?}")));
        }
        if self.solver.min_inliers < 2 {
            return Err(Error::Config("solver min_inliers must be at least 2".into()));
        }
        Ok(())
    }
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self::continuation()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    pub vx: f64,
    pub vy: f64,
    pub inliers: usize,
}

impl VelocityEstimate {
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

/// One radial-velocity observation: ray bearing and measured speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub bearing: f64,
    pub radial_velocity: f64,
}

impl Ray {
    /// Ray of a detection as seen from its sensor, in the vehicle frame.
    pub fn of(d: &Detection, mount: &SensorMount) -> Self {
        Ray {
            bearing: wrap_angle(d.azimuth + mount.yaw),
            radial_velocity: d.radial_velocity,
        }
    }
}

fn solve(rays: &[Ray], use_: &[bool]) -> Option<(f64, f64)> {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut first: Option<f64> = None;
    let mut spread = false;
    for (r, _) in rays.iter().zip(use_).filter(|(_, u)| **u) {
        let (s, c) = r.bearing.sin_cos();
        a11 += c * c;
        a12 += c * s;
        a22 += s * s;
        b1 += c * r.radial_velocity;
        b2 += s * r.radial_velocity;
        match first {
            None => first = Some(r.bearing),
            Some(f) => spread |= (r.bearing - f).sin().abs() > 1e-6,
        }
    }
    let det = a11 * a22 - a12 * a12;
    if !spread || det <= 0.0 {
        return None;
    }
    Some(((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det))
}

fn residual(r: &Ray, v: (f64, f64)) -> f64 {
    let (s, c) = r.bearing.sin_cos();
    r.radial_velocity - (v.0 * c + v.1 * s)
}

/// Members tried as seed pairs; larger clusters use an evenly spaced subset.
const SEED_MEMBERS: usize = 48;

/// Exact fit through two rays, or `None` when they are parallel.
fn through_pair(a: &Ray, b: &Ray) -> Option<(f64, f64)> {
    let (sa, ca) = a.bearing.sin_cos();
    let (sb, cb) = b.bearing.sin_cos();
    let det = ca * sb - sa * cb;
    if (a.bearing - b.bearing).sin().abs() <= 1e-6 || det == 0.0 {
        return None;
    }
    Some((
        (a.radial_velocity * sb - b.radial_velocity * sa) / det,
        (ca * b.radial_velocity - cb * a.radial_velocity) / det,
    ))
}

/// Members within the threshold of the best two-ray fit: most inliers,
/// then smallest summed inlier residual, then first pair in index order.
fn consensus_seed(rays: &[Ray], threshold: f64) -> Option<Vec<bool>> {
    let n = rays.len();
    let m = n.min(SEED_MEMBERS);
    let picks: Vec<usize> = (0..m).map(|k| k * n / m).collect();
    let mut best: Option<(usize, f64, (f64, f64))> = None;
    for (a, &i) in picks.iter().enumerate() {
        for &j in &picks[a + 1..] {
            let Some(v) = through_pair(&rays[i], &rays[j]) else {
                continue;
            };
            let (mut count, mut cost) = (0, 0.0);
            for r in rays {
                let e = residual(r, v).abs();
                if e <= threshold {
                    count += 1;
                    cost += e;
                }
            }
            if best.is_none_or(|(bc, bs, _)| count > bc || (count == bc && cost < bs)) {
                best = Some((count, cost, v));
            }
        }
    }
    let (_, _, v) = best?;
    Some(rays.iter().map(|r| residual(r, v).abs() <= threshold).collect())
}

/// Least-squares fit of `v_r = v_x cos θ + v_y sin θ`. The fit starts from
/// the largest set of members consistent with some two-ray solution, then
/// the worst member is trimmed while any residual exceeds the threshold;
/// the result is refit on every member consistent with the trimmed
/// solution. Deterministic. `None` when the rays are all parallel or too
/// few inliers remain.
pub fn estimate_velocity(rays: &[Ray], cfg: &SolverConfig) -> Option<VelocityEstimate> {
    let mut active = consensus_seed(rays, cfg.inlier_threshold)?;
    let mut v = solve(rays, &active).or_else(|| {
        active = vec![true; rays.len()];
        solve(rays, &active)
    })?;
    for _ in 0..cfg.max_rounds {
        let worst = rays
            .iter()
            .enumerate()
            .filter(|(i, _)| active[*i])
            .map(|(i, r)| (i, residual(r, v).abs()))
            .fold(None, |acc: Option<(usize, f64)>, x| match acc {
                Some(a) if a.1 >= x.1 => Some(a),
                _ => Some(x),
            });
        match worst {
            Some((i, res)) if res > cfg.inlier_threshold => {
                active[i] = false;
                match solve(rays, &active) {
                    Some(nv) => v = nv,
                    None => break,
                }
            }
            _ => break,
        }
    }
    let consensus: Vec<bool> = rays
        .iter()
        .map(|r| residual(r, v).abs() <= cfg.inlier_threshold)
        .collect();
    let inliers = consensus.iter().filter(|&&c| c).count();
    if inliers < cfg.min_inliers {
        return None;
    }
    let (vx, vy) = solve(rays, &consensus)?;
    Some(VelocityEstimate { vx, vy, inliers })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Center {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    /// Stage-1 label of the cluster.
    pub cluster_id: u32,
    /// Indices into the detections handed to [`merge_clusters`].
    pub members: Vec<usize>,
    pub centers: Vec<Center>,
    pub t_first: f64,
    pub t_last: f64,
    pub velocity: Option<VelocityEstimate>,
}

impl ClusterSummary {
    pub fn build(
        cluster_id: u32,
        members: Vec<usize>,
        dets: &[Detection],
        mounts: &[SensorMount],
        cfg: &MergeConfig,
    ) -> Self {
        let mut bins: BTreeMap<i64, (f64, f64, f64, usize)> = BTreeMap::new();
        for &i in &members {
            let d = &dets[i];
            let e = bins
                .entry((d.time / cfg.time_step).round() as i64)
                .or_insert((0.0, 0.0, 0.0, 0));
            e.0 += d.time;
            e.1 += d.x;
            e.2 += d.y;
            e.3 += 1;
        }
        let centers: Vec<Center> = bins
            .values()
            .map(|&(t, x, y, n)| {
                let n = n as f64;
                Center {
                    t: t / n,
                    x: x / n,
                    y: y / n,
                }
            })
            .collect();
        let rays: Vec<Ray> = members
            .iter()
            .map(|&i| Ray::of(&dets[i], &mount_for(mounts, dets[i].sensor_id)))
            .collect();
        let (t_first, t_last) = members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &i| {
            (a.0.min(dets[i].time), a.1.max(dets[i].time))
        });
        ClusterSummary {
            cluster_id,
            velocity: estimate_velocity(&rays, &cfg.solver),
            members,
            centers,
            t_first,
            t_last,
        }
    }

    pub fn time_steps(&self) -> usize {
        self.centers.len()
    }
}

/// Positions predicted at the requested times and the speed of the fitted
/// trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub positions: Vec<(f64, f64)>,
    pub velocity: (f64, f64),
}

impl Prediction {
    pub fn speed(&self) -> f64 {
        self.velocity.0.hypot(self.velocity.1)
    }
}

/// Centered three-point moving average over (t, x, y); end points have no
/// symmetric neighborhood and stay unsmoothed.
fn smooth(centers: &[Center]) -> Vec<Center> {
    let n = centers.len();
    (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                centers[i].clone()
            } else {
                let w = &centers[i - 1..=i + 1];
                Center {
                    t: w.iter().map(|c| c.t).sum::<f64>() / 3.0,
                    x: w.iter().map(|c| c.x).sum::<f64>() / 3.0,
                    y: w.iter().map(|c| c.y).sum::<f64>() / 3.0,
                }
            }
        })
        .collect()
}

/// Extrapolates the smoothed, spline-resampled center trajectory with the
/// gradient at its last sample.
pub fn predict_centers(centers: &[Center], at_times: &[f64], resample_step: f64) -> Prediction {
    assert!(!centers.is_empty(), "prediction needs at least one center");
    let s = smooth(centers);
    let last = s.last().unwrap().clone();
    let velocity = if s.len() < 2 {
        (0.0, 0.0)
    } else {
        let t: Vec<f64> = s.iter().map(|c| c.t).collect();
        let fx = Interpolant::new(&t, &s.iter().map(|c| c.x).collect::<Vec<_>>());
        let fy = Interpolant::new(&t, &s.iter().map(|c| c.y).collect::<Vec<_>>());
        let span = last.t - t[0];
        let steps = (span / resample_step).floor().max(1.0);
        // The resampled grid ends exactly at the last knot; its last step
        // is the gradient estimate.
        let h = (span / steps).min(resample_step);
        let prev = last.t - h;
        (
            (fx.eval(last.t) - fx.eval(prev)) / h,
            (fy.eval(last.t) - fy.eval(prev)) / h,
        )
    };
    let positions = at_times
        .iter()
        .map(|&at| {
            let dt = at - last.t;
            (last.x + velocity.0 * dt, last.y + velocity.1 * dt)
        })
        .collect();
    Prediction {
        positions,
        velocity,
    }
}

/// Times at the beginning, middle and end of the merge frame.
pub fn prediction_times(frame_end: f64, eps_t2: f64) -> [f64; 3] {
    [frame_end - eps_t2, frame_end - eps_t2 / 2.0, frame_end]
}

/// Gap between two closed time spans, zero if they overlap.
pub fn span_gap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.1).max(b.0 - a.1).max(0.0)
}

pub fn heading_difference(a: &VelocityEstimate, b: &VelocityEstimate) -> f64 {
    wrap_angle(a.vy.atan2(a.vx) - b.vy.atan2(b.vx)).abs()
}

/// Per-summary data needed by the neighbor test.
struct Prepared<'a> {
    summary: &'a ClusterSummary,
    /// Member positions inside the merge frame.
    frame_points: Vec<(f64, f64)>,
    prediction: Prediction,
}

fn min_member_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut best = f64::INFINITY;
    for p in a {
        for q in b {
            best = best.min((p.0 - q.0).hypot(p.1 - q.1));
        }
    }
    best
}

fn are_neighbors(a: &Prepared, b: &Prepared, cfg: &MergeConfig) -> bool {
    let (sa, sb) = (a.summary, b.summary);
    if span_gap((sa.t_first, sa.t_last), (sb.t_first, sb.t_last)) >= cfg.eps_t2 {
        return false;
    }
    match cfg.method {
        MergeMethod::Velocity => {
            let (Some(va), Some(vb)) = (&sa.velocity, &sb.velocity) else {
                return false;
            };
            heading_difference(va, vb) < cfg.eps_phi
                && (va.speed() - vb.speed()).abs() < cfg.eps_v
                && min_member_distance(&a.frame_points, &b.frame_points) < cfg.eps_d
        }
        MergeMethod::Continuation => {
            // A cluster seen in a single time step has no usable speed.
            let speed_ok = sa.time_steps() < 2
                || sb.time_steps() < 2
                || (a.prediction.speed() - b.prediction.speed()).abs() < cfg.eps_v;
            let d = a
                .prediction
                .positions
                .iter()
                .zip(&b.prediction.positions)
                .map(|(p, q)| (p.0 - q.0).hypot(p.1 - q.1))
                .fold(f64::INFINITY, f64::min);
            speed_ok && d < cfg.eps_d
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub labels: Vec<Label>,
    pub summaries: Vec<ClusterSummary>,
    /// Merged cluster of each summary (dense, in summary order).
    pub merged_ids: Vec<u32>,
}

/// Merges stage-1 clusters of `dets` observed up to `frame_end`. Noise
/// stays noise; every stage-1 cluster ends up inside exactly one merged
/// cluster. Output labels are renumbered by first appearance.
pub fn merge_clusters(
    dets: &[Detection],
    labels: &[Label],
    frame_end: f64,
    cfg: &MergeConfig,
    mounts: &[SensorMount],
) -> MergeOutcome {
    assert_eq!(dets.len(), labels.len());
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            groups.entry(*l).or_default().push(i);
        }
    }
    // Canonical order (smallest member index) keeps the result independent
    // of the stage-1 numbering.
    let mut summaries: Vec<ClusterSummary> = groups
        .into_iter()
        .map(|(id, m)| ClusterSummary::build(id, m, dets, mounts, cfg))
        .collect();
    summaries.sort_by_key(|s| s.members[0]);

    let times = prediction_times(frame_end, cfg.eps_t2);
    let frame_start = frame_end - cfg.eps_t2;
    let prepared: Vec<Prepared> = summaries
        .iter()
        .map(|s| Prepared {
            summary: s,
            frame_points: s
                .members
                .iter()
                .filter(|&&i| dets[i].time >= frame_start)
                .map(|&i| (dets[i].x, dets[i].y))
                .collect(),
            prediction: predict_centers(&s.centers, &times, cfg.resample_step),
        })
        .collect();
    let n = prepared.len();
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if are_neighbors(&prepared[i], &prepared[j], cfg) {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
    }
    let core: Vec<bool> = neighbors
        .iter()
        .map(|nb| nb.len() as f64 >= cfg.n_min)
        .collect();
    let merged = dbscan::expand(&neighbors, &core);
    let mut next = merged.iter().flatten().max().map_or(0, |m| m + 1);
    let merged_ids: Vec<u32> = merged
        .into_iter()
        .map(|m| {
            m.unwrap_or_else(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    let mut out: Vec<Label> = vec![None; dets.len()];
    for (s, &m) in summaries.iter().zip(&merged_ids) {
        for &i in &s.members {
            out[i] = Some(m);
        }
    }
    MergeOutcome {
        labels: densify(&out),
        summaries,
        merged_ids,
    }
}
