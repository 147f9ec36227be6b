//! End-to-end processing: filter → point clustering → cluster merging →
//! scoring, plus the configuration file and dataset layout shared by the
//! command-line tool.

use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coords::{compensate_log, to_frame, Frame, FrameSpec};
use crate::error::{Error, Result};
use crate::filter::{removal_mask, FilterConfig, Quantifier};
use crate::io;
use crate::score::{preclusters_from_ground_truth, score_assignments, ScoreReport, Truth};
use crate::simgen::Scene;
use crate::stage1::{
    check_sorted, cluster_labels, window_spans, CorePointRule, MinNeighbors, NeighborhoodCriterion,
    RangeRelation,
};
use crate::stage2::{merge_clusters, Center, MergeConfig, MergeMethod, MergeOutcome, SolverConfig, VelocityEstimate};
use crate::types::{densify, validate_log, ClusterAssignment, Detection, EgoPose, Label, ParamSet, SensorMount};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub frame: Frame,
    pub hop: f64,
    pub compensate_doppler: bool,
    pub seed: u64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            frame: Frame::Fcs,
            hop: crate::stage1::DEFAULT_HOP,
            compensate_doppler: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub enabled: bool,
    pub eta1: f64,
    pub d_xy: f64,
    pub dt: f64,
    pub quantifier: Quantifier,
}

impl Default for FilterSection {
    fn default() -> Self {
        let f = FilterConfig::default();
        FilterSection {
            enabled: true,
            eta1: f.eta1,
            d_xy: f.d_xy,
            dt: f.dt,
            quantifier: f.quantifier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    Box,
    EuclidXy,
    EuclidXyVr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Section {
    pub criterion: CriterionKind,
    pub eps_xy: f64,
    pub eps_vr: f64,
    pub eps_xyvr: f64,
    pub vr_scale: f64,
    pub eps_t: f64,
}

impl Default for Stage1Section {
    fn default() -> Self {
        Stage1Section {
            criterion: CriterionKind::EuclidXyVr,
            eps_xy: 1.0,
            eps_vr: 5.0,
            eps_xyvr: 1.04,
            vr_scale: 1.03,
            eps_t: crate::stage1::DEFAULT_EPS_T,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoreMode {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoreSection {
    pub mode: CoreMode,
    pub n_min: f64,
    pub n_min_50: f64,
    pub alpha_r: f64,
    pub relation: RangeRelation,
    pub v_r_min: f64,
}

impl Default for CoreSection {
    fn default() -> Self {
        CoreSection {
            mode: CoreMode::Adaptive,
            n_min: 3.0,
            n_min_50: 3.87,
            alpha_r: 0.99,
            relation: RangeRelation::Literal,
            v_r_min: 1.00,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeSection {
    pub enabled: bool,
    pub method: MergeMethod,
    pub eps_d: f64,
    pub eps_phi_deg: f64,
    pub eps_v: f64,
    pub eps_t2: f64,
    pub n_min: f64,
    pub time_step: f64,
    pub resample_step: f64,
    pub min_inliers: usize,
    pub inlier_threshold: f64,
    pub max_rounds: usize,
}

impl Default for MergeSection {
    fn default() -> Self {
        MergeSection::from_config(&MergeConfig::continuation(), true)
    }
}

impl MergeSection {
    pub fn from_config(m: &MergeConfig, enabled: bool) -> Self {
        MergeSection {
            enabled,
            method: m.method,
            eps_d: m.eps_d,
            eps_phi_deg: m.eps_phi.to_degrees(),
            eps_v: m.eps_v,
            eps_t2: m.eps_t2,
            n_min: m.n_min,
            time_step: m.time_step,
            resample_step: m.resample_step,
            min_inliers: m.solver.min_inliers,
            inlier_threshold: m.solver.inlier_threshold,
            max_rounds: m.solver.max_rounds,
        }
    }
}

/// Complete pipeline configuration, one TOML section per stage. Every
/// field has a default, so an empty file is a valid configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub pipeline: PipelineSection,
    pub filter: FilterSection,
    pub stage1: Stage1Section,
    pub core: CoreSection,
    pub merge: MergeSection,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pipeline.hop > 0.0) {
            return Err(Error::Config("pipeline.hop must be positive".into()));
        }
        if self.filter.enabled {
            self.filter_config().validate()?;
        }
        self.criterion().validate()?;
        self.core_rule().validate()?;
        if let Some(m) = self.merge_config() {
            m.validate()?;
        }
        Ok(())
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            eta1: self.filter.eta1,
            d_xy: self.filter.d_xy,
            dt: self.filter.dt,
            quantifier: self.filter.quantifier,
        }
    }

    pub fn criterion(&self) -> NeighborhoodCriterion {
        let s = &self.stage1;
        match s.criterion {
            CriterionKind::Box => NeighborhoodCriterion::Box {
                eps_xy: s.eps_xy,
                eps_vr: s.eps_vr,
                eps_t: s.eps_t,
            },
            CriterionKind::EuclidXy => NeighborhoodCriterion::EuclidXy {
                eps_xy: s.eps_xy,
                eps_vr: s.eps_vr,
                eps_t: s.eps_t,
            },
            CriterionKind::EuclidXyVr => NeighborhoodCriterion::EuclidXyVr {
                eps_xyvr: s.eps_xyvr,
                vr_scale: s.vr_scale,
                eps_t: s.eps_t,
            },
        }
    }

    pub fn core_rule(&self) -> CorePointRule {
        let c = &self.core;
        CorePointRule {
            v_r_min: c.v_r_min,
            n_min: match c.mode {
                CoreMode::Fixed => MinNeighbors::Fixed { n_min: c.n_min },
                CoreMode::Adaptive => MinNeighbors::Adaptive {
                    n_min_50: c.n_min_50,
                    alpha_r: c.alpha_r,
                    relation: c.relation,
                },
            },
        }
    }

    pub fn merge_config(&self) -> Option<MergeConfig> {
        let m = &self.merge;
        m.enabled.then(|| MergeConfig {
            method: m.method,
            eps_d: m.eps_d,
            eps_phi: m.eps_phi_deg.to_radians(),
            eps_v: m.eps_v,
            eps_t2: m.eps_t2,
            n_min: m.n_min,
            time_step: m.time_step,
            resample_step: m.resample_step,
            solver: SolverConfig {
                min_inliers: m.min_inliers,
                inlier_threshold: m.inlier_threshold,
                max_rounds: m.max_rounds,
            },
        })
    }

    /// Overwrites the tunable fields named in `params`. Unknown names are
    /// an error.
    pub fn apply_params(&mut self, params: &ParamSet) -> Result<()> {
        for (name, &v) in params.iter() {
            match name.as_str() {
                "eps_xy" => self.stage1.eps_xy = v,
                "eps_vr" => self.stage1.eps_vr = v,
                "eps_xyvr" => self.stage1.eps_xyvr = v,
                "vr_scale" => self.stage1.vr_scale = v,
                "n_min" => self.core.n_min = v,
                "n_min_50" => self.core.n_min_50 = v,
                "alpha_r" => self.core.alpha_r = v,
                "v_r_min" => self.core.v_r_min = v,
                "eps_d" => self.merge.eps_d = v,
                "eps_phi_deg" => self.merge.eps_phi_deg = v,
                "eps_v" => self.merge.eps_v = v,
                "eps_t2" => self.merge.eps_t2 = v,
                "merge_n_min" => self.merge.n_min = v,
                "eta1" => self.filter.eta1 = v,
                "d_xy" => self.filter.d_xy = v,
                other => return Err(Error::Config(format!("unknown parameter '{other}'"))),
            }
        }
        Ok(())
    }
}

/// Detection log with its ego poses and sensor mounts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub detections: Vec<Detection>,
    pub poses: Vec<EgoPose>,
    pub mounts: Vec<SensorMount>,
}

impl From<Scene> for Dataset {
    fn from(s: Scene) -> Self {
        Dataset {
            detections: s.detections,
            poses: s.poses,
            mounts: s.mounts,
        }
    }
}

impl Dataset {
    /// Reads `detections.csv` (or `detections.jsonl`), plus optional
    /// `poses.csv` and `sensors.csv`, from a directory. Missing poses mean
    /// a stationary ego vehicle.
    pub fn load(dir: &Path) -> Result<Self> {
        let csv = dir.join("detections.csv");
        let jsonl = dir.join("detections.jsonl");
        let detections = if csv.exists() {
            io::read_detections(&csv)?
        } else if jsonl.exists() {
            io::read_detections(&jsonl)?
        } else if dir.is_file() {
            io::read_detections(dir)?
        } else {
            return Err(Error::InvalidInput(format!(
                "{}: no detections.csv or detections.jsonl",
                dir.display()
            )));
        };
        let poses_path = dir.join("poses.csv");
        let poses = if poses_path.exists() {
            io::read_poses_csv(&poses_path)?
        } else {
            Vec::new()
        };
        let sensors_path = dir.join("sensors.csv");
        let mounts = if sensors_path.exists() {
            io::read_sensors_csv(&sensors_path)?
        } else {
            Vec::new()
        };
        Ok(Dataset {
            detections,
            poses,
            mounts,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_detections(&dir.join("detections.csv"), &self.detections)?;
        io::write_poses_csv(&dir.join("poses.csv"), &self.poses)?;
        io::write_sensors_csv(&dir.join("sensors.csv"), &self.mounts)
    }

    /// Pose log to use for frame transforms: the recorded one, or a
    /// stationary pair spanning the detections.
    pub fn effective_poses(&self) -> Vec<EgoPose> {
        if !self.poses.is_empty() {
            return self.poses.clone();
        }
        let t0 = self.detections.first().map_or(0.0, |d| d.time);
        let t1 = self.detections.last().map_or(0.0, |d| d.time);
        vec![EgoPose::stationary(t0), EgoPose::stationary(t1.max(t0) + 1.0)]
    }

    pub fn has_ground_truth(&self) -> bool {
        self.detections.iter().any(|d| d.gt_label.is_some())
    }

    pub fn check(&self) -> Result<()> {
        let report = validate_log(&self.detections);
        if let Some(v) = report.violations.first() {
            return Err(Error::InvalidInput(format!(
                "detection {}: {} ({}); {} violation(s) in total",
                v.index,
                v.kind,
                v.detail,
                report.violations.len()
            )));
        }
        check_sorted(&self.detections)
    }
}

fn anchor(poses: &[EgoPose], t: f64) -> f64 {
    let lo = poses.first().map_or(t, |p| p.time);
    let hi = poses.last().map_or(t, |p| p.time);
    t.clamp(lo, hi)
}

#[derive(Debug, Clone)]
pub struct PreparedWindow {
    pub start: f64,
    pub end: f64,
    /// Log indices covered by the window.
    pub range: Range<usize>,
    /// Window detections in the window frame (anchored at its end).
    pub dets: Vec<Detection>,
    /// Positions (within the window) of detections kept by the filter.
    pub kept: Vec<usize>,
    pub kept_dets: Vec<Detection>,
    /// Latest earlier window ending no later than this one starts.
    pub predecessor: Option<usize>,
    /// Positions (within the predecessor) of its detections strictly
    /// before this window, and those detections in this window's frame.
    pub pred_positions: Vec<usize>,
    pub pred_dets: Vec<Detection>,
}

/// A dataset cut into frame-transformed windows, with the filter applied
/// and optimization targets precomputed. Reused across parameter sets.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub log_len: usize,
    pub windows: Vec<PreparedWindow>,
    /// Whole log in the global frame (anchored at the log end).
    pub global: Vec<Detection>,
    pub removed: Vec<bool>,
    pub target: Option<Vec<Truth>>,
    pub mounts: Vec<SensorMount>,
    pub filter_seconds: f64,
}

fn compensated(ds: &Dataset, cfg: &PipelineConfig, poses: &[EgoPose]) -> Result<Vec<Detection>> {
    if cfg.pipeline.compensate_doppler {
        compensate_log(&ds.detections, &ds.mounts, poses)
    } else {
        Ok(ds.detections.clone())
    }
}

fn global_frame(log: &[Detection], poses: &[EgoPose], mode: Frame) -> Result<Vec<Detection>> {
    let t_end = log.last().map_or(0.0, |d| d.time);
    to_frame(
        log,
        poses,
        &FrameSpec {
            mode,
            reference_time: anchor(poses, t_end),
        },
    )
}

/// The whole log, Doppler-compensated if configured, in the global frame
/// (anchored at the log end). This is what the filter and its tuner see.
pub fn global_log(ds: &Dataset, cfg: &PipelineConfig) -> Result<Vec<Detection>> {
    ds.check()?;
    let poses = ds.effective_poses();
    global_frame(&compensated(ds, cfg, &poses)?, &poses, cfg.pipeline.frame)
}

pub fn prepare(ds: &Dataset, cfg: &PipelineConfig) -> Result<Prepared> {
    ds.check()?;
    let poses = ds.effective_poses();
    let log = compensated(ds, cfg, &poses)?;
    let mode = cfg.pipeline.frame;
    let global = global_frame(&log, &poses, mode)?;
    let started = Instant::now();
    let removed = if cfg.filter.enabled {
        removal_mask(&global, &cfg.filter_config())
    } else {
        vec![false; log.len()]
    };
    let filter_seconds = started.elapsed().as_secs_f64();
    let target = ds.has_ground_truth().then(|| preclusters_from_ground_truth(&global));

    let times: Vec<f64> = log.iter().map(|d| d.time).collect();
    let spans = window_spans(&times, cfg.stage1.eps_t, cfg.pipeline.hop)?;
    let windows: Vec<PreparedWindow> = spans
        .par_iter()
        .enumerate()
        .map(|(k, s)| -> Result<PreparedWindow> {
            let spec = FrameSpec {
                mode,
                reference_time: anchor(&poses, s.end),
            };
            let dets = to_frame(&log[s.range()], &poses, &spec)?;
            let kept: Vec<usize> = (0..dets.len()).filter(|&i| !removed[s.first + i]).collect();
            let kept_dets = kept.iter().map(|&i| dets[i]).collect();
            let predecessor = (0..k).rev().find(|&j| spans[j].end <= s.start + 1e-9);
            let (pred_positions, pred_dets) = match predecessor {
                Some(j) => {
                    let p = &spans[j];
                    let pos: Vec<usize> = (0..p.last - p.first)
                        .filter(|&i| log[p.first + i].time < s.start - 1e-9)
                        .collect();
                    let raw: Vec<Detection> = pos.iter().map(|&i| log[p.first + i]).collect();
                    (pos, to_frame(&raw, &poses, &spec)?)
                }
                None => (Vec::new(), Vec::new()),
            };
            Ok(PreparedWindow {
                start: s.start,
                end: s.end,
                range: s.range(),
                dets,
                kept,
                kept_dets,
                predecessor,
                pred_positions,
                pred_dets,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Prepared {
        log_len: log.len(),
        windows,
        global,
        removed,
        target,
        mounts: ds.mounts.clone(),
        filter_seconds,
    })
}

/// Stage-1 clustering of every window. Filter-removed detections are noise.
pub fn run_stage1(p: &Prepared, crit: &NeighborhoodCriterion, rule: &CorePointRule) -> Vec<ClusterAssignment> {
    p.windows
        .par_iter()
        .map(|w| {
            let kept_labels = cluster_labels(&w.kept_dets, crit, rule);
            let mut labels: Vec<Label> = vec![None; w.dets.len()];
            for (&i, l) in w.kept.iter().zip(kept_labels) {
                labels[i] = l;
            }
            ClusterAssignment::new((w.start, w.end), w.range.clone().collect(), labels)
        })
        .collect()
}

/// Stage-2 merging of every window, using the predecessor window's
/// clusters as history. Only the window's own detections are relabeled.
pub fn run_stage2(p: &Prepared, stage1: &[ClusterAssignment], merge: &MergeConfig) -> Vec<ClusterAssignment> {
    assert_eq!(stage1.len(), p.windows.len());
    p.windows
        .par_iter()
        .zip(stage1)
        .map(|(w, a)| merge_window(p, w, a, stage1, merge).0)
        .collect()
}

fn merge_window(
    p: &Prepared,
    w: &PreparedWindow,
    a: &ClusterAssignment,
    stage1: &[ClusterAssignment],
    merge: &MergeConfig,
) -> (ClusterAssignment, MergeOutcome, u32) {
    let own = w.dets.len();
    let offset = a.labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut dets = w.dets.clone();
    let mut labels = a.labels.clone();
    if let Some(j) = w.predecessor {
        dets.extend_from_slice(&w.pred_dets);
        labels.extend(w.pred_positions.iter().map(|&i| stage1[j].labels[i].map(|l| l + offset)));
    }
    let out = merge_clusters(&dets, &labels, w.end, merge, &p.mounts);
    let assignment = ClusterAssignment::new((w.start, w.end), a.indices.clone(), densify(&out.labels[..own]));
    (assignment, out, offset)
}

/// One stage-1 cluster as seen by the merger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    /// Stage-1 label; for history clusters, the label in the predecessor
    /// window.
    pub stage1_label: u32,
    pub history: bool,
    /// Final label in this window, absent for history-only groups.
    pub label: Option<u32>,
    pub detections: usize,
    pub t_first: f64,
    pub t_last: f64,
    pub centers: Vec<Center>,
    pub velocity: Option<VelocityEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowClusters {
    pub window_start: f64,
    pub window_end: f64,
    pub clusters: Vec<ClusterRecord>,
}

/// Stage-2 merging with per-cluster summaries (centers, velocity estimate,
/// time span) for plotting and inspection.
pub fn run_stage2_detailed(
    p: &Prepared,
    stage1: &[ClusterAssignment],
    merge: &MergeConfig,
) -> (Vec<ClusterAssignment>, Vec<WindowClusters>) {
    assert_eq!(stage1.len(), p.windows.len());
    p.windows
        .par_iter()
        .zip(stage1)
        .map(|(w, a)| {
            let (assignment, out, offset) = merge_window(p, w, a, stage1, merge);
            let own = w.dets.len();
            // final label of a merged group, via any of its own members
            let mut final_of = vec![None; out.summaries.len()];
            for (k, s) in out.summaries.iter().enumerate() {
                if let Some(&m) = s.members.iter().find(|&&m| m < own) {
                    final_of[k] = assignment.labels[m];
                }
            }
            let clusters = out
                .summaries
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let history = s.cluster_id >= offset;
                    let group = out.merged_ids[k];
                    let label = out
                        .merged_ids
                        .iter()
                        .zip(&final_of)
                        .find_map(|(&g, &l)| if g == group { l } else { None });
                    ClusterRecord {
                        stage1_label: if history { s.cluster_id - offset } else { s.cluster_id },
                        history,
                        label,
                        detections: s.members.len(),
                        t_first: s.t_first,
                        t_last: s.t_last,
                        centers: s.centers.clone(),
                        velocity: s.velocity,
                    }
                })
                .collect();
            (
                assignment,
                WindowClusters {
                    window_start: w.start,
                    window_end: w.end,
                    clusters,
                },
            )
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub detections: usize,
    pub removed: usize,
    pub windows: usize,
    /// Sum over windows of the clusters found in each.
    pub stage1_clusters: usize,
    pub stage2_clusters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageScores {
    pub stage1: ScoreReport,
    pub stage2: Option<ScoreReport>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub removed: Vec<bool>,
    pub stage1: Vec<ClusterAssignment>,
    pub stage2: Option<Vec<ClusterAssignment>>,
    pub target: Option<Vec<Truth>>,
    pub scores: Option<StageScores>,
    pub counts: StageCounts,
    pub timings: Vec<StageTiming>,
    /// Whole log in the global frame, for plotting.
    pub global: Vec<Detection>,
}

impl PipelineOutput {
    /// Final assignment: stage 2 when enabled, otherwise stage 1.
    pub fn final_assignments(&self) -> &[ClusterAssignment] {
        self.stage2.as_deref().unwrap_or(&self.stage1)
    }
}

pub fn count_clusters(a: &[ClusterAssignment]) -> usize {
    a.iter().map(|w| w.num_clusters()).sum()
}

pub fn run_pipeline(ds: &Dataset, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let t0 = Instant::now();
    let p = prepare(ds, cfg)?;
    let prep_seconds = t0.elapsed().as_secs_f64() - p.filter_seconds;
    let mut timings = vec![StageTiming {
        stage: "prepare".into(),
        seconds: prep_seconds,
    }];
    if cfg.filter.enabled {
        timings.push(StageTiming {
            stage: "filter".into(),
            seconds: p.filter_seconds,
        });
    }
    let t1 = Instant::now();
    let stage1 = run_stage1(&p, &cfg.criterion(), &cfg.core_rule());
    timings.push(StageTiming {
        stage: "stage1".into(),
        seconds: t1.elapsed().as_secs_f64(),
    });
    let stage2 = cfg.merge_config().map(|m| {
        let t2 = Instant::now();
        let out = run_stage2(&p, &stage1, &m);
        timings.push(StageTiming {
            stage: "stage2".into(),
            seconds: t2.elapsed().as_secs_f64(),
        });
        out
    });
    let scores = p.target.as_ref().map(|t| {
        let t3 = Instant::now();
        let s = StageScores {
            stage1: score_assignments(&stage1, t),
            stage2: stage2.as_ref().map(|a| score_assignments(a, t)),
        };
        timings.push(StageTiming {
            stage: "score".into(),
            seconds: t3.elapsed().as_secs_f64(),
        });
        s
    });
    let counts = StageCounts {
        detections: p.log_len,
        removed: p.removed.iter().filter(|&&r| r).count(),
        windows: stage1.len(),
        stage1_clusters: count_clusters(&stage1),
        stage2_clusters: stage2.as_deref().map(count_clusters),
    };
    Ok(PipelineOutput {
        removed: p.removed,
        stage1,
        stage2,
        target: p.target,
        scores,
        counts,
        timings,
        global: p.global,
    })
}

fn label_str(l: Option<u32>) -> String {
    l.map_or_else(|| "-1".to_string(), |v| v.to_string())
}

/// Per-stage plotting tables. `raw` carries ground-truth object ids and
/// `target` the optimization targets; stage files list every (window,
/// detection) pair. Returns `(file name, contents)` pairs.
pub fn plot_tables(
    global: &[Detection],
    target: Option<&[Truth]>,
    stage1: Option<&[ClusterAssignment]>,
    stage2: Option<&[ClusterAssignment]>,
) -> Vec<(String, String)> {
    let point_table = |labels: &mut dyn Iterator<Item = Option<u32>>| {
        let mut s = String::from("x,y,t,label\n");
        for (d, l) in global.iter().zip(labels) {
            s.push_str(&format!("{},{},{},{}\n", d.x, d.y, d.time, label_str(l)));
        }
        s
    };
    let window_table = |a: &[ClusterAssignment]| {
        let mut s = String::from("window_start,window_end,x,y,t,label\n");
        for w in a {
            for (&i, &l) in w.indices.iter().zip(&w.labels) {
                let d = &global[i];
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    w.window.0,
                    w.window.1,
                    d.x,
                    d.y,
                    d.time,
                    label_str(l)
                ));
            }
        }
        s
    };
    let mut out = vec![(
        "raw.csv".to_string(),
        point_table(&mut global.iter().map(|d| d.gt_label)),
    )];
    if let Some(t) = target {
        out.push(("target.csv".into(), point_table(&mut t.iter().copied())));
    }
    if let Some(a) = stage1 {
        out.push(("stage1.csv".into(), window_table(a)));
    }
    if let Some(a) = stage2 {
        out.push(("stage2.csv".into(), window_table(a)));
    }
    out
}

pub fn emit_plotdata(out: &PipelineOutput, dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tables = plot_tables(
        &out.global,
        out.target.as_deref(),
        Some(&out.stage1),
        out.stage2.as_deref(),
    );
    let mut names = Vec::new();
    for (name, text) in tables {
        io::write_text(&dir.join(&name), &text)?;
        names.push(name);
    }
    Ok(names)
}
