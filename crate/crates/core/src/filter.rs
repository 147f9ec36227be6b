//! Doppler/density background filter and its grid-enumeration tuner.
//!
//! A detection is removed when it has no spatio-temporal neighbor at all,
//! or when some cascade stage `i` holds with `|v_r| < η_i` and `N < N_i`.
//! The velocity thresholds are fixed ratios of `η₁` (1, 1/5, 1/10, 1/50)
//! paired with neighbor limits `N = (2, 3, 4, 10)`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridIndex;
use crate::types::Detection;

pub const CASCADE_RATIOS: [f64; 4] = [1.0, 5.0, 10.0, 50.0];
pub const CASCADE_NEIGHBORS: [usize; 4] = [2, 3, 4, 10];

/// How the cascade stages combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantifier {
    /// Remove when any stage holds.
    #[default]
    Any,
    /// Remove only when every stage holds (the literal reading; kept for
    /// comparison runs).
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub eta1: f64,
    pub d_xy: f64,
    pub dt: f64,
    pub quantifier: Quantifier,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            eta1: 0.10,
            d_xy: 1.4,
            dt: 0.25,
            quantifier: Quantifier::Any,
        }
    }
}

impl FilterConfig {
    pub fn new(eta1: f64, d_xy: f64) -> Self {
        FilterConfig {
            eta1,
            d_xy,
            ..Default::default()
        }
    }

    pub fn thresholds(&self) -> [f64; 4] {
        CASCADE_RATIOS.map(|r| self.eta1 / r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta1 > 0.0 && self.d_xy > 0.0 && self.dt >= 0.0) {
            return Err(Error::Config(format!(
                "filter needs eta1 > 0, d_xy > 0, dt >= 0 (got {}, {}, {})",
                self.eta1, self.d_xy, self.dt
            )));
        }
        Ok(())
    }

    /// Removal decision for one detection given its neighbor count.
    pub fn removes(&self, abs_vr: f64, neighbors: usize) -> bool {
        if neighbors < 1 {
            return true;
        }
        let mut stages = self
            .thresholds()
            .into_iter()
            .zip(CASCADE_NEIGHBORS)
            .map(|(eta, n)| abs_vr < eta && neighbors < n);
        match self.quantifier {
            Quantifier::Any => stages.any(|s| s),
            Quantifier::All => stages.all(|s| s),
        }
    }
}

/// Spatial index over a detection set, reused across neighbor queries.
pub struct NeighborIndex<'a> {
    dets: &'a [Detection],
    grid: GridIndex,
    d_xy: f64,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(dets: &'a [Detection], d_xy: f64) -> Self {
        let grid = GridIndex::build(dets.iter().map(|d| (d.x, d.y)), d_xy * (1.0 + 1e-6));
        NeighborIndex { dets, grid, d_xy }
    }

    /// Other detections within `d_xy` (inclusive) and `|Δt| ≤ dt`.
    pub fn count(&self, i: usize, dt: f64) -> usize {
        let d = &self.dets[i];
        let r2 = self.d_xy * self.d_xy;
        let mut n = 0;
        self.grid.for_each_candidate(d.x, d.y, self.d_xy, |j| {
            if j == i {
                return;
            }
            let o = &self.dets[j];
            let (dx, dy) = (o.x - d.x, o.y - d.y);
            if dx * dx + dy * dy <= r2 && (o.time - d.time).abs() <= dt {
                n += 1;
            }
        });
        n
    }
}

pub fn count_neighbors(dets: &[Detection], i: usize, d_xy: f64, dt: f64) -> usize {
    NeighborIndex::new(dets, d_xy).count(i, dt)
}

pub fn neighbor_counts(dets: &[Detection], d_xy: f64, dt: f64) -> Vec<usize> {
    let index = NeighborIndex::new(dets, d_xy);
    (0..dets.len())
        .into_par_iter()
        .map(|i| index.count(i, dt))
        .collect()
}

/// Per-detection removal mask (`true` = removed).
pub fn removal_mask(dets: &[Detection], cfg: &FilterConfig) -> Vec<bool> {
    neighbor_counts(dets, cfg.d_xy, cfg.dt)
        .into_iter()
        .zip(dets)
        .map(|(n, d)| cfg.removes(d.speed_abs(), n))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<Detection>,
    pub removed: Vec<Detection>,
    pub mask: Vec<bool>,
}

pub fn filter_detections(dets: &[Detection], cfg: &FilterConfig) -> FilterOutcome {
    let mask = removal_mask(dets, cfg);
    let (mut kept, mut removed) = (Vec::new(), Vec::new());
    for (d, &r) in dets.iter().zip(&mask) {
        if r {
            removed.push(*d);
        } else {
            kept.push(*d);
        }
    }
    FilterOutcome {
        kept,
        removed,
        mask,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TunerCriterion {
    pub retention_fraction: f64,
    pub frame_length: f64,
    pub max_violations: usize,
}

impl Default for TunerCriterion {
    fn default() -> Self {
        TunerCriterion {
            retention_fraction: 0.75,
            frame_length: 0.150,
            max_violations: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerGrid {
    pub eta1: (f64, f64, f64),
    pub d_xy: (f64, f64, f64),
}

impl Default for TunerGrid {
    fn default() -> Self {
        TunerGrid {
            eta1: (0.05, 0.35, 0.05),
            d_xy: (0.8, 2.0, 0.2),
        }
    }
}

fn axis((lo, hi, step): (f64, f64, f64)) -> Result<Vec<f64>> {
    if !(step > 0.0 && hi >= lo && lo > 0.0) {
        return Err(Error::InvalidInput(format!("bad grid axis ({lo}, {hi}, {step})")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    // round to 1e-9 so printed values are the intended decimals
    Ok((0..=n)
        .map(|k| ((lo + k as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneReport {
    pub eta1_values: Vec<f64>,
    pub d_xy_values: Vec<f64>,
    /// `violations[i][j]` for `eta1_values[i]`, `d_xy_values[j]`.
    pub violations: Vec<Vec<usize>>,
    /// Fraction of background detections removed, same layout.
    pub removal_rates: Vec<Vec<f64>>,
    pub selected: (usize, usize),
    pub config: FilterConfig,
}

impl TuneReport {
    /// Error matrix as CSV: one row per η₁, one column per d_xy.
    pub fn violations_csv(&self) -> String {
        self.matrix_csv(|i, j| self.violations[i][j].to_string())
    }

    pub fn removal_csv(&self) -> String {
        self.matrix_csv(|i, j| format!("{:.6}", self.removal_rates[i][j]))
    }

    fn matrix_csv(&self, cell: impl Fn(usize, usize) -> String) -> String {
        let mut s = String::from("eta1");
        for d in &self.d_xy_values {
            s.push_str(&format!(",{d}"));
        }
        s.push('\n');
        for (i, e) in self.eta1_values.iter().enumerate() {
            s.push_str(&e.to_string());
            for j in 0..self.d_xy_values.len() {
                s.push(',');
                s.push_str(&cell(i, j));
            }
            s.push('\n');
        }
        s
    }

    pub fn cells_with_violations(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, row) in self.violations.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > 0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Labeled objects grouped into fixed-length frames. Objects whose total
/// presence is shorter than one frame are ignored.
fn object_frames(dets: &[Detection], frame_length: f64) -> Vec<Vec<usize>> {
    let t0 = dets.iter().map(|d| d.time).fold(f64::INFINITY, f64::min);
    let mut span: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for d in dets {
        if let Some(l) = d.gt_label {
            let e = span.entry(l).or_insert((d.time, d.time));
            e.0 = e.0.min(d.time);
            e.1 = e.1.max(d.time);
        }
    }
    let mut frames: BTreeMap<(u32, i64), Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        let Some(l) = d.gt_label else { continue };
        let (a, b) = span[&l];
        if b - a + 1e-9 < frame_length {
            continue;
        }
        let k = ((d.time - t0) / frame_length + 1e-9).floor() as i64;
        frames.entry((l, k)).or_default().push(i);
    }
    frames.into_values().collect()
}

fn count_violations(frames: &[Vec<usize>], mask: &[bool], retention: f64) -> usize {
    frames
        .iter()
        .filter(|members| {
            let kept = members.iter().filter(|&&i| !mask[i]).count();
            (kept as f64) < retention * members.len() as f64
        })
        .count()
}

/// Exhaustive grid evaluation. Cells are independent and evaluated in
/// parallel; the result does not depend on scheduling.
///
/// Among cells with at most `max_violations` violations the one with the
/// highest background removal rate wins; ties go to the larger `d_xy`, then
/// the smaller `η₁`. `preferred`, when admissible, overrides the choice.
pub fn tune_filter(
    train: &[Detection],
    grid: &TunerGrid,
    crit: &TunerCriterion,
    base: &FilterConfig,
    preferred: Option<(f64, f64)>,
) -> Result<TuneReport> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training data".into()));
    }
    if !(crit.retention_fraction > 0.0 && crit.retention_fraction <= 1.0) {
        return Err(Error::InvalidInput("retention_fraction must be in (0, 1]".into()));
    }
    let frames = object_frames(train, crit.frame_length);
    if frames.is_empty() {
        return Err(Error::InvalidInput("no labeled objects in training data".into()));
    }
    let etas = axis(grid.eta1)?;
    let dxys = axis(grid.d_xy)?;
    let background = train.iter().filter(|d| d.gt_label.is_none()).count();

    // neighbor counts depend only on d_xy
    let counts: Vec<Vec<usize>> = dxys
        .par_iter()
        .map(|&d| neighbor_counts(train, d, base.dt))
        .collect();

    let cells: Vec<(usize, usize)> = (0..etas.len())
        .flat_map(|i| (0..dxys.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<(usize, f64)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let cfg = FilterConfig {
                eta1: etas[i],
                d_xy: dxys[j],
                ..*base
            };
            let mask: Vec<bool> = train
                .iter()
                .zip(&counts[j])
                .map(|(d, &n)| cfg.removes(d.speed_abs(), n))
                .collect();
            let violations = count_violations(&frames, &mask, crit.retention_fraction);
            let removed_bg = train
                .iter()
                .zip(&mask)
                .filter(|(d, &m)| m && d.gt_label.is_none())
                .count();
            let rate = if background == 0 {
                0.0
            } else {
                removed_bg as f64 / background as f64
            };
            (violations, rate)
        })
        .collect();

    let mut violations = vec![vec![0; dxys.len()]; etas.len()];
    let mut removal_rates = vec![vec![0.0; dxys.len()]; etas.len()];
    for (&(i, j), &(v, r)) in cells.iter().zip(&results) {
        violations[i][j] = v;
        removal_rates[i][j] = r;
    }

    let admissible = |i: usize, j: usize| violations[i][j] <= crit.max_violations;
    let mut selected: Option<(usize, usize)> = None;
    if let Some((pe, pd)) = preferred {
        let i = etas.iter().position(|&e| (e - pe).abs() < 1e-6);
        let j = dxys.iter().position(|&d| (d - pd).abs() < 1e-6);
        if let (Some(i), Some(j)) = (i, j) {
            if admissible(i, j) {
                selected = Some((i, j));
            }
        }
    }
    if selected.is_none() {
        for &(i, j) in &cells {
            if !admissible(i, j) {
                continue;
            }
            selected = match selected {
                None => Some((i, j)),
                Some((bi, bj)) => {
                    let (r, br) = (removal_rates[i][j], removal_rates[bi][bj]);
                    let better = r > br
                        || (r == br && dxys[j] > dxys[bj])
                        || (r == br && dxys[j] == dxys[bj] && etas[i] < etas[bi]);
                    Some(if better { (i, j) } else { (bi, bj) })
                }
            };
        }
    }
    let selected = selected.ok_or_else(|| {
        Error::InvalidInput(format!(
            "no grid cell has at most {} violations",
            crit.max_violations
        ))
    })?;
    Ok(TuneReport {
        config: FilterConfig {
            eta1: etas[selected.0],
            d_xy: dxys[selected.1],
            ..*base
        },
        eta1_values: etas,
        d_xy_values: dxys,
        violations,
        removal_rates,
        selected,
    })
}
