//! The experiment matrix: fixed and optimized stage-1 settings across
//! coordinate frames, filter on/off, neighborhood criteria and core-point
//! rules, followed by the two stage-2 merge methods on top of the best
//! stage-1 setting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coords::Frame;
use crate::error::{Error, Result};
use crate::optimize::{optimize, OptimizeBudget, OptimizeResult, Strategy};
use crate::pipeline::{prepare, run_stage1, run_stage2, CoreMode, CriterionKind, Dataset, PipelineConfig, Prepared};
use crate::score::{score_assignments, Scores};
use crate::simgen::{generate, suite_scene};
use crate::stage2::MergeMethod;
use crate::types::{ClusterAssignment, ParamSet, ParamSpace};

/// How an experiment obtains its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSource {
    Fixed(ParamSet),
    Optimized(ParamSpace),
    /// Parameters of the best combined setting, applied unfiltered.
    BestUnfiltered,
    /// Best combined thresholds reused with the box criterion.
    BestOnBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDef {
    pub id: u32,
    pub name: String,
    pub frame: Frame,
    pub filtered: bool,
    pub criterion: CriterionKind,
    pub core: CoreMode,
    /// Stage-2 method; `None` for point-clustering experiments.
    pub merge: Option<MergeMethod>,
    pub params: ParamSource,
}

impl ExperimentDef {
    /// Short description of the active components.
    pub fn components(&self) -> String {
        let mut parts = Vec::new();
        if self.filtered {
            parts.push("filter");
        }
        if self.core == CoreMode::Adaptive {
            parts.push("adaptive-nmin");
        }
        parts.push(match self.criterion {
            CriterionKind::Box => "box",
            CriterionKind::EuclidXy => "euclid-xy",
            CriterionKind::EuclidXyVr => "euclid-xyvr",
        });
        match self.merge {
            Some(MergeMethod::Velocity) => parts.push("merge-velocity"),
            Some(MergeMethod::Continuation) => parts.push("merge-continuation"),
            None => {}
        }
        parts.join("+")
    }
}

/// Search box per parameter: half the smallest to 1.5 times the largest
/// value reported for it across the reference settings.
pub fn default_bound(name: &str) -> Option<(f64, f64, bool)> {
    Some(match name {
        "eps_xy" => (0.30, 1.56, false),
        "eps_vr" => (0.515, 21.15, false),
        "n_min" => (1.5, 6.0, true),
        "v_r_min" => (0.115, 1.5, false),
        "eps_xyvr" => (0.36, 1.77, false),
        "vr_scale" => (0.505, 20.25, false),
        "n_min_50" => (1.51, 5.805, false),
        "alpha_r" => (0.495, 1.485, false),
        "eps_d" => (0.47, 1.5, false),
        "eps_phi_deg" => (11.555, 34.665, false),
        "eps_v" => (0.52, 4.08, false),
        _ => return None,
    })
}

pub fn space_of(names: &[&str]) -> ParamSpace {
    let mut s = ParamSpace::new();
    for n in names {
        let (lo, hi, int) = default_bound(n).expect("known parameter");
        s = if int { s.integer(n, lo, hi) } else { s.real(n, lo, hi) };
    }
    s
}

pub fn stage1_names(criterion: CriterionKind, core: CoreMode) -> Vec<&'static str> {
    let mut v = match criterion {
        CriterionKind::Box | CriterionKind::EuclidXy => vec!["eps_xy", "eps_vr"],
        CriterionKind::EuclidXyVr => vec!["eps_xyvr", "vr_scale"],
    };
    match core {
        CoreMode::Fixed => v.push("n_min"),
        CoreMode::Adaptive => v.extend(["n_min_50", "alpha_r"]),
    }
    v.push("v_r_min");
    v
}

pub fn stage2_names(method: MergeMethod) -> Vec<&'static str> {
    match method {
        MergeMethod::Velocity => vec!["eps_d", "eps_phi_deg", "eps_v"],
        MergeMethod::Continuation => vec!["eps_d", "eps_v"],
    }
}

pub fn expert_params() -> ParamSet {
    ParamSet::new()
        .with("eps_xy", 1.00)
        .with("eps_vr", 5.00)
        .with("n_min", 3.0)
        .with("v_r_min", 0.40)
}

pub const EXPERIMENT_IDS: [u32; 13] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13];

pub fn experiment(id: u32) -> Result<ExperimentDef> {
    use CoreMode::*;
    use CriterionKind::*;
    let opt = |c, m| ParamSource::Optimized(space_of(&stage1_names(c, m)));
    let def = |name: &str, frame, filtered, criterion, core, merge, params| ExperimentDef {
        id,
        name: name.to_string(),
        frame,
        filtered,
        criterion,
        core,
        merge,
        params,
    };
    Ok(match id {
        1 => def("expert setting", Frame::Ccs, true, Box, Fixed, None, ParamSource::Fixed(expert_params())),
        2 => def("baseline", Frame::Ccs, true, Box, Fixed, None, opt(Box, Fixed)),
        3 => def("baseline", Frame::Fcs, true, Box, Fixed, None, opt(Box, Fixed)),
        4 => def("baseline unfiltered", Frame::Fcs, false, Box, Fixed, None, opt(Box, Fixed)),
        5 => def("euclidean xy distance", Frame::Fcs, true, EuclidXy, Fixed, None, opt(EuclidXy, Fixed)),
        6 => def("euclidean xy-vr distance", Frame::Fcs, true, EuclidXyVr, Fixed, None, opt(EuclidXyVr, Fixed)),
        7 => def("adaptive n_min(r)", Frame::Fcs, true, Box, Adaptive, None, opt(Box, Adaptive)),
        8 => def("combined", Frame::Fcs, true, EuclidXyVr, Adaptive, None, opt(EuclidXyVr, Adaptive)),
        9 => def("combined unfiltered", Frame::Fcs, false, EuclidXyVr, Adaptive, None, opt(EuclidXyVr, Adaptive)),
        10 => def("best setting unfiltered", Frame::Fcs, false, EuclidXyVr, Adaptive, None, ParamSource::BestUnfiltered),
        11 => def("best setting on baseline", Frame::Fcs, true, Box, Fixed, None, ParamSource::BestOnBox),
        12 => def(
            "merge by velocity estimate",
            Frame::Fcs,
            true,
            EuclidXyVr,
            Adaptive,
            Some(MergeMethod::Velocity),
            ParamSource::Optimized(space_of(&stage2_names(MergeMethod::Velocity))),
        ),
        13 => def(
            "merge by cluster continuation",
            Frame::Fcs,
            true,
            EuclidXyVr,
            Adaptive,
            Some(MergeMethod::Continuation),
            ParamSource::Optimized(space_of(&stage2_names(MergeMethod::Continuation))),
        ),
        other => return Err(Error::UnknownExperiment(other)),
    })
}

/// Pipeline configuration of an experiment before parameters are applied.
pub fn base_config(def: &ExperimentDef, base: &PipelineConfig) -> PipelineConfig {
    let mut c = *base;
    c.pipeline.frame = def.frame;
    c.filter.enabled = def.filtered;
    c.stage1.criterion = def.criterion;
    c.core.mode = def.core;
    c.merge.enabled = def.merge.is_some();
    if let Some(m) = def.merge {
        c.merge.method = m;
        c.merge.n_min = 1.0;
        c.merge.eps_t2 = 0.35;
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: u32,
    pub name: String,
    pub frame: Frame,
    pub filtered: bool,
    pub components: String,
    pub train: Scores,
    pub test: Scores,
    /// Stage-1 (or stage-2) clusters summed over the windows of the test set.
    pub test_clusters: usize,
    pub params: ParamSet,
    #[serde(skip)]
    pub optimization: Option<OptimizeResult>,
}

/// Weighted aggregate over several datasets (each window weighted by its
/// detection count).
pub fn aggregate(parts: &[(Vec<ClusterAssignment>, &[crate::score::Truth])]) -> Scores {
    let mut n = 0usize;
    let (mut h, mut c, mut v) = (0.0, 0.0, 0.0);
    for (a, t) in parts {
        let r = score_assignments(a, t);
        for w in &r.windows {
            let k = w.detections as f64;
            n += w.detections;
            h += w.homogeneity * k;
            c += w.completeness * k;
            v += w.v_measure * k;
        }
    }
    if n == 0 {
        return Scores::PERFECT;
    }
    let n = n as f64;
    Scores {
        homogeneity: h / n,
        completeness: c / n,
        v_measure: v / n,
    }
}

pub fn targets(p: &Prepared) -> Result<&[crate::score::Truth]> {
    p.target
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("dataset has no ground-truth labels".into()))
}

/// Stage-1 (and optional stage-2) evaluation of one parameter set on
/// prepared datasets.
pub fn evaluate_prepared(prepared: &[Prepared], cfg: &PipelineConfig) -> Result<(Scores, usize)> {
    let crit = cfg.criterion();
    let rule = cfg.core_rule();
    let merge = cfg.merge_config();
    let mut parts = Vec::with_capacity(prepared.len());
    let mut clusters = 0;
    for p in prepared {
        let s1 = run_stage1(p, &crit, &rule);
        let out = match &merge {
            Some(m) => run_stage2(p, &s1, m),
            None => s1,
        };
        clusters += crate::pipeline::count_clusters(&out);
        parts.push((out, targets(p)?));
    }
    Ok((aggregate(&parts), clusters))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub budget: OptimizeBudget,
    pub strategy: Strategy,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            budget: OptimizeBudget::default(),
            strategy: Strategy::Bayesian,
        }
    }
}

/// Runs experiments on a train/test split, remembering results that later
/// experiments build on.
pub struct Bench {
    pub train: Vec<Dataset>,
    pub test: Vec<Dataset>,
    pub base: PipelineConfig,
    pub options: BenchOptions,
    results: BTreeMap<u32, ExperimentReport>,
}

impl Bench {
    pub fn new(train: Vec<Dataset>, test: Vec<Dataset>, base: PipelineConfig, options: BenchOptions) -> Self {
        Bench {
            train,
            test,
            base,
            options,
            results: BTreeMap::new(),
        }
    }

    fn prepare_all(sets: &[Dataset], cfg: &PipelineConfig) -> Result<Vec<Prepared>> {
        sets.iter().map(|d| prepare(d, cfg)).collect()
    }

    pub fn result(&self, id: u32) -> Option<&ExperimentReport> {
        self.results.get(&id)
    }

    fn best_combined(&mut self) -> Result<ParamSet> {
        Ok(self.run(8)?.params.clone())
    }

    pub fn run(&mut self, id: u32) -> Result<&ExperimentReport> {
        if !self.results.contains_key(&id) {
            let report = self.compute(id)?;
            self.results.insert(id, report);
        }
        Ok(&self.results[&id])
    }

    fn compute(&mut self, id: u32) -> Result<ExperimentReport> {
        let def = experiment(id)?;
        let mut cfg = base_config(&def, &self.base);
        // stage-2 experiments sit on top of the frozen best stage-1 setting
        if def.merge.is_some() {
            let best = self.best_combined()?;
            cfg.apply_params(&best)?;
        }
        let (params, optimization) = match &def.params {
            ParamSource::Fixed(p) => (p.clone(), None),
            ParamSource::BestUnfiltered => (self.best_combined()?, None),
            ParamSource::BestOnBox => {
                let b = self.best_combined()?;
                let get = |n: &str| b.get(n).unwrap_or(f64::NAN);
                (
                    ParamSet::new()
                        .with("eps_xy", get("eps_xyvr"))
                        .with("eps_vr", get("vr_scale"))
                        .with("n_min", 4.0)
                        .with("v_r_min", get("v_r_min")),
                    None,
                )
            }
            ParamSource::Optimized(space) => {
                let train = Self::prepare_all(&self.train, &cfg)?;
                // surface a missing-label error before optimizing
                for p in &train {
                    targets(p)?;
                }
                let base = cfg;
                let objective = |p: &ParamSet| {
                    let mut c = base;
                    c.apply_params(p).expect("space names are valid");
                    evaluate_prepared(&train, &c).map_or(0.0, |s| s.0.v_measure)
                };
                let r = optimize(space, objective, &self.options.budget, self.options.strategy)?;
                (r.best.clone(), Some(r))
            }
        };
        cfg.apply_params(&params)?;
        let train_prep = Self::prepare_all(&self.train, &cfg)?;
        let test_prep = Self::prepare_all(&self.test, &cfg)?;
        let (train, _) = evaluate_prepared(&train_prep, &cfg)?;
        let (test, test_clusters) = evaluate_prepared(&test_prep, &cfg)?;
        let mut all_params = params;
        if def.merge.is_some() {
            for (k, v) in self.best_combined()?.iter() {
                all_params.set(k, *v);
            }
        }
        Ok(ExperimentReport {
            id,
            name: def.name.clone(),
            frame: def.frame,
            filtered: def.filtered,
            components: def.components(),
            train,
            test,
            test_clusters,
            params: all_params,
            optimization,
        })
    }
}

/// Scenes used for parameter benchmarks. The filter probe is left out: its
/// fixed pattern exists to exercise the tuner, not the clustering.
pub const BENCH_SCENES: [&str; 5] = [
    "crossing-pedestrian",
    "car-and-pedestrian",
    "cluttered-walker",
    "remote-car",
    "occluded-vehicle",
];

/// The benchmark scenes generated with one seed.
pub fn suite_datasets(seed: u64) -> Result<Vec<Dataset>> {
    BENCH_SCENES
        .iter()
        .map(|n| Ok(generate(&suite_scene(n, seed)?)?.into()))
        .collect()
}

/// Evaluates a fully specified configuration on datasets.
pub fn evaluate_config(sets: &[Dataset], cfg: &PipelineConfig) -> Result<(Scores, usize)> {
    let prepared: Vec<Prepared> = sets.iter().map(|d| prepare(d, cfg)).collect::<Result<_>>()?;
    evaluate_prepared(&prepared, cfg)
}

pub fn report_csv(reports: &[&ExperimentReport]) -> String {
    let mut s = String::from("id,name,frame,filtered,components,train_v1,test_v1,test_h,test_c,test_clusters,params\n");
    for r in reports {
        let frame = match r.frame {
            Frame::Ccs => "ccs",
            Frame::Fcs => "fcs",
        };
        s.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},\"{}\"\n",
            r.id,
            r.name,
            frame,
            r.filtered,
            r.components,
            r.train.v_measure,
            r.test.v_measure,
            r.test.homogeneity,
            r.test.completeness,
            r.test_clusters,
            r.params
        ));
    }
    s
}
