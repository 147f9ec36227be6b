use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use radseg::coords::Frame;
use radseg::experiments::{
    evaluate_prepared, experiment, report_csv, space_of, stage1_names, stage2_names,
    suite_datasets, targets, Bench, BenchOptions, ExperimentReport, EXPERIMENT_IDS,
};
use radseg::filter::{filter_detections, tune_filter, TunerCriterion, TunerGrid};
use radseg::io;
use radseg::optimize::{optimize, OptimizeBudget, Strategy};
use radseg::pipeline::{
    emit_plotdata, global_log, prepare, run_pipeline, run_stage1, run_stage2_detailed, Dataset,
    PipelineConfig, StageTiming,
};
use radseg::score::score_assignments;
use radseg::simgen::{generate, suite_scene, SceneSpec, SUITE};
use radseg::ParamSpace;

#[derive(Parser)]
#[command(name = "radseg", version, about = "Clustering of radar detections into moving objects")]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed; overrides `pipeline.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Coordinate frame; overrides `pipeline.frame`.
    #[arg(long, global = true, value_enum)]
    frame: Option<FrameArg>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameArg {
    Ccs,
    Fcs,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Stage1,
    Stage2,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Bayesian,
    Random,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Bayesian => Strategy::Bayesian,
            StrategyArg::Random => Strategy::Random,
        }
    }
}

#[derive(Args)]
struct BudgetArgs {
    /// Evaluations in the exploration phase.
    #[arg(long, default_value_t = 30)]
    explore: usize,
    /// Evaluations in the exploitation phase.
    #[arg(long, default_value_t = 70)]
    exploit: usize,
    #[arg(long, value_enum, default_value = "bayesian")]
    strategy: StrategyArg,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a suite scene name or a scene JSON file.
    Simulate {
        scene: String,
    },
    /// Grid-search the filter thresholds on labeled data.
    FilterTune {
        data: PathBuf,
        /// η₁ axis as lo:hi:step (m/s).
        #[arg(long, default_value = "0.05:0.35:0.05")]
        eta1: String,
        /// d_xy axis as lo:hi:step (m).
        #[arg(long, default_value = "0.8:2.0:0.2")]
        d_xy: String,
        /// Share of an object's detections per frame that must survive.
        #[arg(long, default_value_t = 0.75)]
        retention: f64,
        /// Frame length for the retention check (s).
        #[arg(long, default_value_t = 0.15)]
        frame_length: f64,
        #[arg(long, default_value_t = 0)]
        max_violations: usize,
    },
    /// Apply the filter and write kept and removed detections.
    Filter { data: PathBuf },
    /// Stage-1 clustering; writes per-window assignments.
    Cluster { data: PathBuf },
    /// Stage-2 merging of stage-1 assignments.
    Merge {
        data: PathBuf,
        /// Stage-1 assignment CSV as written by `cluster`.
        #[arg(long)]
        assignments: PathBuf,
    },
    /// Score assignments against ground truth.
    Score {
        data: PathBuf,
        #[arg(long)]
        assignments: PathBuf,
        /// Print JSON instead of CSV.
        #[arg(long)]
        json: bool,
    },
    /// Optimize stage-1 or stage-2 parameters on labeled datasets.
    Optimize {
        #[arg(required = true)]
        data: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "stage1")]
        stage: StageArg,
        /// Search space JSON; defaults to the built-in boxes.
        #[arg(long)]
        space: Option<PathBuf>,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Run the experiment matrix.
    Bench {
        /// Training datasets; defaults to the synthetic suite.
        #[arg(long, num_args = 1..)]
        train: Vec<PathBuf>,
        /// Test datasets; defaults to the synthetic suite.
        #[arg(long, num_args = 1..)]
        test: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        train_seed: u64,
        #[arg(long, default_value_t = 2)]
        test_seed: u64,
        /// Experiment ids, comma separated; all by default.
        #[arg(long, value_delimiter = ',')]
        experiments: Vec<u32>,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Full pipeline: filter, cluster, merge, score.
    Pipeline { data: PathBuf },
    /// Per-stage point tables for plotting.
    PlotData { data: PathBuf },
}

struct Ctx {
    cfg: PipelineConfig,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", &e.to_string());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<radseg::Error>().map_or("error", |r| r.kind());
            report(kind, &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}

fn report(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": kind, "message": message.trim_end() }));
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(f) = cli.frame {
        cfg.pipeline.frame = match f {
            FrameArg::Ccs => Frame::Ccs,
            FrameArg::Fcs => Frame::Fcs,
        };
    }
    if let Some(s) = cli.seed {
        cfg.pipeline.seed = s;
    }
    cfg.validate()?;
    let ctx = Ctx {
        seed: cfg.pipeline.seed,
        cfg,
        out: cli.out.unwrap_or_else(|| PathBuf::from("radseg-out")),
    };
    match cli.command {
        Command::Simulate { scene } => simulate(&ctx, &scene),
        Command::FilterTune {
            data,
            eta1,
            d_xy,
            retention,
            frame_length,
            max_violations,
        } => {
            let grid = TunerGrid {
                eta1: parse_axis(&eta1)?,
                d_xy: parse_axis(&d_xy)?,
            };
            let crit = TunerCriterion {
                retention_fraction: retention,
                frame_length,
                max_violations,
            };
            filter_tune(&ctx, &data, &grid, &crit)
        }
        Command::Filter { data } => filter(&ctx, &data),
        Command::Cluster { data } => cluster(&ctx, &data),
        Command::Merge { data, assignments } => merge(&ctx, &data, &assignments),
        Command::Score { data, assignments, json } => score(&ctx, &data, &assignments, json),
        Command::Optimize {
            data,
            stage,
            space,
            budget,
        } => optimize_cmd(&ctx, &data, stage, space.as_deref(), &budget),
        Command::Bench {
            train,
            test,
            train_seed,
            test_seed,
            experiments,
            budget,
        } => bench(&ctx, &train, &test, (train_seed, test_seed), &experiments, &budget),
        Command::Pipeline { data } => pipeline(&ctx, &data),
        Command::PlotData { data } => plot_data(&ctx, &data),
    }
}

fn parse_axis(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, step] = parts[..] else {
        bail!("grid axis '{s}' must be lo:hi:step");
    };
    let num = |v: &str| v.trim().parse::<f64>().with_context(|| format!("bad number '{v}' in '{s}'"));
    Ok((num(lo)?, num(hi)?, num(step)?))
}

fn load(data: &Path) -> Result<Dataset> {
    Ok(Dataset::load(data)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_timings(dir: &Path, timings: &[StageTiming]) -> Result<()> {
    Ok(io::write_json(&dir.join("timings.json"), &timings)?)
}

fn timed<T>(stage: &str, timings: &mut Vec<StageTiming>, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let v = f();
    timings.push(StageTiming {
        stage: stage.to_string(),
        seconds: t.elapsed().as_secs_f64(),
    });
    v
}

fn simulate(ctx: &Ctx, scene: &str) -> Result<()> {
    let path = Path::new(scene);
    let mut spec: SceneSpec = if path.is_file() {
        io::read_json(path)?
    } else if SUITE.contains(&scene) {
        suite_scene(scene, ctx.seed)?
    } else {
        bail!(radseg::Error::InvalidInput(format!(
            "'{scene}' is neither a scene file nor one of: {}",
            SUITE.join(", ")
        )));
    };
    if path.is_file() && ctx.seed != 0 {
        spec.seed = ctx.seed;
    }
    let ds: Dataset = generate(&spec)?.into();
    let dir = ctx.out_dir()?;
    ds.save(dir)?;
    io::write_json(&dir.join("scene.json"), &spec)?;
    print_json(&json!({
        "scene": spec.name,
        "seed": spec.seed,
        "detections": ds.detections.len(),
        "labeled": ds.detections.iter().filter(|d| d.gt_label.is_some()).count(),
        "out": dir,
    }))
}

fn filter_tune(ctx: &Ctx, data: &Path, grid: &TunerGrid, crit: &TunerCriterion) -> Result<()> {
    let ds = load(data)?;
    let log = global_log(&ds, &ctx.cfg)?;
    let report = tune_filter(&log, grid, crit, &ctx.cfg.filter_config(), None)?;
    let dir = ctx.out_dir()?;
    io::write_text(&dir.join("errors.csv"), &report.violations_csv())?;
    io::write_text(&dir.join("removal.csv"), &report.removal_csv())?;
    let flagged: Vec<_> = report
        .cells_with_violations()
        .into_iter()
        .map(|(i, j)| {
            json!({
                "eta1": report.eta1_values[i],
                "d_xy": report.d_xy_values[j],
                "violations": report.violations[i][j],
            })
        })
        .collect();
    let (si, sj) = report.selected;
    let summary = json!({
        "selected": {
            "eta1": report.config.eta1,
            "d_xy": report.config.d_xy,
            "removal_rate": report.removal_rates[si][sj],
            "violations": report.violations[si][sj],
        },
        "flagged": flagged,
    });
    io::write_json(&dir.join("filter.json"), &summary)?;
    print_json(&summary)
}

fn filter(ctx: &Ctx, data: &Path) -> Result<()> {
    let ds = load(data)?;
    let log = global_log(&ds, &ctx.cfg)?;
    let mut timings = Vec::new();
    let outcome = timed("filter", &mut timings, || filter_detections(&log, &ctx.cfg.filter_config()));
    let pick = |removed: bool| -> Vec<_> {
        ds.detections
            .iter()
            .zip(&outcome.mask)
            .filter(|(_, &r)| r == removed)
            .map(|(d, _)| *d)
            .collect()
    };
    let (kept, removed) = (pick(false), pick(true));
    let dir = ctx.out_dir()?;
    io::write_detections(&dir.join("kept.csv"), &kept)?;
    io::write_detections(&dir.join("removed.csv"), &removed)?;
    write_timings(dir, &timings)?;
    let background = ds.detections.iter().filter(|d| d.gt_label.is_none()).count();
    let removed_bg = removed.iter().filter(|d| d.gt_label.is_none()).count();
    print_json(&json!({
        "detections": ds.detections.len(),
        "kept": kept.len(),
        "removed": removed.len(),
        "background_removal_rate": if background == 0 { 0.0 } else { removed_bg as f64 / background as f64 },
        "labeled_removed": removed.len() - removed_bg,
    }))
}

fn cluster(ctx: &Ctx, data: &Path) -> Result<()> {
    let ds = load(data)?;
    let mut timings = Vec::new();
    let p = timed("prepare", &mut timings, || prepare(&ds, &ctx.cfg))?;
    let s1 = timed("stage1", &mut timings, || {
        run_stage1(&p, &ctx.cfg.criterion(), &ctx.cfg.core_rule())
    });
    let dir = ctx.out_dir()?;
    io::write_assignments_csv(&dir.join("assignments.csv"), &s1)?;
    write_timings(dir, &timings)?;
    print_json(&json!({
        "windows": s1.len(),
        "clusters": radseg::pipeline::count_clusters(&s1),
    }))
}

fn merge(ctx: &Ctx, data: &Path, assignments: &Path) -> Result<()> {
    let ds = load(data)?;
    let stage1 = io::read_assignments_csv(assignments)?;
    let p = prepare(&ds, &ctx.cfg)?;
    let aligned = stage1.len() == p.windows.len()
        && stage1
            .iter()
            .zip(&p.windows)
            .all(|(a, w)| a.indices.iter().copied().eq(w.range.clone()));
    if !aligned {
        bail!(radseg::Error::InvalidInput(format!(
            "{}: windows do not match the dataset under the current configuration",
            assignments.display()
        )));
    }
    let mut merge_cfg = ctx.cfg.merge;
    merge_cfg.enabled = true;
    let mut cfg = ctx.cfg;
    cfg.merge = merge_cfg;
    let m = cfg.merge_config().ok_or_else(|| anyhow!("merge configuration unavailable"))?;
    let mut timings = Vec::new();
    let (merged, clusters) = timed("stage2", &mut timings, || run_stage2_detailed(&p, &stage1, &m));
    let dir = ctx.out_dir()?;
    io::write_assignments_csv(&dir.join("assignments.csv"), &merged)?;
    io::write_json(&dir.join("clusters.json"), &clusters)?;
    write_timings(dir, &timings)?;
    print_json(&json!({
        "windows": merged.len(),
        "stage1_clusters": radseg::pipeline::count_clusters(&stage1),
        "stage2_clusters": radseg::pipeline::count_clusters(&merged),
    }))
}

fn score(ctx: &Ctx, data: &Path, assignments: &Path, as_json: bool) -> Result<()> {
    let ds = load(data)?;
    if !ds.has_ground_truth() {
        bail!(radseg::Error::InvalidInput(format!("{}: no ground-truth labels", data.display())));
    }
    let a = io::read_assignments_csv(assignments)?;
    let n = ds.detections.len();
    if let Some(bad) = a.iter().flat_map(|w| &w.indices).find(|&&i| i >= n) {
        bail!(radseg::Error::InvalidInput(format!(
            "{}: detection index {bad} out of range ({n} detections)",
            assignments.display()
        )));
    }
    let log = global_log(&ds, &ctx.cfg)?;
    let target = radseg::score::preclusters_from_ground_truth(&log);
    let report = score_assignments(&a, &target);
    if as_json {
        print_json(&report)?;
    } else {
        print!("{}", report.to_csv());
    }
    Ok(())
}

fn budget_of(args: &BudgetArgs, seed: u64) -> OptimizeBudget {
    OptimizeBudget::new(args.explore, args.exploit, seed)
}

fn optimize_cmd(ctx: &Ctx, data: &[PathBuf], stage: StageArg, space: Option<&Path>, args: &BudgetArgs) -> Result<()> {
    let sets: Vec<Dataset> = data.iter().map(|d| load(d)).collect::<Result<_>>()?;
    let mut base = ctx.cfg;
    let default_names = match stage {
        StageArg::Stage1 => {
            base.merge.enabled = false;
            stage1_names(base.stage1.criterion, base.core.mode)
        }
        StageArg::Stage2 => {
            base.merge.enabled = true;
            stage2_names(base.merge.method)
        }
    };
    let space: ParamSpace = match space {
        Some(p) => io::read_json(p)?,
        None => space_of(&default_names),
    };
    // reject unknown names before spending the budget
    base.apply_params(&space.from_unit(&vec![0.5; space.len()]))?;
    let prepared = sets.iter().map(|d| prepare(d, &base)).collect::<radseg::Result<Vec<_>>>()?;
    for p in &prepared {
        targets(p)?;
    }
    let objective = |p: &radseg::ParamSet| {
        let mut c = base;
        c.apply_params(p).expect("space names were checked");
        evaluate_prepared(&prepared, &c).map_or(0.0, |s| s.0.v_measure)
    };
    let mut timings = Vec::new();
    let result = timed("optimize", &mut timings, || {
        optimize(&space, objective, &budget_of(args, ctx.seed), args.strategy.into())
    })?;
    let dir = ctx.out_dir()?;
    io::write_text(&dir.join("trace.csv"), &result.trace_csv(&space))?;
    let best = json!({ "params": result.best, "score": result.best_score });
    io::write_json(&dir.join("best.json"), &best)?;
    write_timings(dir, &timings)?;
    print_json(&best)
}

fn bench(
    ctx: &Ctx,
    train: &[PathBuf],
    test: &[PathBuf],
    (train_seed, test_seed): (u64, u64),
    ids: &[u32],
    args: &BudgetArgs,
) -> Result<()> {
    let sets = |dirs: &[PathBuf], seed: u64| -> Result<Vec<Dataset>> {
        if dirs.is_empty() {
            Ok(suite_datasets(seed)?)
        } else {
            dirs.iter().map(|d| load(d)).collect()
        }
    };
    let ids: Vec<u32> = if ids.is_empty() { EXPERIMENT_IDS.to_vec() } else { ids.to_vec() };
    for &id in &ids {
        experiment(id)?;
    }
    let options = BenchOptions {
        budget: budget_of(args, ctx.seed),
        strategy: args.strategy.into(),
    };
    let mut bench = Bench::new(sets(train, train_seed)?, sets(test, test_seed)?, ctx.cfg, options);
    let dir = ctx.out_dir()?;
    let traces = dir.join("traces");
    let mut timings = Vec::new();
    for &id in &ids {
        let report = timed(&format!("experiment_{id}"), &mut timings, || bench.run(id).cloned())?;
        if let Some(r) = &report.optimization {
            let def = experiment(id)?;
            if let radseg::experiments::ParamSource::Optimized(space) = &def.params {
                std::fs::create_dir_all(&traces).with_context(|| format!("creating {}", traces.display()))?;
                io::write_text(&traces.join(format!("experiment_{id}.csv")), &r.trace_csv(space))?;
            }
        }
        eprintln!(
            "#{id:<2} {:<32} train {:.4} test {:.4}",
            report.name, report.train.v_measure, report.test.v_measure
        );
    }
    let reports: Vec<&ExperimentReport> = ids.iter().filter_map(|&id| bench.result(id)).collect();
    io::write_text(&dir.join("report.csv"), &report_csv(&reports))?;
    io::write_json(&dir.join("report.json"), &reports)?;
    write_timings(dir, &timings)?;
    print!("{}", report_csv(&reports));
    Ok(())
}

fn pipeline(ctx: &Ctx, data: &Path) -> Result<()> {
    let ds = load(data)?;
    let out = run_pipeline(&ds, &ctx.cfg)?;
    let dir = ctx.out_dir()?;
    io::write_assignments_csv(&dir.join("assignments.csv"), out.final_assignments())?;
    io::write_assignments_csv(&dir.join("stage1.csv"), &out.stage1)?;
    if let Some(s2) = &out.stage2 {
        io::write_assignments_csv(&dir.join("stage2.csv"), s2)?;
    }
    let removed: Vec<usize> = out.removed.iter().enumerate().filter(|(_, &r)| r).map(|(i, _)| i).collect();
    let mut removed_csv = String::from("detection_index\n");
    for i in &removed {
        removed_csv.push_str(&format!("{i}\n"));
    }
    io::write_text(&dir.join("removed.csv"), &removed_csv)?;
    if let Some(s) = &out.scores {
        io::write_text(&dir.join("scores_stage1.csv"), &s.stage1.to_csv())?;
        if let Some(s2) = &s.stage2 {
            io::write_text(&dir.join("scores_stage2.csv"), &s2.to_csv())?;
        }
    }
    let summary = json!({
        "counts": out.counts,
        "stage1": out.scores.as_ref().map(|s| s.stage1.aggregate),
        "stage2": out.scores.as_ref().and_then(|s| s.stage2.as_ref().map(|r| r.aggregate)),
    });
    io::write_json(&dir.join("summary.json"), &summary)?;
    io::write_text(&dir.join("config.toml"), &ctx.cfg.to_toml_string())?;
    write_timings(dir, &out.timings)?;
    print_json(&summary)
}

fn plot_data(ctx: &Ctx, data: &Path) -> Result<()> {
    let ds = load(data)?;
    let out = run_pipeline(&ds, &ctx.cfg)?;
    let dir = ctx.out_dir()?;
    let files = emit_plotdata(&out, dir)?;
    write_timings(dir, &out.timings)?;
    print_json(&json!({ "files": files }))
}
