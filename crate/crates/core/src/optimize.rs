//! Budgeted derivative-free maximization over a parameter box.
//!
//! The budget is split into a space-filling exploration phase (shifted
//! Halton points) and a model-guided exploitation phase: a Gaussian-process
//! surrogate with a Matérn 5/2 kernel is fit to all evaluations and the next
//! point maximizes expected improvement. Everything works in the unit cube;
//! integral parameters are rounded only when the objective is evaluated.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::types::{ParamSet, ParamSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizeBudget {
    pub total: usize,
    pub explore: usize,
    pub exploit: usize,
    pub seed: u64,
}

impl OptimizeBudget {
    pub fn new(explore: usize, exploit: usize, seed: u64) -> Self {
        OptimizeBudget {
            total: explore + exploit,
            explore,
            exploit,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total < 2 {
            return Err(Error::InvalidInput("budget must allow at least 2 evaluations".into()));
        }
        if self.explore + self.exploit != self.total {
            return Err(Error::InvalidInput(format!(
                "explore ({}) + exploit ({}) must equal total ({})",
                self.explore, self.exploit, self.total
            )));
        }
        if self.explore == 0 {
            return Err(Error::InvalidInput("exploration needs at least one evaluation".into()));
        }
        Ok(())
    }
}

impl Default for OptimizeBudget {
    fn default() -> Self {
        OptimizeBudget::new(30, 70, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Bayesian,
    /// Uniform random sampling for the whole budget.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Explore,
    Exploit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub phase: Phase,
    pub params: ParamSet,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub best: ParamSet,
    pub best_score: f64,
    pub trace: Vec<TracePoint>,
}

impl OptimizeResult {
    pub fn trace_csv(&self, space: &ParamSpace) -> String {
        let mut s = String::from("iteration,phase");
        for d in &space.dims {
            s.push(',');
            s.push_str(&d.name);
        }
        s.push_str(",score\n");
        for (i, p) in self.trace.iter().enumerate() {
            let phase = match p.phase {
                Phase::Explore => "explore",
                Phase::Exploit => "exploit",
            };
            s.push_str(&format!("{i},{phase}"));
            for d in &space.dims {
                s.push_str(&format!(",{}", p.params.get(&d.name).unwrap_or(f64::NAN)));
            }
            s.push_str(&format!(",{}\n", p.score));
        }
        s
    }

    /// Best score seen among the first `n` trace points.
    pub fn best_within(&self, n: usize) -> f64 {
        self.trace
            .iter()
            .take(n)
            .map(|p| p.score)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Halton points `1..=n` with a random (Cranley–Patterson) shift.
pub fn shifted_halton(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (1..=n as u64)
        .map(|i| {
            (0..dim)
                .map(|k| (radical_inverse(i, PRIMES[k]) + shift[k]).fract())
                .collect()
        })
        .collect()
}

fn matern52(r: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Gaussian-process regression on standardized targets.
pub struct Surrogate {
    x: Vec<Vec<f64>>,
    lengths: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    signal: f64,
    nugget: f64,
    y_mean: f64,
    y_scale: f64,
}

const LENGTH_GRID: [f64; 9] = [0.03, 0.06, 0.1, 0.17, 0.3, 0.5, 0.8, 1.3, 2.5];
const NUGGETS: [f64; 4] = [1e-8, 1e-6, 1e-4, 1e-2];

fn correlation(x: &[Vec<f64>], lengths: &[f64], nugget: f64) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| {
        let r2: f64 = x[i]
            .iter()
            .zip(&x[j])
            .zip(lengths)
            .map(|((a, b), l)| ((a - b) / l).powi(2))
            .sum();
        matern52(r2.sqrt()) + if i == j { nugget } else { 0.0 }
    })
}

struct Fit {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    signal: f64,
    nugget: f64,
    nll: f64,
}

fn fit(x: &[Vec<f64>], y: &DVector<f64>, lengths: &[f64]) -> Option<Fit> {
    let n = x.len() as f64;
    for &g in &NUGGETS {
        let Some(chol) = correlation(x, lengths, g).cholesky() else {
            continue;
        };
        let alpha = chol.solve(y);
        let signal = (y.dot(&alpha) / n).max(1e-12);
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let nll = 0.5 * (n * signal.ln() + log_det);
        return Some(Fit {
            chol,
            alpha,
            signal,
            nugget: g,
            nll,
        });
    }
    None
}

impl Surrogate {
    /// Fits kernel length scales by coordinate-wise grid search on the
    /// profiled likelihood, starting from `init` when given.
    pub fn fit(x: &[Vec<f64>], y: &[f64], init: Option<&[f64]>, sweeps: usize) -> Option<Self> {
        let n = y.len();
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - mean) / scale));
        let dim = x[0].len();
        let mut lengths: Vec<f64> = init.map_or_else(|| vec![0.3; dim], |l| l.to_vec());
        let mut best = fit(x, &ys, &lengths)?;
        for _ in 0..sweeps {
            for k in 0..dim {
                for &cand in &LENGTH_GRID {
                    if cand == lengths[k] {
                        continue;
                    }
                    let mut trial = lengths.clone();
                    trial[k] = cand;
                    if let Some(f) = fit(x, &ys, &trial) {
                        if f.nll < best.nll - 1e-12 {
                            best = f;
                            lengths = trial;
                        }
                    }
                }
            }
        }
        Some(Surrogate {
            x: x.to_vec(),
            lengths,
            chol: best.chol,
            alpha: best.alpha,
            signal: best.signal,
            nugget: best.nugget,
            y_mean: mean,
            y_scale: scale,
        })
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// Predictive mean and standard deviation in standardized units.
    fn predict_std(&self, p: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| {
                let r2: f64 = xi
                    .iter()
                    .zip(p)
                    .zip(&self.lengths)
                    .map(|((a, b), l)| ((a - b) / l).powi(2))
                    .sum();
                matern52(r2.sqrt())
            }),
        );
        let mu = k.dot(&self.alpha);
        let v = self.chol.solve(&k);
        let var = self.signal * (1.0 + self.nugget - k.dot(&v)).max(0.0);
        (mu, var.sqrt())
    }

    /// Predictive mean and standard deviation in objective units.
    pub fn predict(&self, p: &[f64]) -> (f64, f64) {
        let (mu, sd) = self.predict_std(p);
        (self.y_mean + self.y_scale * mu, self.y_scale * sd)
    }

    fn standardize(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }
}

pub fn expected_improvement(mu: f64, sd: f64, best: f64, xi: f64) -> f64 {
    let gain = mu - best - xi;
    if sd <= 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / sd;
    let n = Normal::standard();
    gain * n.cdf(z) + sd * n.pdf(z)
}

/// Compass search in the unit cube starting at `start`.
fn compass(start: &[f64], f: &dyn Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut fx = f(&x);
    let mut step = 0.1;
    while step > 1e-3 {
        let mut improved = false;
        for k in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut t = x.clone();
                t[k] = (t[k] + dir * step).clamp(0.0, 1.0);
                if t[k] == x[k] {
                    continue;
                }
                let ft = f(&t);
                if ft > fx {
                    x = t;
                    fx = ft;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (x, fx)
}

const CANDIDATES: usize = 512;
const STARTS: usize = 6;
const XI: f64 = 0.01;

fn propose(s: &Surrogate, best_y: f64, best_x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = best_x.len();
    let target = s.standardize(best_y);
    let ei = |p: &[f64]| {
        let (mu, sd) = s.predict_std(p);
        expected_improvement(mu, sd, target, XI)
    };
    let mut pool: Vec<(Vec<f64>, f64)> = (0..CANDIDATES)
        .map(|_| {
            let p: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let v = ei(&p);
            (p, v)
        })
        .collect();
    pool.push((best_x.to_vec(), ei(best_x)));
    pool.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut starts: Vec<Vec<f64>> = pool.iter().take(STARTS - 1).map(|p| p.0.clone()).collect();
    starts.push(best_x.to_vec());
    let mut best = pool[0].clone();
    for st in &starts {
        let (x, v) = compass(st, &ei);
        if v > best.1 {
            best = (x, v);
        }
    }
    best.0
}

fn cache_key(p: &ParamSet) -> Vec<(String, u64)> {
    p.iter().map(|(k, v)| (k.clone(), v.to_bits())).collect()
}

/// Maximizes `objective` over `space`. The trace holds exactly
/// `budget.total` evaluations in order; repeated parameter sets are served
/// from a cache. Deterministic for a given seed.
pub fn optimize<F>(
    space: &ParamSpace,
    objective: F,
    budget: &OptimizeBudget,
    strategy: Strategy,
) -> Result<OptimizeResult>
where
    F: Fn(&ParamSet) -> f64 + Sync,
{
    budget.validate()?;
    if space.is_empty()
        || space.dims.iter().any(|d| !(d.upper >= d.lower) || !d.lower.is_finite() || !d.upper.is_finite())
        || space.dims.iter().all(|d| d.upper <= d.lower)
    {
        return Err(Error::InvalidInput("parameter space has zero volume".into()));
    }
    let dim = space.len();
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut xs: Vec<Vec<f64>> = match strategy {
        Strategy::Bayesian => shifted_halton(budget.explore, dim, &mut rng),
        Strategy::Random => (0..budget.explore)
            .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
            .collect(),
    };
    let mut cache: HashMap<Vec<(String, u64)>, f64> = HashMap::new();
    let explore_params: Vec<ParamSet> = xs.iter().map(|u| space.from_unit(u)).collect();
    let scores: Vec<f64> = explore_params.par_iter().map(&objective).collect();
    let mut trace: Vec<TracePoint> = Vec::with_capacity(budget.total);
    for (p, s) in explore_params.into_iter().zip(scores) {
        cache.insert(cache_key(&p), s);
        trace.push(TracePoint {
            phase: Phase::Explore,
            params: p,
            score: s,
        });
    }
    let mut lengths: Option<Vec<f64>> = None;
    for it in 0..budget.exploit {
        let ys: Vec<f64> = trace.iter().map(|t| t.score).collect();
        let (bi, &by) = ys
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let next = match strategy {
            Strategy::Random => (0..dim).map(|_| rng.random::<f64>()).collect(),
            Strategy::Bayesian => {
                let sweeps = if lengths.is_none() || it % 10 == 0 { 2 } else { 1 };
                match Surrogate::fit(&xs, &ys, lengths.as_deref(), sweeps) {
                    Some(s) => {
                        lengths = Some(s.lengths().to_vec());
                        propose(&s, by, &xs[bi], &mut rng)
                    }
                    None => (0..dim).map(|_| rng.random::<f64>()).collect(),
                }
            }
        };
        let p = space.from_unit(&next);
        let key = cache_key(&p);
        let s = match cache.get(&key) {
            Some(&s) => s,
            None => {
                let s = objective(&p);
                cache.insert(key, s);
                s
            }
        };
        xs.push(next);
        trace.push(TracePoint {
            phase: Phase::Exploit,
            params: p,
            score: s,
        });
    }
    let best = trace
        .iter()
        .fold(&trace[0], |a, b| if b.score > a.score { b } else { a });
    Ok(OptimizeResult {
        best: best.params.clone(),
        best_score: best.score,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_first_points() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn ei_properties() {
        assert_eq!(expected_improvement(1.0, 0.0, 0.5, 0.0), 0.5);
        assert_eq!(expected_improvement(0.0, 0.0, 0.5, 0.0), 0.0);
        // at the incumbent EI = sd·φ(0)
        let v = expected_improvement(0.0, 2.0, 0.0, 0.0);
        assert!((v - 2.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn surrogate_interpolates() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
        let y: Vec<f64> = x.iter().map(|p| (3.0 * p[0]).sin()).collect();
        let s = Surrogate::fit(&x, &y, None, 2).unwrap();
        for (p, v) in x.iter().zip(&y) {
            let (mu, sd) = s.predict(p);
            assert!((mu - v).abs() < 1e-3);
            assert!(sd < 1e-2);
        }
    }

    #[test]
    fn quadratic_peak() {
        let space = ParamSpace::new().real("x", 0.0, 1.0);
        let r = optimize(
            &space,
            |p| -(p.get("x").unwrap() - 0.7).powi(2),
            &OptimizeBudget::new(30, 70, 4),
            Strategy::Bayesian,
        )
        .unwrap();
        assert!((r.best.get("x").unwrap() - 0.7).abs() < 0.02);
        assert_eq!(r.trace.len(), 100);
    }

    #[test]
    fn constant_objective() {
        let space = ParamSpace::new().real("a", -1.0, 1.0).integer("n", 1.0, 6.0);
        let r = optimize(&space, |_| 0.25, &OptimizeBudget::new(30, 70, 1), Strategy::Bayesian).unwrap();
        assert_eq!(r.best_score, 0.25);
        assert_eq!(r.trace.len(), 100);
        assert!(r.trace.iter().all(|t| space.contains(&t.params)));
    }

    #[test]
    fn errors() {
        let flat = ParamSpace::new().real("a", 1.0, 1.0);
        assert!(optimize(&flat, |_| 0.0, &OptimizeBudget::default(), Strategy::Bayesian).is_err());
        let space = ParamSpace::new().real("a", 0.0, 1.0);
        let tiny = OptimizeBudget {
            total: 1,
            explore: 1,
            exploit: 0,
            seed: 0,
        };
        assert!(optimize(&space, |_| 0.0, &tiny, Strategy::Bayesian).is_err());
        let bad = OptimizeBudget {
            total: 100,
            explore: 30,
            exploit: 60,
            seed: 0,
        };
        assert!(optimize(&space, |_| 0.0, &bad, Strategy::Bayesian).is_err());
    }

    #[test]
    fn deterministic_trace() {
        let space = ParamSpace::new().real("a", 0.0, 2.0).real("b", -1.0, 1.0);
        let f = |p: &ParamSet| -(p.get("a").unwrap() - 1.2).abs() - (p.get("b").unwrap() + 0.3).powi(2);
        let b = OptimizeBudget::new(10, 15, 9);
        let r1 = optimize(&space, f, &b, Strategy::Bayesian).unwrap();
        let r2 = optimize(&space, f, &b, Strategy::Bayesian).unwrap();
        assert_eq!(r1, r2);
    }
}
