//! Multi-seed experiment runner.
//!
//! An [`ExperimentConfig`] names an instance source, the fairness fractions,
//! a horizon, a seed list and the algorithms to compare. Seeds run in
//! parallel; results are collected in seed order, so every output file is a
//! deterministic function of the config.
//!
//! Config schema (JSON):
//!
//! ```json
//! {
//!   "instance": { "kind": "generator", "n": 4, "m": 3, "lo": 0.1, "hi": 0.9,
//!                 "filter": "lp_feasible", "seed": 7 },
//!   "c": 0.3,
//!   "T": 100000,
//!   "seeds": [1, 2, 3],
//!   "algorithms": [ { "name": "explore_first", "alpha": 0.67 },
//!                   { "name": "reward_fair_ucb" },
//!                   { "name": "dual_heuristic", "refresh": 500 } ],
//!   "output_dir": "out",
//!   "options": { "clamp_confidence": false }
//! }
//! ```
//!
//! `instance.kind` is one of `inline` (`"A"`, optional `"noise"`, `"sigma"`),
//! `generator`, or `movielens` (`"ratings"`, `"movies"` paths). `c` is either
//! a scalar broadcast to every agent or a per-agent list; when omitted it
//! defaults to `1/m`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{Algorithm, RunOptions};
use crate::error::{Error, Result};
use crate::ingest::build_user_genre_matrix;
use crate::instance::{argmax_first, BanditInstance, NoiseModel};
use crate::matrix::Matrix;
use crate::metrics::{loglog_slope, RegretTrace};
use crate::policy::{
    check_sufficient_feasibility, feasibility_report, is_fair, solve_p1, WITNESS_TOL,
};
use crate::rng::RunRng;

/// Fraction of the horizon used for the slopes in the summary.
pub const SLOPE_WINDOW: f64 = 0.5;
/// Upper bound on draws before a generator gives up.
const MAX_GENERATOR_ATTEMPTS: usize = 100_000;

/// Alphas of the default Explore-First sweep.
pub const DEFAULT_ALPHAS: [f64; 11] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.67];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityFilter {
    /// `sum C <= 1` or `max C <= 1/min(n, m)`; depends on `C` only.
    SufficientConditions,
    /// P1 must have a solution on the drawn matrix.
    LpFeasible,
}

/// Random mean matrices with entries uniform on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceGenerator {
    pub n: usize,
    pub m: usize,
    pub lo: f64,
    pub hi: f64,
    pub filter: FeasibilityFilter,
    pub seed: u64,
    /// Also reject draws where the welfare-maximising arm is already fair,
    /// so that the fairness constraints shape the optimum.
    #[serde(default)]
    pub require_binding: bool,
}

impl InstanceGenerator {
    /// First draw from the generator's stream that passes the filter.
    pub fn generate(&self, c: &[f64]) -> Result<Matrix> {
        if !(self.lo > 0.0 && self.lo <= self.hi && self.hi <= 1.0) {
            return Err(Error::Config(format!(
                "generator range [{}, {}] must satisfy 0 < lo <= hi <= 1",
                self.lo, self.hi
            )));
        }
        if self.n == 0 || self.m < 2 || c.len() != self.n {
            return Err(Error::Config(format!(
                "generator needs n >= 1, m >= 2 and {} fairness fractions, got n={}, m={}, |C|={}",
                self.n,
                self.n,
                self.m,
                c.len()
            )));
        }
        if self.filter == FeasibilityFilter::SufficientConditions {
            let (s, x) = check_sufficient_feasibility(c, self.n, self.m);
            if !(s || x) {
                return Err(Error::SufficientConditionsNotMet);
            }
        }
        let mut rng = RunRng::new(self.seed, 1);
        for _ in 0..MAX_GENERATOR_ATTEMPTS {
            let a = Matrix::from_fn(self.n, self.m, |_, _| {
                self.lo + (self.hi - self.lo) * rng.uniform()
            });
            if self.accepts(&a, c)? {
                return Ok(a);
            }
        }
        Err(Error::Config(format!(
            "generator found no acceptable instance in {MAX_GENERATOR_ATTEMPTS} draws"
        )))
    }

    fn accepts(&self, a: &Matrix, c: &[f64]) -> Result<bool> {
        let feasible = match solve_p1(a, c) {
            Ok(_) => true,
            Err(Error::Infeasible(_)) => false,
            Err(e) => return Err(e),
        };
        if !feasible {
            // such draws are feasible by construction, so a failure here
            // is a solver problem rather than a rejection
            if self.filter == FeasibilityFilter::SufficientConditions {
                return Err(Error::NumericalFailure(
                    "P1 infeasible under a sufficient condition".into(),
                ));
            }
            return Ok(false);
        }
        if self.require_binding {
            let best = argmax_first(&a.column_sums());
            let mut point = vec![0.0; self.m];
            point[best] = 1.0;
            if is_fair(a, c, &point, WITNESS_TOL) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    Inline {
        #[serde(rename = "A")]
        a: Matrix,
        #[serde(default)]
        noise: NoiseModel,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    Generator(InstanceGenerator),
    Movielens {
        ratings: PathBuf,
        movies: PathBuf,
    },
}

fn default_sigma() -> f64 {
    0.5
}

/// Fairness fractions: one value for every agent, or one per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CSpec {
    Scalar(f64),
    PerAgent(Vec<f64>),
}

impl CSpec {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Self::Scalar(c) => Ok(vec![*c; n]),
            Self::PerAgent(v) if v.len() == n => Ok(v.clone()),
            Self::PerAgent(v) => Err(Error::DimensionMismatch {
                expected: n,
                actual: v.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<CSpec>,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub algorithms: Vec<Algorithm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub options: RunOptions,
}

fn default_horizon() -> usize {
    100_000
}

fn default_seeds() -> Vec<u64> {
    (1..=20).collect()
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Materialises the instance described by the config.
    pub fn build_instance(&self) -> Result<BanditInstance> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        let fractions = |n: usize, m: usize| match &self.c {
            Some(spec) => spec.expand(n),
            None => Ok(vec![1.0 / m as f64; n]),
        };
        let (a, c, noise, sigma) = match &self.instance {
            InstanceSource::Inline { a, noise, sigma } => {
                (a.clone(), fractions(a.rows(), a.cols())?, *noise, *sigma)
            }
            InstanceSource::Generator(g) => {
                let c = fractions(g.n, g.m)?;
                (g.generate(&c)?, c, NoiseModel::Bernoulli, 0.5)
            }
            InstanceSource::Movielens { ratings, movies } => {
                let m = build_user_genre_matrix(ratings, movies)?.matrix;
                let c = fractions(m.rows(), m.cols())?;
                (m, c, NoiseModel::Bernoulli, 0.5)
            }
        };
        if self.horizon < a.cols() {
            return Err(Error::Config(format!(
                "horizon {} shorter than the {} arms",
                self.horizon,
                a.cols()
            )));
        }
        BanditInstance::with_noise(a, c, self.horizon, noise, sigma)
    }
}

/// Per-round mean and sample standard deviation across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub sw_mean: Vec<f64>,
    pub sw_std: Vec<f64>,
    pub fr_mean: Vec<f64>,
    pub fr_std: Vec<f64>,
}

/// Two-pass mean and sample standard deviation (0 for a single value).
fn mean_std(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (k - 1.0)).sqrt())
}

fn pointwise_mean_std(series: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let len = series.first().map_or(0, |s| s.len());
    let mut column = vec![0.0; series.len()];
    (0..len)
        .map(|t| {
            for (c, s) in column.iter_mut().zip(series) {
                *c = s[t];
            }
            mean_std(&column)
        })
        .unzip()
}

impl Aggregate {
    pub fn from_traces(traces: &[RegretTrace]) -> Self {
        let sw: Vec<&[f64]> = traces.iter().map(|t| t.sw_cum.as_slice()).collect();
        let fr: Vec<&[f64]> = traces.iter().map(|t| t.fr_cum.as_slice()).collect();
        let (sw_mean, sw_std) = pointwise_mean_std(&sw);
        let (fr_mean, fr_std) = pointwise_mean_std(&fr);
        Self {
            sw_mean,
            sw_std,
            fr_mean,
            fr_std,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,sw_mean,sw_std,fr_mean,fr_std")?;
        for t in 0..self.sw_mean.len() {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e}",
                t + 1,
                self.sw_mean[t],
                self.sw_std[t],
                self.fr_mean[t],
                self.fr_std[t]
            )?;
        }
        Ok(())
    }
}

/// Summary line for one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub seeds: usize,
    pub final_sw_mean: f64,
    pub final_sw_std: f64,
    pub final_fr_mean: f64,
    pub final_fr_std: f64,
    pub normalized_sw: f64,
    pub normalized_fr: f64,
    /// Log-log slope of the mean curve over the last half of the horizon;
    /// `None` where the mean curve is not positive there.
    pub sw_slope: Option<f64>,
    pub fr_slope: Option<f64>,
    pub fallback_events: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone)]
pub struct AlgorithmResult {
    pub algorithm: Algorithm,
    pub traces: Vec<RegretTrace>,
    pub aggregate: Aggregate,
    pub summary: AlgorithmSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub instance_digest: String,
    pub agents: usize,
    pub arms: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub optimal_welfare: f64,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<AlgorithmSummary>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub instance: BanditInstance,
    pub results: Vec<AlgorithmResult>,
    pub summary: ExperimentSummary,
}

/// Runs `algorithm` once per seed, in parallel, returning traces in seed order.
pub fn run_seeds(
    inst: &BanditInstance,
    algorithm: &Algorithm,
    seeds: &[u64],
    opts: &RunOptions,
) -> Result<Vec<RegretTrace>> {
    seeds
        .par_iter()
        .map(|&s| algorithm.run(inst, s, opts))
        .collect()
}

fn summarize(algorithm: &Algorithm, traces: &[RegretTrace], agg: &Aggregate) -> AlgorithmSummary {
    let finals = |f: fn(&RegretTrace) -> f64| mean_std(&traces.iter().map(f).collect::<Vec<_>>());
    let (sw_m, sw_s) = finals(RegretTrace::final_sw);
    let (fr_m, fr_s) = finals(RegretTrace::final_fr);
    let horizon = agg.sw_mean.len().max(1) as f64;
    let covered: u64 = traces.iter().map(|t| t.coverage.covered).sum();
    let checked: u64 = traces.iter().map(|t| t.coverage.checked).sum();
    AlgorithmSummary {
        algorithm: algorithm.label(),
        seeds: traces.len(),
        final_sw_mean: sw_m,
        final_sw_std: sw_s,
        final_fr_mean: fr_m,
        final_fr_std: fr_s,
        normalized_sw: sw_m / horizon,
        normalized_fr: fr_m / horizon,
        sw_slope: loglog_slope(&agg.sw_mean, SLOPE_WINDOW).ok(),
        fr_slope: loglog_slope(&agg.fr_mean, SLOPE_WINDOW).ok(),
        fallback_events: traces.iter().map(|t| t.fallback_events).sum(),
        coverage: if checked == 0 {
            1.0
        } else {
            covered as f64 / checked as f64
        },
    }
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Feasibility gate shared by experiments and sweeps; returns the optimal welfare.
fn optimal_welfare(inst: &BanditInstance) -> Result<f64> {
    let report = feasibility_report(inst.means(), inst.fairness())?;
    if !report.lp_feasible {
        return Err(Error::InfeasibleInstance(Box::new(report)));
    }
    Ok(solve_p1(inst.means(), inst.fairness())?.welfare)
}

/// Runs every configured algorithm on every seed.
///
/// With an output directory, writes `<algorithm>_seed<seed>.csv` per run,
/// `<algorithm>_aggregate.csv` per algorithm, `instance.json` and
/// `summary.json`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    if config.algorithms.is_empty() {
        return Err(Error::Config("no algorithms configured".into()));
    }
    let inst = config.build_instance()?;
    let welfare = optimal_welfare(&inst)?;
    let opts = RunOptions {
        optimal_welfare: Some(welfare),
        ..config.options.clone()
    };
    let mut results = Vec::with_capacity(config.algorithms.len());
    for alg in &config.algorithms {
        let traces = run_seeds(&inst, alg, &config.seeds, &opts)?;
        let aggregate = Aggregate::from_traces(&traces);
        let summary = summarize(alg, &traces, &aggregate);
        results.push(AlgorithmResult {
            algorithm: *alg,
            traces,
            aggregate,
            summary,
        });
    }
    let summary = ExperimentSummary {
        instance_digest: inst.digest(),
        agents: inst.agents(),
        arms: inst.arms(),
        horizon: inst.horizon(),
        optimal_welfare: welfare,
        seeds: config.seeds.clone(),
        algorithms: results.iter().map(|r| r.summary.clone()).collect(),
    };
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir)?;
        for r in &results {
            let label = r.algorithm.label();
            for t in &r.traces {
                write_file(&dir.join(format!("{label}_seed{}.csv", t.meta.seed)), |w| {
                    t.write_csv(w)
                })?;
            }
            write_file(&dir.join(format!("{label}_aggregate.csv")), |w| {
                r.aggregate.write_csv(w)
            })?;
        }
        fs::write(dir.join("instance.json"), inst.to_json())?;
        fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&summary)?,
        )?;
    }
    Ok(ExperimentResult {
        instance: inst,
        results,
        summary,
    })
}

/// One row of an Explore-First sweep: regrets divided by `T`, averaged over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub normalized_sw: f64,
    pub normalized_fr: f64,
}

impl SweepRow {
    pub fn combined(&self) -> f64 {
        self.normalized_sw + self.normalized_fr
    }
}

/// Explore-First on the configured instance for each `alpha` (the config's
/// algorithm list is ignored). Writes `sweep.csv` when an output directory
/// is set. Rows follow the order of `alphas`.
pub fn alpha_sweep(config: &ExperimentConfig, alphas: &[f64]) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::Config("alpha list is empty".into()));
    }
    let inst = config.build_instance()?;
    let opts = RunOptions {
        optimal_welfare: Some(optimal_welfare(&inst)?),
        track_coverage: false,
        ..config.options.clone()
    };
    let rows = alphas
        .iter()
        .map(|&alpha| {
            let traces = run_seeds(
                &inst,
                &Algorithm::ExploreFirst { alpha },
                &config.seeds,
                &opts,
            )?;
            let k = traces.len() as f64;
            Ok(SweepRow {
                alpha,
                normalized_sw: traces.iter().map(RegretTrace::normalized_sw).sum::<f64>() / k,
                normalized_fr: traces.iter().map(RegretTrace::normalized_fr).sum::<f64>() / k,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir)?;
        write_file(&dir.join("sweep.csv"), |w| {
            writeln!(w, "alpha,normalized_sw,normalized_fr,combined")?;
            for r in &rows {
                writeln!(
                    w,
                    "{},{:e},{:e},{:e}",
                    r.alpha,
                    r.normalized_sw,
                    r.normalized_fr,
                    r.combined()
                )?;
            }
            Ok(())
        })?;
    }
    Ok(rows)
}
