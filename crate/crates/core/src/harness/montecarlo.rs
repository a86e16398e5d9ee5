use std::time::Instant;

use rayon::prelude::*;

use crate::engine::{run, RunResult, StopReason};
use crate::error::{invalid, Error, Result};
use crate::network::{NetworkTopology, WeightMatrices};
use crate::rng::child_seed;
use crate::signal::{generate_instance, partition_rows};

use super::config::ExperimentConfig;

/// Linear MSD below which a run counts as a successful reconstruction.
pub const SUCCESS_MSD: f64 = 1e-2;
/// Value reported for exact recovery.
pub const MSD_DB_FLOOR: f64 = -300.0;

/// `10·log10(mean of squared error norms)`, floored at −300 dB.
pub fn msd_db(errors_sq: &[f64]) -> Result<f64> {
    if errors_sq.is_empty() {
        return invalid("msd_db of an empty list");
    }
    let mean = errors_sq.iter().sum::<f64>() / errors_sq.len() as f64;
    Ok(to_db(mean))
}

fn to_db(mean: f64) -> f64 {
    if mean > 0.0 {
        (10.0 * mean.log10()).max(MSD_DB_FLOOR)
    } else if mean == 0.0 {
        MSD_DB_FLOOR
    } else {
        f64::NAN
    }
}

/// One Monte-Carlo run, reduced to what the aggregate needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_index: usize,
    pub seed: u64,
    /// `None` when the run could not be set up.
    pub result: Option<RunResult>,
    pub error: Option<String>,
}

impl RunSummary {
    pub fn success(&self) -> bool {
        self.result.as_ref().is_some_and(|r| r.final_msd < SUCCESS_MSD)
    }

    pub fn diverged(&self) -> bool {
        self.result.as_ref().is_some_and(|r| r.stop_reason == StopReason::Divergence)
    }

    /// Squared error at iteration `it`; after the run ended its final value.
    pub fn msd_at(&self, it: usize) -> Option<(f64, usize, bool)> {
        let r = self.result.as_ref()?;
        let end = *r.recorded_iterations.last()?;
        if it >= end {
            return Some((r.final_msd, *r.sparsity_trace.last()?, true));
        }
        let j = r.recorded_iterations.binary_search(&it).ok()?;
        Some((r.msd_trace[j], r.sparsity_trace[j], false))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub runs: Vec<RunSummary>,
    /// Iterations of the aggregated curve.
    pub grid: Vec<usize>,
    pub msd_db_trace: Vec<f64>,
    pub avg_sparsity_trace: Vec<f64>,
    /// True once every run has ended.
    pub stopped_trace: Vec<bool>,
    pub success_rate: f64,
    /// MSD in dB of the final estimates.
    pub final_msd_db: f64,
    pub mean_iterations: f64,
    pub wall_seconds: f64,
}

impl MonteCarloResult {
    pub fn diverged_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.diverged()).count()
    }

    /// First grid iteration at which the averaged curve is at or below `db`.
    pub fn first_crossing(&self, db: f64) -> Option<usize> {
        self.msd_db_trace.iter().position(|&v| v <= db).map(|j| self.grid[j])
    }
}

fn run_one(cfg: &ExperimentConfig, weights: &WeightMatrices, run_index: usize) -> RunSummary {
    let seed = child_seed(cfg.seed, run_index as u64);
    let outcome = (|| -> Result<RunResult> {
        let problem = generate_instance(cfg.n, cfg.m, cfg.k, cfg.sigma, seed)?;
        let partition = partition_rows(cfg.m, cfg.p)?;
        run(&cfg.algorithm(seed), &problem, &partition, weights, cfg.record_every)
    })();
    match outcome {
        Ok(r) => RunSummary { run_index, seed, result: Some(r), error: None },
        Err(e) => RunSummary { run_index, seed, result: None, error: Some(e.to_string()) },
    }
}

/// Pointwise average of the runs on the common recording grid. A run that
/// has ended contributes its final value to every later point.
fn aggregate(cfg: &ExperimentConfig, runs: &[RunSummary]) -> (Vec<usize>, Vec<f64>, Vec<f64>, Vec<bool>) {
    let last = runs
        .iter()
        .filter_map(|r| r.result.as_ref().and_then(|x| x.recorded_iterations.last().copied()))
        .max()
        .unwrap_or(1);
    let mut grid: Vec<usize> = (1..=last).step_by(cfg.record_every).collect();
    if grid.last() != Some(&last) {
        grid.push(last);
    }
    let mut msd = Vec::with_capacity(grid.len());
    let mut spars = Vec::with_capacity(grid.len());
    let mut stopped = Vec::with_capacity(grid.len());
    for &it in &grid {
        let points: Vec<(f64, usize, bool)> = runs.iter().filter_map(|r| r.msd_at(it)).collect();
        let errs: Vec<f64> = points.iter().map(|p| p.0).collect();
        msd.push(msd_db(&errs).unwrap_or(f64::NAN));
        spars.push(points.iter().map(|p| p.1 as f64).sum::<f64>() / points.len().max(1) as f64);
        stopped.push(points.iter().all(|p| p.2));
    }
    (grid, msd, spars, stopped)
}

/// Runs `cfg.runs` independent instances on `cfg.workers` threads. Run `r`
/// is seeded from `(cfg.seed, r)`; the topology is shared by all runs.
pub fn monte_carlo(cfg: &ExperimentConfig) -> Result<MonteCarloResult> {
    cfg.validate()?;
    let topology = cfg.topology()?;
    monte_carlo_on(cfg, &topology)
}

/// As [`monte_carlo`] with an explicit topology.
pub fn monte_carlo_on(cfg: &ExperimentConfig, topology: &NetworkTopology) -> Result<MonteCarloResult> {
    cfg.validate()?;
    if topology.node_count() != cfg.p {
        return invalid(format!("topology has {} nodes, config asks for {}", topology.node_count(), cfg.p));
    }
    let start = Instant::now();
    let weights = cfg.weights(topology);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let runs: Vec<RunSummary> =
        pool.install(|| (0..cfg.runs).into_par_iter().map(|r| run_one(cfg, &weights, r)).collect());
    let (grid, msd_db_trace, avg_sparsity_trace, stopped_trace) = aggregate(cfg, &runs);
    let finals: Vec<f64> = runs.iter().filter_map(|r| r.result.as_ref().map(|x| x.final_msd)).collect();
    let done: Vec<usize> = runs.iter().filter_map(|r| r.result.as_ref().map(|x| x.iterations_used)).collect();
    Ok(MonteCarloResult {
        success_rate: runs.iter().filter(|r| r.success()).count() as f64 / runs.len() as f64,
        final_msd_db: msd_db(&finals).unwrap_or(f64::NAN),
        mean_iterations: done.iter().sum::<usize>() as f64 / done.len().max(1) as f64,
        runs,
        grid,
        msd_db_trace,
        avg_sparsity_trace,
        stopped_trace,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// When a step size passes in the empirical search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassRule {
    /// Every run reconstructs the signal.
    AllSucceed,
    /// No run diverges.
    NoDivergence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuMaxResult {
    /// Largest passing step size; `None` if even the lower end fails.
    pub mu: Option<f64>,
    /// True when the upper end of the range already passes.
    pub at_upper: bool,
    /// `(μ, success rate, diverged runs, passed)` in evaluation order.
    pub evaluations: Vec<(f64, f64, usize, bool)>,
}

/// Relative resolution of the empirical search.
pub const MU_SEARCH_TOL: f64 = 0.05;

/// Geometric bisection for the largest passing step size in `[lo, hi]`.
/// Every point uses the same `runs_per_point` instances.
pub fn empirical_mu_max(
    cfg: &ExperimentConfig,
    lo: f64,
    hi: f64,
    runs_per_point: usize,
    rule: PassRule,
) -> Result<MuMaxResult> {
    if runs_per_point == 0 {
        return invalid("runs_per_point must be >= 1");
    }
    if !(lo > 0.0 && hi > lo) {
        return invalid(format!("search range must satisfy 0 < lo < hi, got [{lo}, {hi}]"));
    }
    let topology = cfg.topology()?;
    let mut evaluations = Vec::new();
    let mut eval = |mu: f64| -> Result<bool> {
        let point = ExperimentConfig { mu, runs: runs_per_point, ..cfg.clone() };
        let mc = monte_carlo_on(&point, &topology)?;
        let diverged = mc.diverged_runs();
        let pass = match rule {
            PassRule::AllSucceed => mc.success_rate >= 1.0,
            PassRule::NoDivergence => diverged == 0,
        };
        evaluations.push((mu, mc.success_rate, diverged, pass));
        Ok(pass)
    };
    if eval(hi)? {
        return Ok(MuMaxResult { mu: Some(hi), at_upper: true, evaluations });
    }
    if !eval(lo)? {
        return Ok(MuMaxResult { mu: None, at_upper: false, evaluations });
    }
    let (mut a, mut b) = (lo, hi);
    while b / a > 1.0 + MU_SEARCH_TOL {
        let mid = (a * b).sqrt();
        if eval(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(MuMaxResult { mu: Some(a), at_upper: false, evaluations })
}

/// Swept parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Sigma,
    Xi,
    P,
    Mu,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(SweepParam::Sigma),
            "xi" => Ok(SweepParam::Xi),
            "p" | "P" => Ok(SweepParam::P),
            "mu" => Ok(SweepParam::Mu),
            other => invalid(format!("unknown sweep parameter '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub msd_db: f64,
    pub success_rate: f64,
    pub iterations_mean: f64,
}

/// One Monte-Carlo experiment per value. The topology seed is held fixed;
/// because networks grow by appending nodes, a `P` sweep sees nested graphs.
pub fn sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut point = cfg.clone();
        match param {
            SweepParam::Sigma => point.sigma = value,
            SweepParam::Xi => point.xi = value,
            SweepParam::Mu => point.mu = value,
            SweepParam::P => {
                if value < 1.0 || value.fract() != 0.0 {
                    return invalid(format!("node count {value} is not a positive integer"));
                }
                point.p = value as usize;
            }
        }
        let mc = monte_carlo(&point)?;
        rows.push(SweepRow {
            value,
            msd_db: mc.final_msd_db,
            success_rate: mc.success_rate,
            iterations_mean: mc.mean_iterations,
        });
    }
    Ok(rows)
}
