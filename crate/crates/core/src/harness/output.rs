use std::fmt::Write as _;

use serde::Serialize;

use crate::engine::RunResult;

use super::montecarlo::{msd_db, MonteCarloResult, SweepRow, SUCCESS_MSD};

/// Learning curve of one run: `iteration,msd_db,avg_sparsity,stopped`.
pub fn run_curve_csv(result: &RunResult) -> String {
    let mut s = String::from("iteration,msd_db,avg_sparsity,stopped\n");
    let last = result.recorded_iterations.len().saturating_sub(1);
    for (j, it) in result.recorded_iterations.iter().enumerate() {
        let db = msd_db(&[result.msd_trace[j]]).unwrap_or(f64::NAN);
        let _ = writeln!(s, "{it},{db:.6},{:.3},{}", result.sparsity_trace[j] as f64, u8::from(j == last));
    }
    s
}

/// Averaged learning curve of a Monte-Carlo experiment.
pub fn mc_curve_csv(mc: &MonteCarloResult) -> String {
    let mut s = String::from("iteration,msd_db,avg_sparsity,stopped\n");
    for j in 0..mc.grid.len() {
        let _ = writeln!(
            s,
            "{},{:.6},{:.3},{}",
            mc.grid[j],
            mc.msd_db_trace[j],
            mc.avg_sparsity_trace[j],
            u8::from(mc.stopped_trace[j])
        );
    }
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("value,msd_db,success_rate,iterations_mean\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.6},{:.4},{:.1}", r.value, r.msd_db, r.success_rate, r.iterations_mean);
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub final_msd_db: f64,
    pub iterations_used: usize,
    pub stop_reason: String,
    pub success: bool,
    pub seed: u64,
    pub elapsed_seconds: f64,
}

impl RunRecord {
    pub fn new(result: &RunResult, seed: u64, elapsed_seconds: f64) -> Self {
        Self {
            final_msd_db: msd_db(&[result.final_msd]).unwrap_or(f64::NAN),
            iterations_used: result.iterations_used,
            stop_reason: result.stop_reason.to_string(),
            success: result.final_msd < SUCCESS_MSD,
            seed,
            elapsed_seconds,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloRecord {
    pub runs: usize,
    pub success_rate: f64,
    pub final_msd_db: f64,
    pub mean_iterations: f64,
    pub diverged_runs: usize,
    pub seed: u64,
    pub elapsed_seconds: f64,
    pub per_run: Vec<PerRun>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerRun {
    pub run_index: usize,
    pub seed: u64,
    pub final_msd_db: Option<f64>,
    pub iterations_used: Option<usize>,
    pub stop_reason: Option<String>,
    pub success: bool,
    pub error: Option<String>,
}

impl MonteCarloRecord {
    pub fn new(mc: &MonteCarloResult, seed: u64) -> Self {
        Self {
            runs: mc.runs.len(),
            success_rate: mc.success_rate,
            final_msd_db: mc.final_msd_db,
            mean_iterations: mc.mean_iterations,
            diverged_runs: mc.diverged_runs(),
            seed,
            elapsed_seconds: mc.wall_seconds,
            per_run: mc
                .runs
                .iter()
                .map(|r| PerRun {
                    run_index: r.run_index,
                    seed: r.seed,
                    final_msd_db: r.result.as_ref().and_then(|x| msd_db(&[x.final_msd]).ok()),
                    iterations_used: r.result.as_ref().map(|x| x.iterations_used),
                    stop_reason: r.result.as_ref().map(|x| x.stop_reason.to_string()),
                    success: r.success(),
                    error: r.error.clone(),
                })
                .collect(),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    // Non-finite floats serialise as null.
    serde_json::to_string_pretty(value).expect("plain data serialises")
}
