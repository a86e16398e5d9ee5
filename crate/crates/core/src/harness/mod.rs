//! Monte-Carlo experiments: configuration, seeding, aggregation, empirical
//! step-size search, parameter sweeps and CSV/JSON output.

mod config;
mod montecarlo;
mod output;

pub use config::{ExperimentConfig, CONFIG_KEYS};
pub use montecarlo::{
    empirical_mu_max, monte_carlo, monte_carlo_on, msd_db, sweep, MonteCarloResult, MuMaxResult, PassRule,
    RunSummary, SweepParam, SweepRow, MSD_DB_FLOOR, MU_SEARCH_TOL, SUCCESS_MSD,
};
pub use output::{mc_curve_csv, run_curve_csv, sweep_csv, to_json, MonteCarloRecord, PerRun, RunRecord};
