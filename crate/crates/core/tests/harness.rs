use diffcs_core::harness::{
    empirical_mu_max, mc_curve_csv, monte_carlo, msd_db, run_curve_csv, sweep, sweep_csv, to_json,
    ExperimentConfig, MonteCarloRecord, PassRule, RunRecord, SweepParam, MSD_DB_FLOOR, SUCCESS_MSD,
};
use diffcs_core::stability::mu_exact;

fn small() -> ExperimentConfig {
    ExperimentConfig {
        n: 200,
        m: 40,
        k: 4,
        sigma: 0.0,
        p: 4,
        p_links: 2,
        mu: 0.5,
        xi: 1e-4,
        runs: 6,
        max_iterations: 6000,
        stop_criterion: false,
        record_every: 250,
        ..Default::default()
    }
}

fn exact_limit(cfg: &ExperimentConfig) -> f64 {
    let topo = cfg.topology().unwrap();
    let w = cfg.weights(&topo);
    mu_exact(&w.a2, &w.s, cfg.n, cfg.m, cfg.p, 1e-9).unwrap().mu
}

#[test]
fn msd_db_examples() {
    assert!((msd_db(&[0.01]).unwrap() + 20.0).abs() < 1e-12);
    assert_eq!(msd_db(&[0.0]).unwrap(), MSD_DB_FLOOR);
    assert!((msd_db(&[0.01, 0.03]).unwrap() + 16.9897).abs() < 1e-4);
    assert!(msd_db(&[]).is_err());
}

#[test]
fn single_run_aggregate_is_the_run_trace() {
    let cfg = ExperimentConfig { runs: 1, ..small() };
    let mc = monte_carlo(&cfg).unwrap();
    let run = mc.runs[0].result.as_ref().unwrap();
    assert_eq!(mc.grid, run.recorded_iterations);
    for (j, db) in mc.msd_db_trace.iter().enumerate() {
        assert_eq!(*db, msd_db(&[run.msd_trace[j]]).unwrap());
    }
    assert_eq!(mc.final_msd_db, msd_db(&[run.final_msd]).unwrap());
}

#[test]
fn aggregate_is_pointwise_mean_with_carry_forward() {
    // the stop rule gives runs of different lengths
    let cfg = ExperimentConfig { stop_criterion: true, runs: 5, max_iterations: 20_000, ..small() };
    let mc = monte_carlo(&cfg).unwrap();
    let lengths: Vec<usize> = mc.runs.iter().map(|r| r.result.as_ref().unwrap().iterations_used).collect();
    assert!(lengths.iter().any(|&l| l != lengths[0]), "{lengths:?}");
    for (j, &it) in mc.grid.iter().enumerate() {
        let mut sum = 0.0;
        for r in &mc.runs {
            let res = r.result.as_ref().unwrap();
            let end = *res.recorded_iterations.last().unwrap();
            sum += if it >= end {
                res.final_msd
            } else {
                let pos = res.recorded_iterations.iter().position(|&x| x == it).unwrap();
                res.msd_trace[pos]
            };
        }
        let expected = 10.0 * (sum / mc.runs.len() as f64).log10();
        assert!((mc.msd_db_trace[j] - expected).abs() <= 1e-12, "{j}");
    }
    assert!(mc.stopped_trace.last().copied().unwrap());
    assert!(!mc.stopped_trace[0]);
}

#[test]
fn success_flags_follow_the_threshold() {
    let mc = monte_carlo(&small()).unwrap();
    let mut hits = 0;
    for r in &mc.runs {
        let ok = r.result.as_ref().unwrap().final_msd < SUCCESS_MSD;
        assert_eq!(r.success(), ok);
        hits += usize::from(ok);
    }
    assert_eq!(mc.success_rate, hits as f64 / mc.runs.len() as f64);
    assert!((0.0..=1.0).contains(&mc.success_rate));
}

#[test]
fn worker_count_does_not_change_results() {
    let one = monte_carlo(&ExperimentConfig { workers: 1, ..small() }).unwrap();
    let three = monte_carlo(&ExperimentConfig { workers: 3, ..small() }).unwrap();
    assert_eq!(mc_curve_csv(&one), mc_curve_csv(&three));
    assert_eq!(one.runs, three.runs);
    let again = monte_carlo(&small()).unwrap();
    assert_eq!(mc_curve_csv(&one), mc_curve_csv(&again));
}

#[test]
fn adding_runs_keeps_earlier_runs() {
    let few = monte_carlo(&ExperimentConfig { runs: 2, ..small() }).unwrap();
    let more = monte_carlo(&ExperimentConfig { runs: 4, ..small() }).unwrap();
    assert_eq!(few.runs[..], more.runs[..2]);
}

#[test]
fn xi_sweep_needs_sparsity_pressure() {
    let rows = sweep(&small(), SweepParam::Xi, &[0.0, 1e-4]).unwrap();
    assert_eq!(rows[0].success_rate, 0.0);
    assert_eq!(rows[1].success_rate, 1.0);
    let csv = sweep_csv(&rows);
    assert!(csv.starts_with("value,msd_db,success_rate,iterations_mean\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn noiseless_sigma_anchor() {
    let rows = sweep(&small(), SweepParam::Sigma, &[0.0, 0.3]).unwrap();
    assert!(rows[0].msd_db < rows[1].msd_db);
    assert!(rows[0].msd_db < -30.0);
}

#[test]
fn mu_sweep_collapses_past_the_limit() {
    let cfg = small();
    let limit = exact_limit(&cfg);
    let values: Vec<f64> = [0.25, 0.5, 1.0, 1.5, 2.0].iter().map(|f| f * limit).collect();
    let rows = sweep(&cfg, SweepParam::Mu, &values).unwrap();
    assert_eq!(rows[0].success_rate, 1.0);
    assert_eq!(rows[4].success_rate, 0.0);
    // non-increasing beyond the first failure, allowing one inversion
    let first_fail = rows.iter().position(|r| r.success_rate < 1.0).unwrap();
    let inversions = rows[first_fail..].windows(2).filter(|w| w[1].success_rate > w[0].success_rate).count();
    assert!(inversions <= 1);
}

#[test]
fn sweep_rejects_bad_values() {
    assert!("alpha".parse::<SweepParam>().is_err());
    assert!(sweep(&small(), SweepParam::P, &[2.5]).is_err());
}

#[test]
fn diffusion_extends_the_empirical_limit() {
    let net = ExperimentConfig { runs: 4, max_iterations: 20_000, ..small() };
    let lone = ExperimentConfig { p: 1, ..net.clone() };
    let (net_exact, lone_exact) = (exact_limit(&net), exact_limit(&lone));
    let a = empirical_mu_max(&net, 0.4 * net_exact, 2.0 * net_exact, 4, PassRule::AllSucceed).unwrap();
    let b = empirical_mu_max(&lone, 0.4 * lone_exact, 2.0 * lone_exact, 4, PassRule::AllSucceed).unwrap();
    let (a, b) = (a.mu.unwrap(), b.mu.unwrap());
    let ratio = a / b;
    assert!(ratio > 1.0 && ratio <= 4.0, "{ratio}");

    // without the attractor a single node stays below its mean-square limit
    let plain = ExperimentConfig { xi: 0.0, ..lone.clone() };
    let bounded = empirical_mu_max(&plain, 0.4 * lone_exact, 2.0 * lone_exact, 4, PassRule::NoDivergence).unwrap();
    assert!(bounded.mu.unwrap() < lone_exact, "{:?} vs {lone_exact}", bounded.mu);

    let again = empirical_mu_max(&net, 0.4 * net_exact, 2.0 * net_exact, 4, PassRule::AllSucceed).unwrap();
    assert_eq!(again.mu, Some(a));
}

#[test]
fn empirical_search_reports_not_found() {
    let cfg = ExperimentConfig { runs: 2, max_iterations: 2000, ..small() };
    let r = empirical_mu_max(&cfg, 50.0, 100.0, 2, PassRule::AllSucceed).unwrap();
    assert_eq!(r.mu, None);
    assert!(!r.at_upper);
    assert!(empirical_mu_max(&cfg, 1.0, 0.5, 2, PassRule::AllSucceed).is_err());
    assert!(empirical_mu_max(&cfg, 0.1, 0.5, 0, PassRule::AllSucceed).is_err());
}

#[test]
fn csv_and_json_outputs() {
    let cfg = ExperimentConfig { runs: 2, ..small() };
    let mc = monte_carlo(&cfg).unwrap();
    let csv = mc_curve_csv(&mc);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,msd_db,avg_sparsity,stopped"));
    assert_eq!(lines.count(), mc.grid.len());
    assert!(csv.trim_end().ends_with(",1"));

    let run = mc.runs[0].result.as_ref().unwrap();
    let single = run_curve_csv(run);
    assert_eq!(single.lines().count(), run.recorded_iterations.len() + 1);

    let record = RunRecord::new(run, 7, 0.5);
    let json: serde_json::Value = serde_json::from_str(&to_json(&record)).unwrap();
    for key in ["final_msd_db", "iterations_used", "stop_reason", "success", "seed", "elapsed_seconds"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    let summary: serde_json::Value = serde_json::from_str(&to_json(&MonteCarloRecord::new(&mc, 1))).unwrap();
    assert_eq!(summary["per_run"].as_array().unwrap().len(), 2);
}

#[test]
fn config_files_parse_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.cfg");
    std::fs::write(&path, "# desk run\nn = 300\nm = 60 # measurements\nvariant = mb-atc\nq = 3\n").unwrap();
    let mut cfg = ExperimentConfig::from_text(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!((cfg.n, cfg.m, cfg.q), (300, 60, 3));
    cfg.set("n", "400").unwrap();
    assert_eq!(cfg.n, 400);
    assert!(cfg.set("nodes", "3").is_err());
    assert!(ExperimentConfig { q: 50, ..cfg.clone() }.validate().is_err());
    assert!(ExperimentConfig { runs: 0, ..cfg }.validate().is_err());
}
