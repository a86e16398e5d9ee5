//! `diffcs`: generate instances, run diffusion l0-LMS reconstructions,
//! Monte-Carlo experiments, step-size searches and stability reports.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use diffcs_core::engine::{run, StopReason};
use diffcs_core::harness::{
    empirical_mu_max, mc_curve_csv, monte_carlo, run_curve_csv, sweep, sweep_csv, to_json, ExperimentConfig,
    MonteCarloRecord, PassRule, RunRecord, SweepParam,
};
use diffcs_core::signal::{generate_instance, partition_rows, ProblemInstance};
use diffcs_core::stability::{
    build_gamma, verify_theorem1, verify_theorem2, verify_theorem3, StabilityReport, DENSE_LIMIT,
};
use diffcs_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "diffcs", version, about = "Diffusion l0-LMS compressive sensing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a random problem instance to a binary file.
    Gen(GenArgs),
    /// Single reconstruction run; prints the learning curve as CSV.
    Run(RunArgs),
    /// Monte-Carlo experiment; prints the averaged learning curve as CSV.
    Mc(McArgs),
    /// Empirical search for the largest working step size.
    Mumax(MuMaxArgs),
    /// Stability report: period test, rho(F), step-size bracket and exact limit.
    Analyze(AnalyzeArgs),
    /// Monte-Carlo experiment per value of one parameter.
    Sweep(SweepArgs),
}

/// Settings shared by every experiment command. Flags override `--config`.
#[derive(Args, Debug, Default)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Number of nodes.
    #[arg(long)]
    p: Option<usize>,
    /// Links added per new node when growing the network.
    #[arg(long)]
    p_links: Option<usize>,
    #[arg(long)]
    topology_seed: Option<u64>,
    /// atc, cta, mb-atc, mb-cta or general.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Mini-batch size.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Use S = I (each node adapts with its own data only).
    #[arg(long)]
    no_adapt_exchange: bool,
    /// Disable the sparsity stop rule.
    #[arg(long)]
    no_stop: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    record_every: Option<usize>,
    /// CSV output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary file (default: stderr).
    #[arg(long)]
    summary: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_text(&fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };
        let mut set = |key: &str, value: Option<String>| -> Result<(), Error> {
            match value {
                Some(v) => cfg.set(key, &v),
                None => Ok(()),
            }
        };
        set("n", self.n.map(|v| v.to_string()))?;
        set("m", self.m.map(|v| v.to_string()))?;
        set("k", self.k.map(|v| v.to_string()))?;
        set("sigma", self.sigma.map(|v| v.to_string()))?;
        set("p", self.p.map(|v| v.to_string()))?;
        set("p_links", self.p_links.map(|v| v.to_string()))?;
        set("topology_seed", self.topology_seed.map(|v| v.to_string()))?;
        set("variant", self.variant.clone())?;
        set("mu", self.mu.map(|v| v.to_string()))?;
        set("xi", self.xi.map(|v| v.to_string()))?;
        set("delta", self.delta.map(|v| v.to_string()))?;
        set("tau", self.tau.map(|v| v.to_string()))?;
        set("q", self.q.map(|v| v.to_string()))?;
        set("max_iterations", self.max_iterations.map(|v| v.to_string()))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("record_every", self.record_every.map(|v| v.to_string()))?;
        set("out", self.out.as_ref().map(|p| p.display().to_string()))?;
        set("summary", self.summary.as_ref().map(|p| p.display().to_string()))?;
        if self.no_adapt_exchange {
            cfg.adapt_exchange = false;
        }
        if self.no_stop {
            cfg.stop_criterion = false;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    m: usize,
    #[arg(long, default_value_t = 25)]
    k: usize,
    #[arg(long, default_value_t = 3e-3)]
    sigma: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Instance written by `gen`; generated from the seed otherwise.
    #[arg(long)]
    instance: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct McArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct MuMaxArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 10)]
    runs_per_point: usize,
    /// Search interval `lo,hi`.
    #[arg(long, value_parser = parse_range)]
    range: (f64, f64),
    /// Pass rule: `all` (every run succeeds) or `no-divergence`.
    /// Defaults to `no-divergence` when xi = 0.
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    /// Also run the randomised Kronecker spectral-radius checks.
    #[arg(long)]
    check_theorems: bool,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Step sizes to classify, comma separated.
    #[arg(long, value_delimiter = ',')]
    test_mu: Vec<f64>,
    /// Relative tolerance of the exact step-size search.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Emit `key=value` records instead of `key: value` text.
    #[arg(long)]
    records: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// sigma, xi, p or mu.
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number '{a}'"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number '{b}'"))?;
    Ok((lo, hi))
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_summary(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<u8, Error> {
    let instance = generate_instance(args.n, args.m, args.k, args.sigma, args.seed)?;
    let file = io::BufWriter::new(fs::File::create(&args.out)?);
    instance.write_to(file)?;
    Ok(0)
}

fn cmd_run(args: &RunArgs) -> Result<u8, Error> {
    let cfg = args.common.resolve()?;
    let problem = match &args.instance {
        Some(path) => ProblemInstance::read_from(io::BufReader::new(fs::File::open(path)?))?,
        None => generate_instance(cfg.n, cfg.m, cfg.k, cfg.sigma, cfg.seed)?,
    };
    let cfg = ExperimentConfig { n: problem.n(), m: problem.m(), k: problem.signal.sparsity(), ..cfg };
    cfg.validate()?;
    let topology = cfg.topology()?;
    let weights = cfg.weights(&topology);
    let partition = partition_rows(cfg.m, cfg.p)?;
    let start = Instant::now();
    let result = run(&cfg.algorithm(cfg.seed), &problem, &partition, &weights, cfg.record_every)?;
    let record = RunRecord::new(&result, cfg.seed, start.elapsed().as_secs_f64());
    emit(cfg.out.as_deref(), &run_curve_csv(&result))?;
    emit_summary(cfg.summary.as_deref(), &to_json(&record))?;
    Ok(if result.stop_reason == StopReason::Divergence { EXIT_DIVERGED } else { 0 })
}

fn cmd_mc(args: &McArgs) -> Result<u8, Error> {
    let mut cfg = args.common.resolve()?;
    if let Some(r) = args.runs {
        cfg.runs = r;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    let mc = monte_carlo(&cfg)?;
    emit(cfg.out.as_deref(), &mc_curve_csv(&mc))?;
    emit_summary(cfg.summary.as_deref(), &to_json(&MonteCarloRecord::new(&mc, cfg.seed)))?;
    Ok(0)
}

fn cmd_mumax(args: &MuMaxArgs) -> Result<u8, Error> {
    let mut cfg = args.common.resolve()?;
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    let rule = match args.rule.as_deref() {
        Some("all") => PassRule::AllSucceed,
        Some("no-divergence") => PassRule::NoDivergence,
        Some(other) => return Err(Error::InvalidParameter(format!("unknown rule '{other}'"))),
        None if cfg.xi == 0.0 => PassRule::NoDivergence,
        None => PassRule::AllSucceed,
    };
    let (lo, hi) = args.range;
    let found = empirical_mu_max(&cfg, lo, hi, args.runs_per_point, rule)?;
    let mut text = String::from("mu,success_rate,diverged_runs,passed\n");
    for (mu, rate, div, pass) in &found.evaluations {
        text.push_str(&format!("{mu},{rate:.4},{div},{}\n", u8::from(*pass)));
    }
    emit(cfg.out.as_deref(), &text)?;
    match found.mu {
        Some(mu) if found.at_upper => eprintln!("mu_max >= {mu} (upper end of the range passes)"),
        Some(mu) => eprintln!("mu_max = {mu}"),
        None => eprintln!("mu_max not found: the lower end of the range fails"),
    }
    Ok(0)
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<u8, Error> {
    let cfg = args.common.resolve()?;
    cfg.validate()?;
    let topology = cfg.topology()?;
    let weights = cfg.weights(&topology);
    let mut report = StabilityReport::compute(&weights, cfg.n, cfg.m, cfg.mu, &args.test_mu, args.tol)?;
    if cfg.n * cfg.p <= DENSE_LIMIT {
        let problem = generate_instance(cfg.n, cfg.m, cfg.k, cfg.sigma, cfg.seed)?;
        let partition = partition_rows(cfg.m, cfg.p)?;
        let gamma = build_gamma(&problem, &partition, &weights, &cfg.algorithm(cfg.seed).step_sizes)?;
        report = report.with_gamma(&gamma);
    }
    if args.check_theorems {
        report = report.with_theorems(vec![
            verify_theorem1(args.trials, cfg.seed)?,
            verify_theorem2(args.trials, cfg.seed)?,
            verify_theorem3(args.trials, cfg.seed)?,
        ]);
    }
    let text = if args.records { report.to_records() } else { report.to_text() };
    emit(cfg.out.as_deref(), &text)?;
    Ok(0)
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8, Error> {
    let mut cfg = args.common.resolve()?;
    if let Some(r) = args.runs {
        cfg.runs = r;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    let param: SweepParam = args.param.parse()?;
    let rows = sweep(&cfg, param, &args.values)?;
    emit(cfg.out.as_deref(), &sweep_csv(&rows))?;
    Ok(0)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidParameter(_) | Error::Format(_) | Error::SizeGuard { .. } => EXIT_USAGE,
        Error::Eigen(_) | Error::Io(_) => EXIT_INTERNAL,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Mc(a) => cmd_mc(a),
        Command::Mumax(a) => cmd_mumax(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

