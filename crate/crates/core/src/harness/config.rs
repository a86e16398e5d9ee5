use std::fmt::Write as _;
use std::path::PathBuf;

use crate::engine::{AlgorithmConfig, StepSizes, Variant, DEFAULT_DIVERGENCE_NORM, DEFAULT_RECORD_EVERY};
use crate::error::{invalid, Error, Result};
use crate::network::{grow_network, NetworkTopology, Ordering, WeightMatrices};
use crate::regularizer::{default_window, GuardParams, RegularizerParams};

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub sigma: f64,
    pub p: usize,
    pub p_links: usize,
    pub topology_seed: u64,
    pub variant: Variant,
    pub mu: f64,
    pub xi: f64,
    pub delta: f64,
    pub tau: f64,
    /// Stop-rule window; `None` means `0.2·N`.
    pub window: Option<usize>,
    pub band: usize,
    pub q: usize,
    pub max_iterations: usize,
    pub adapt_exchange: bool,
    pub stop_criterion: bool,
    pub runs: usize,
    pub seed: u64,
    pub workers: usize,
    pub record_every: usize,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            m: 200,
            k: 25,
            sigma: 3e-3,
            p: 20,
            p_links: 3,
            topology_seed: 1,
            variant: Variant::Atc,
            mu: 4.0,
            xi: 5e-6,
            delta: 10.0,
            tau: 1e-3,
            window: None,
            band: 20,
            q: 1,
            max_iterations: 100_000,
            adapt_exchange: true,
            stop_criterion: true,
            runs: 50,
            seed: 1,
            workers: 1,
            record_every: DEFAULT_RECORD_EVERY,
            out: None,
            summary: None,
        }
    }
}

/// Recognised keys, in the order [`ExperimentConfig::to_text`] writes them.
pub const CONFIG_KEYS: &[&str] = &[
    "n",
    "m",
    "k",
    "sigma",
    "p",
    "p_links",
    "topology_seed",
    "variant",
    "mu",
    "xi",
    "delta",
    "tau",
    "window",
    "band",
    "q",
    "max_iterations",
    "adapt_exchange",
    "stop_criterion",
    "runs",
    "seed",
    "workers",
    "record_every",
    "out",
    "summary",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidParameter(format!("cannot parse {key} = '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => invalid(format!("cannot parse {key} = '{value}' as a boolean")),
    }
}

impl ExperimentConfig {
    /// Parses a flat `key = value` file on top of the defaults. `#` starts a
    /// comment; unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Format(format!("line {}: expected key = value", lineno + 1)));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = parse(key, value)?,
            "m" => self.m = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "p" => self.p = parse(key, value)?,
            "p_links" => self.p_links = parse(key, value)?,
            "topology_seed" => self.topology_seed = parse(key, value)?,
            "variant" => self.variant = value.parse()?,
            "mu" => self.mu = parse(key, value)?,
            "xi" => self.xi = parse(key, value)?,
            "delta" => self.delta = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "window" => {
                self.window = match value {
                    "auto" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "band" => self.band = parse(key, value)?,
            "q" => self.q = parse(key, value)?,
            "max_iterations" => self.max_iterations = parse(key, value)?,
            "adapt_exchange" => self.adapt_exchange = parse_bool(key, value)?,
            "stop_criterion" => self.stop_criterion = parse_bool(key, value)?,
            "runs" => self.runs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "record_every" => self.record_every = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "summary" => self.summary = Some(PathBuf::from(value)),
            other => return invalid(format!("unknown configuration key '{other}'")),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let window = self.window.map_or_else(|| "auto".to_string(), |w| w.to_string());
        let values: Vec<(&str, Option<String>)> = vec![
            ("n", Some(self.n.to_string())),
            ("m", Some(self.m.to_string())),
            ("k", Some(self.k.to_string())),
            ("sigma", Some(self.sigma.to_string())),
            ("p", Some(self.p.to_string())),
            ("p_links", Some(self.p_links.to_string())),
            ("topology_seed", Some(self.topology_seed.to_string())),
            ("variant", Some(self.variant.to_string())),
            ("mu", Some(self.mu.to_string())),
            ("xi", Some(self.xi.to_string())),
            ("delta", Some(self.delta.to_string())),
            ("tau", Some(self.tau.to_string())),
            ("window", Some(window)),
            ("band", Some(self.band.to_string())),
            ("q", Some(self.q.to_string())),
            ("max_iterations", Some(self.max_iterations.to_string())),
            ("adapt_exchange", Some(self.adapt_exchange.to_string())),
            ("stop_criterion", Some(self.stop_criterion.to_string())),
            ("runs", Some(self.runs.to_string())),
            ("seed", Some(self.seed.to_string())),
            ("workers", Some(self.workers.to_string())),
            ("record_every", Some(self.record_every.to_string())),
            ("out", path(&self.out)),
            ("summary", path(&self.summary)),
        ];
        for (k, v) in values {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.k > self.n {
            return invalid(format!("need n, m >= 1 and k <= n (n={}, m={}, k={})", self.n, self.m, self.k));
        }
        if self.p == 0 || self.p > self.m {
            return invalid(format!("need 1 <= p <= m (p={}, m={})", self.p, self.m));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return invalid("sigma must be finite and nonnegative");
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return invalid("mu must be finite and nonnegative");
        }
        if !(self.xi >= 0.0 && self.delta > 0.0 && self.tau > 0.0) {
            return invalid("need xi >= 0, delta > 0, tau > 0");
        }
        if self.runs == 0 || self.workers == 0 || self.record_every == 0 || self.max_iterations == 0 {
            return invalid("runs, workers, record_every and max_iterations must be >= 1");
        }
        if self.variant.is_minibatch() && (self.q == 0 || self.q > self.m / self.p) {
            return invalid(format!("batch size q = {} must be in 1..={}", self.q, self.m / self.p));
        }
        Ok(())
    }

    pub fn regularizer(&self) -> RegularizerParams {
        RegularizerParams {
            xi: self.xi,
            delta: self.delta,
            tau: self.tau,
            window: self.window.unwrap_or_else(|| default_window(self.n)),
            band: self.band,
        }
    }

    /// Algorithm settings; `seed` drives the mini-batch streams.
    pub fn algorithm(&self, seed: u64) -> AlgorithmConfig {
        AlgorithmConfig {
            variant: self.variant,
            step_sizes: StepSizes::Shared(self.mu),
            reg: self.regularizer(),
            batch_size: self.q,
            max_iterations: self.max_iterations,
            use_adaptation_exchange: self.adapt_exchange,
            use_stop_criterion: self.stop_criterion,
            guard: GuardParams::default(),
            seed,
            divergence_norm: DEFAULT_DIVERGENCE_NORM,
        }
    }

    /// `T_p` network; with `P ≤ p_links` the first `P` nodes of the seed
    /// clique, i.e. a complete graph.
    pub fn topology(&self) -> Result<NetworkTopology> {
        if self.p <= self.p_links {
            NetworkTopology::complete(self.p)
        } else {
            grow_network(self.p, self.p_links, self.topology_seed)
        }
    }

    /// Standard weights for the configured ordering.
    pub fn weights(&self, topology: &NetworkTopology) -> WeightMatrices {
        let ordering = match self.variant {
            Variant::Atc | Variant::MbAtc => Ordering::AdaptThenCombine,
            Variant::Cta | Variant::MbCta => Ordering::CombineThenAdapt,
            Variant::General => Ordering::Both,
        };
        let w = WeightMatrices::standard(topology, ordering);
        if self.adapt_exchange {
            w
        } else {
            w.without_adaptation_exchange()
        }
    }
}
