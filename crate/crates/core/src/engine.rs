//! Synchronous diffusion rounds.
//!
//! Every round has barrier semantics: a phase reads only buffers written by
//! the previous phase, so the order in which nodes are visited inside a
//! phase cannot change the result.
//!
//! Node `k` at iteration `i` adapts with
//!
//! ```text
//! θ_k = φ_k + μ_k Σ_l α_{l,k} (d_l(i) − φ_kᵀu_l(i)) u_l(i) + μ_k ξ z_δ(φ_k)
//! ```
//!
//! where `φ_k` is `w_k` (ATC), the `A1` combination of the neighbours'
//! estimates (CTA, general), and the result is optionally combined again
//! with `A2` (ATC, general).

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::matrix::{axpy, dist_sq, dot, norm_sq, RowMatrix};
use crate::network::WeightMatrices;
use crate::regularizer::{guard_rejects, sparsity, stop_check, zero_attraction_scalar, GuardParams, RegularizerParams};
use crate::rng::{substream, Purpose};
use crate::signal::{Partition, ProblemInstance};

/// Default recording stride for learning curves.
pub const DEFAULT_RECORD_EVERY: usize = 100;
/// Estimates with a larger Euclidean norm are treated as diverged.
pub const DEFAULT_DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Atc,
    Cta,
    MbAtc,
    MbCta,
    General,
}

impl Variant {
    pub fn is_minibatch(self) -> bool {
        matches!(self, Variant::MbAtc | Variant::MbCta)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Atc => "atc",
            Variant::Cta => "cta",
            Variant::MbAtc => "mb-atc",
            Variant::MbCta => "mb-cta",
            Variant::General => "general",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "atc" => Ok(Variant::Atc),
            "cta" => Ok(Variant::Cta),
            "mb-atc" | "mbatc" => Ok(Variant::MbAtc),
            "mb-cta" | "mbcta" => Ok(Variant::MbCta),
            "general" => Ok(Variant::General),
            other => invalid(format!("unknown variant '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepSizes {
    Shared(f64),
    PerNode(Vec<f64>),
}

impl StepSizes {
    pub fn resolve(&self, p: usize) -> Result<Vec<f64>> {
        let mus = match self {
            StepSizes::Shared(mu) => vec![*mu; p],
            StepSizes::PerNode(v) if v.len() == p => v.clone(),
            StepSizes::PerNode(v) => return invalid(format!("{} step sizes for {p} nodes", v.len())),
        };
        if mus.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return invalid("step sizes must be finite and nonnegative");
        }
        Ok(mus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig {
    pub variant: Variant,
    pub step_sizes: StepSizes,
    pub reg: RegularizerParams,
    /// Mini-batch size `Q`; ignored by the non-batch variants.
    pub batch_size: usize,
    /// Maximum number of rounds `C`.
    pub max_iterations: usize,
    /// `false` replaces `S` by the identity.
    pub use_adaptation_exchange: bool,
    pub use_stop_criterion: bool,
    pub guard: GuardParams,
    /// Seed of the per-node mini-batch streams.
    pub seed: u64,
    pub divergence_norm: f64,
}

impl AlgorithmConfig {
    pub fn new(variant: Variant, mu: f64, reg: RegularizerParams, max_iterations: usize) -> Self {
        Self {
            variant,
            step_sizes: StepSizes::Shared(mu),
            reg,
            batch_size: 1,
            max_iterations,
            use_adaptation_exchange: true,
            use_stop_criterion: true,
            guard: GuardParams::default(),
            seed: 0,
            divergence_norm: DEFAULT_DIVERGENCE_NORM,
        }
    }
}

/// Per-node iterates plus the scratch buffers of a round.
#[derive(Debug, Clone)]
pub struct DiffusionState {
    /// 1-based iteration index of `weights`.
    pub iteration: usize,
    /// `w_k(i)` for every node.
    pub weights: Vec<Vec<f64>>,
    /// `ψ_k` (ATC) or `φ_k` (CTA, general) of the last round.
    pub intermediates: Vec<Vec<f64>>,
    /// Sparsity of the network average over the last `window` iterations.
    pub avg_sparsity_history: VecDeque<usize>,
    pub diverged: bool,
    next: Vec<Vec<f64>>,
    grad: Vec<f64>,
    batches: Vec<Vec<usize>>,
    node_rngs: Vec<ChaCha8Rng>,
}

impl DiffusionState {
    pub fn zeros(p: usize, n: usize, seed: u64) -> Self {
        Self {
            iteration: 1,
            weights: vec![vec![0.0; n]; p],
            intermediates: vec![vec![0.0; n]; p],
            avg_sparsity_history: VecDeque::new(),
            diverged: false,
            next: vec![vec![0.0; n]; p],
            grad: vec![0.0; n],
            batches: vec![Vec::new(); p],
            node_rngs: (0..p).map(|k| substream(seed, Purpose::MiniBatch, k as u64)).collect(),
        }
    }

    /// `(1/P) Σ_k w_k`
    pub fn average(&self) -> Vec<f64> {
        let n = self.weights[0].len();
        let mut avg = vec![0.0; n];
        for w in &self.weights {
            for (a, v) in avg.iter_mut().zip(w) {
                *a += v;
            }
        }
        let p = self.weights.len() as f64;
        avg.iter_mut().for_each(|a| *a /= p);
        avg
    }
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    Criterion,
    MaxIterations,
    Divergence,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::Criterion => "criterion",
            StopReason::MaxIterations => "max-iterations",
            StopReason::Divergence => "divergence",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Network average at the last iteration.
    pub final_estimate: Vec<f64>,
    /// Rounds executed.
    pub iterations_used: usize,
    pub stop_reason: StopReason,
    /// Iteration index of each recorded point.
    pub recorded_iterations: Vec<usize>,
    /// `‖w̄(i) − x‖²` at each recorded iteration.
    pub msd_trace: Vec<f64>,
    /// `s(w̄(i))` at each recorded iteration.
    pub sparsity_trace: Vec<usize>,
    /// `‖w̄ − x‖²` of the final estimate.
    pub final_msd: f64,
}

/// `(d − wᵀu)·u`
pub fn instantaneous_gradient(u: &[f64], d: f64, w: &[f64]) -> Vec<f64> {
    let e = d - dot(w, u);
    u.iter().map(|v| e * v).collect()
}

/// `(1/Q)·Uᵀ(D − U·w)`
pub fn minibatch_gradient(rows: &RowMatrix, obs: &[f64], w: &[f64]) -> Vec<f64> {
    assert_eq!(rows.rows(), obs.len());
    let mut g = vec![0.0; rows.cols()];
    for (q, d) in obs.iter().enumerate() {
        let u = rows.row(q);
        axpy(&mut g, d - dot(w, u), u);
    }
    let inv = 1.0 / obs.len() as f64;
    g.iter_mut().for_each(|v| *v *= inv);
    g
}

/// A node's mini-batch: local indices (0-based) and the gathered data.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    pub indices: Vec<usize>,
    pub rows: RowMatrix,
    pub obs: Vec<f64>,
}

fn draw_local_indices(rng: &mut ChaCha8Rng, local_count: usize, q: usize, out: &mut Vec<usize>) {
    out.clear();
    out.extend((0..q).map(|_| rng.random_range(0..local_count)));
}

/// Draws `q` local rows of `node` uniformly with replacement.
pub fn sample_minibatch(
    problem: &ProblemInstance,
    partition: &Partition,
    node: usize,
    q: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MiniBatch> {
    let Some(&local_count) = partition.counts.get(node) else {
        return invalid(format!("node {node} out of range"));
    };
    if q == 0 || q > local_count {
        return invalid(format!("batch size {q} must be in 1..={local_count}"));
    }
    let mut indices = Vec::new();
    draw_local_indices(rng, local_count, q, &mut indices);
    let global: Vec<usize> = indices.iter().map(|&r| partition.node_rows[node][r]).collect();
    let rows: Vec<&[f64]> = global.iter().map(|&g| problem.theta.row(g)).collect();
    Ok(MiniBatch {
        rows: RowMatrix::from_rows(&rows),
        obs: global.iter().map(|&g| problem.observations[g]).collect(),
        indices,
    })
}

/// Nonzero entries of each column of a weight matrix: `list[k]` holds
/// `(l, W[(l, k)])`.
fn column_lists(m: &DMatrix<f64>) -> Vec<Vec<(usize, f64)>> {
    (0..m.ncols())
        .map(|k| (0..m.nrows()).filter(|&l| m[(l, k)] != 0.0).map(|l| (l, m[(l, k)])).collect())
        .collect()
}

fn combine_into(list: &[(usize, f64)], src: &[Vec<f64>], out: &mut [f64]) {
    out.fill(0.0);
    for &(l, w) in list {
        axpy(out, w, &src[l]);
    }
}

/// A configured diffusion network bound to one problem instance.
pub struct Diffusion<'a> {
    problem: &'a ProblemInstance,
    partition: &'a Partition,
    config: &'a AlgorithmConfig,
    steps: Vec<f64>,
    adapt: Vec<Vec<(usize, f64)>>,
    combine1: Vec<Vec<(usize, f64)>>,
    combine2: Vec<Vec<(usize, f64)>>,
}

impl<'a> Diffusion<'a> {
    pub fn new(
        config: &'a AlgorithmConfig,
        problem: &'a ProblemInstance,
        partition: &'a Partition,
        weights: &WeightMatrices,
    ) -> Result<Self> {
        let p = partition.node_count();
        if weights.node_count() != p || weights.a1.nrows() != p || weights.a2.nrows() != p {
            return invalid(format!("weights are for {} nodes, partition has {p}", weights.node_count()));
        }
        if partition.counts.iter().sum::<usize>() != problem.m() {
            return invalid("partition does not cover the measurement rows");
        }
        if config.max_iterations == 0 {
            return invalid("max_iterations must be >= 1");
        }
        if !(config.reg.delta > 0.0 && config.reg.tau > 0.0 && config.reg.xi >= 0.0) {
            return invalid("delta and tau must be positive and xi nonnegative");
        }
        if config.variant.is_minibatch() && (config.batch_size == 0 || config.batch_size > partition.min_count()) {
            return invalid(format!(
                "batch size {} must be in 1..={}",
                config.batch_size,
                partition.min_count()
            ));
        }
        let steps = config.step_sizes.resolve(p)?;
        let adapt = if config.use_adaptation_exchange {
            column_lists(&weights.s)
        } else {
            (0..p).map(|k| vec![(k, 1.0)]).collect()
        };
        Ok(Self {
            problem,
            partition,
            config,
            steps,
            adapt,
            combine1: column_lists(&weights.a1),
            combine2: column_lists(&weights.a2),
        })
    }

    pub fn node_count(&self) -> usize {
        self.partition.node_count()
    }

    pub fn initial_state(&self) -> DiffusionState {
        DiffusionState::zeros(self.node_count(), self.problem.n(), self.config.seed)
    }

    /// Adaptation of node `k` evaluated at `point`, written to `out`.
    /// With `batches` the gradients are mini-batch averages, otherwise the
    /// cyclic rows of `iteration` are used.
    #[allow(clippy::too_many_arguments)]
    fn adapt_into(
        &self,
        k: usize,
        point: &[f64],
        iteration: usize,
        batches: Option<&[Vec<usize>]>,
        grad: &mut [f64],
        out: &mut [f64],
    ) {
        let theta = &self.problem.theta;
        let y = &self.problem.observations;
        grad.fill(0.0);
        for &(l, alpha) in &self.adapt[k] {
            match batches {
                None => {
                    let row = self.partition.row_at(l, iteration);
                    let u = theta.row(row);
                    let e = y[row] - dot(point, u);
                    axpy(grad, alpha * e, u);
                }
                Some(b) => {
                    let scale = alpha / b[l].len() as f64;
                    for &row in &b[l] {
                        let u = theta.row(row);
                        let e = y[row] - dot(point, u);
                        axpy(grad, scale * e, u);
                    }
                }
            }
        }
        let mu = self.steps[k];
        let xi = self.config.reg.xi;
        if xi == 0.0 {
            for ((o, p), g) in out.iter_mut().zip(point).zip(grad.iter()) {
                *o = p + mu * g;
            }
        } else {
            let delta = self.config.reg.delta;
            let mx = mu * xi;
            for ((o, p), g) in out.iter_mut().zip(point).zip(grad.iter()) {
                *o = p + mu * g + mx * zero_attraction_scalar(*p, delta);
            }
        }
    }

    fn draw_batches(&self, state: &mut DiffusionState) {
        let q = self.config.batch_size;
        for k in 0..self.node_count() {
            let DiffusionState { batches, node_rngs, .. } = state;
            draw_local_indices(&mut node_rngs[k], self.partition.counts[k], q, &mut batches[k]);
            for r in batches[k].iter_mut() {
                *r = self.partition.node_rows[k][*r];
            }
        }
    }

    /// Adapt at `w_k`, then combine with `A2`.
    pub fn step_atc(&self, state: &mut DiffusionState) {
        self.round(state, Variant::Atc, None);
    }

    /// Combine with `A1`, then adapt at `φ_k`.
    pub fn step_cta(&self, state: &mut DiffusionState) {
        self.round(state, Variant::Cta, None);
    }

    /// Combine with `A1`, adapt, combine with `A2`.
    pub fn step_general(&self, state: &mut DiffusionState) {
        self.round(state, Variant::General, None);
    }

    /// ATC with mini-batch gradients and the sparsity guard.
    pub fn step_mb_atc(&self, state: &mut DiffusionState) {
        self.round(state, Variant::MbAtc, None);
    }

    /// CTA with mini-batch gradients and the sparsity guard.
    pub fn step_mb_cta(&self, state: &mut DiffusionState) {
        self.round(state, Variant::MbCta, None);
    }

    /// One round of the configured variant.
    pub fn step(&self, state: &mut DiffusionState) {
        self.round(state, self.config.variant, None);
    }

    /// One round visiting nodes in `order` inside every phase.
    #[doc(hidden)]
    pub fn step_in_order(&self, state: &mut DiffusionState, order: &[usize]) {
        self.round(state, self.config.variant, Some(order));
    }

    fn round(&self, state: &mut DiffusionState, variant: Variant, order: Option<&[usize]>) {
        let p = self.node_count();
        let natural: Vec<usize>;
        let order = match order {
            Some(o) => {
                debug_assert_eq!(o.len(), p);
                o
            }
            None => {
                natural = (0..p).collect();
                &natural
            }
        };
        let i = state.iteration;
        if variant.is_minibatch() {
            self.draw_batches(state);
        }
        let DiffusionState { weights, intermediates, next, grad, batches, .. } = state;
        let batches = variant.is_minibatch().then_some(batches.as_slice());
        match variant {
            Variant::Atc | Variant::MbAtc => {
                for &k in order {
                    self.adapt_into(k, &weights[k], i, batches, grad, &mut intermediates[k]);
                }
                for &k in order {
                    combine_into(&self.combine2[k], intermediates, &mut next[k]);
                }
            }
            Variant::Cta | Variant::MbCta => {
                for &k in order {
                    combine_into(&self.combine1[k], weights, &mut intermediates[k]);
                }
                for &k in order {
                    self.adapt_into(k, &intermediates[k], i, batches, grad, &mut next[k]);
                }
            }
            Variant::General => {
                for &k in order {
                    combine_into(&self.combine1[k], weights, &mut intermediates[k]);
                }
                // θ_k lands in `weights`; the old estimates are no longer read.
                for &k in order {
                    self.adapt_into(k, &intermediates[k], i, None, grad, &mut weights[k]);
                }
                for &k in order {
                    combine_into(&self.combine2[k], weights, &mut next[k]);
                }
            }
        }
        if variant.is_minibatch() {
            let n = self.problem.n();
            let tau = self.config.reg.tau;
            for &k in order {
                if guard_rejects(sparsity(&weights[k], tau), sparsity(&next[k], tau), i, n, &self.config.guard) {
                    next[k].copy_from_slice(&weights[k]);
                }
            }
        }
        std::mem::swap(weights, next);
        state.iteration += 1;
        let limit = self.config.divergence_norm * self.config.divergence_norm;
        state.diverged |= state.weights.iter().any(|w| {
            let sq = norm_sq(w);
            !sq.is_finite() || sq > limit
        });
    }

    /// Runs rounds until the stop rule fires on the network average, the
    /// iteration budget is spent, or the iterates diverge. The deviation
    /// and sparsity of the average are recorded every `record_every`
    /// iterations (starting at iteration 1) and at the end.
    pub fn run(&self, record_every: usize) -> Result<RunResult> {
        if record_every == 0 {
            return invalid("record stride must be >= 1");
        }
        let x = self.problem.signal.dense();
        let tau = self.config.reg.tau;
        let window = self.config.reg.window;
        let mut state = self.initial_state();
        let mut out = RunResult {
            final_estimate: Vec::new(),
            iterations_used: 0,
            stop_reason: StopReason::MaxIterations,
            recorded_iterations: Vec::new(),
            msd_trace: Vec::new(),
            sparsity_trace: Vec::new(),
            final_msd: f64::NAN,
        };
        let mut avg = state.average();
        let record = |out: &mut RunResult, i: usize, avg: &[f64], s: usize| {
            out.recorded_iterations.push(i);
            out.msd_trace.push(dist_sq(avg, &x));
            out.sparsity_trace.push(s);
        };
        record(&mut out, 1, &avg, sparsity(&avg, tau));
        while out.iterations_used < self.config.max_iterations {
            self.step(&mut state);
            out.iterations_used += 1;
            avg = state.average();
            let s = sparsity(&avg, tau);
            if state.avg_sparsity_history.len() == window {
                state.avg_sparsity_history.pop_front();
            }
            state.avg_sparsity_history.push_back(s);
            let i = state.iteration;
            if state.diverged {
                out.stop_reason = StopReason::Divergence;
            } else if self.config.use_stop_criterion
                && stop_check(state.avg_sparsity_history.make_contiguous(), window, self.config.reg.band)
            {
                out.stop_reason = StopReason::Criterion;
            }
            let done = out.stop_reason != StopReason::MaxIterations
                || out.iterations_used == self.config.max_iterations;
            if (i - 1) % record_every == 0 || done {
                record(&mut out, i, &avg, s);
            }
            if done {
                break;
            }
        }
        out.final_msd = dist_sq(&avg, &x);
        out.final_estimate = avg;
        Ok(out)
    }
}

fn with_variant(config: &AlgorithmConfig, variant: Variant) -> AlgorithmConfig {
    AlgorithmConfig { variant, ..config.clone() }
}

/// One general-form round applied to `state`.
pub fn step_general(
    state: &mut DiffusionState,
    config: &AlgorithmConfig,
    problem: &ProblemInstance,
    partition: &Partition,
    weights: &WeightMatrices,
) -> Result<()> {
    let cfg = with_variant(config, Variant::General);
    Diffusion::new(&cfg, problem, partition, weights)?.step_general(state);
    Ok(())
}

/// One ATC round applied to `state`.
pub fn step_atc(
    state: &mut DiffusionState,
    config: &AlgorithmConfig,
    problem: &ProblemInstance,
    partition: &Partition,
    weights: &WeightMatrices,
) -> Result<()> {
    let cfg = with_variant(config, Variant::Atc);
    Diffusion::new(&cfg, problem, partition, weights)?.step_atc(state);
    Ok(())
}

/// One CTA round applied to `state`.
pub fn step_cta(
    state: &mut DiffusionState,
    config: &AlgorithmConfig,
    problem: &ProblemInstance,
    partition: &Partition,
    weights: &WeightMatrices,
) -> Result<()> {
    let cfg = with_variant(config, Variant::Cta);
    Diffusion::new(&cfg, problem, partition, weights)?.step_cta(state);
    Ok(())
}

/// One mini-batch ATC round applied to `state`.
pub fn step_mb_atc(
    state: &mut DiffusionState,
    config: &AlgorithmConfig,
    problem: &ProblemInstance,
    partition: &Partition,
    weights: &WeightMatrices,
) -> Result<()> {
    let cfg = with_variant(config, Variant::MbAtc);
    Diffusion::new(&cfg, problem, partition, weights)?.step_mb_atc(state);
    Ok(())
}

/// Runs the configured variant to completion.
pub fn run(
    config: &AlgorithmConfig,
    problem: &ProblemInstance,
    partition: &Partition,
    weights: &WeightMatrices,
    record_every: usize,
) -> Result<RunResult> {
    Diffusion::new(config, problem, partition, weights)?.run(record_every)
}
