//! Zero attraction, thresholded sparsity and the sparsity-based stop rule.

/// Regularisation and stopping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerParams {
    /// Weight of the l0 term.
    pub xi: f64,
    /// Zero-attraction parameter; the attractor is dead beyond `1/delta`.
    pub delta: f64,
    /// Magnitude above which a component counts as nonzero.
    pub tau: f64,
    /// Stop-rule window length `L_s`.
    pub window: usize,
    /// Stop-rule band `p_s`.
    pub band: usize,
}

impl RegularizerParams {
    /// Defaults: `delta = 10`, `tau = 1e-3`, `p_s = 20`, `L_s = 0.2·n`.
    pub fn with_defaults(xi: f64, n: usize) -> Self {
        Self { xi, delta: 10.0, tau: 1e-3, window: default_window(n), band: 20 }
    }
}

pub fn default_window(n: usize) -> usize {
    ((n as f64) * 0.2).round().max(1.0) as usize
}

/// Constants of the mini-batch sparsity guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardParams {
    /// An update is rejected when the sparsity grows by more than
    /// `ratio` times the previous sparsity.
    pub ratio: f64,
    /// The guard is armed once the iteration exceeds `ceil(gate_fraction·N)`.
    pub gate_fraction: f64,
}

impl Default for GuardParams {
    fn default() -> Self {
        Self { ratio: 1.5, gate_fraction: 0.02 }
    }
}

impl GuardParams {
    pub fn gate(&self, n: usize) -> usize {
        (self.gate_fraction * n as f64).ceil() as usize
    }
}

/// Scalar zero attractor. Zero maps to zero.
#[inline]
pub fn zero_attraction_scalar(w: f64, delta: f64) -> f64 {
    let inv = 1.0 / delta;
    if w > 0.0 && w <= inv {
        delta * delta * w - delta
    } else if w < 0.0 && w >= -inv {
        delta * delta * w + delta
    } else {
        0.0
    }
}

/// Componentwise approximation of `-∇‖w‖₀`.
pub fn zero_attraction(w: &[f64], delta: f64) -> Vec<f64> {
    w.iter().map(|&v| zero_attraction_scalar(v, delta)).collect()
}

/// Number of components with `|w_j| > tau`.
pub fn sparsity(w: &[f64], tau: f64) -> usize {
    w.iter().filter(|v| v.abs() > tau).count()
}

/// True when more than 80% of the last `window` sparsity values lie within
/// `band` of their minimum. Returns false until `window` values exist.
pub fn stop_check(history: &[usize], window: usize, band: usize) -> bool {
    if window == 0 || history.len() < window {
        return false;
    }
    let recent = &history[history.len() - window..];
    let s_min = *recent.iter().min().expect("window >= 1");
    let count = recent.iter().filter(|&&s| s <= s_min + band).count();
    // count > 0.8 * window, in integers
    5 * count > 4 * window
}

/// Whether the guard rejects a step from sparsity `prev` to `next` taken at
/// iteration `iteration` on an `n`-dimensional signal.
pub fn guard_rejects(prev: usize, next: usize, iteration: usize, n: usize, params: &GuardParams) -> bool {
    iteration > params.gate(n) && (next as f64 - prev as f64) > params.ratio * prev as f64
}

/// Returns `prev_w` when the sparsity jump is rejected, otherwise `next_w`.
pub fn sparsity_guard<'a>(
    prev_w: &'a [f64],
    next_w: &'a [f64],
    tau: f64,
    iteration: usize,
    n: usize,
    params: &GuardParams,
) -> &'a [f64] {
    assert_eq!(prev_w.len(), next_w.len());
    if guard_rejects(sparsity(prev_w, tau), sparsity(next_w, tau), iteration, n, params) {
        prev_w
    } else {
        next_w
    }
}
