//! Randomised checks of the Kronecker spectral-radius inequalities used by
//! the mean-square analysis. Matrices have i.i.d. standard normal entries.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::rng::{substream, Purpose};

use super::linalg::{kron, spectral_radius};

pub const THEOREM1_TOL: f64 = 1e-10;
pub const THEOREM2_TOL: f64 = 1e-8;
pub const THEOREM3_TOL: f64 = 1e-10;

/// Sizes tried per trial: sequence length `t` and matrix order `l`.
const MAX_T: usize = 4;
const MAX_L: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub name: &'static str,
    pub trials: usize,
    pub violations: usize,
    /// Largest amount by which the checked relation was missed (0 if never).
    pub max_violation: f64,
    pub tolerance: f64,
}

impl TheoremReport {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { name, trials: 0, violations: 0, max_violation: 0.0, tolerance }
    }

    fn record(&mut self, miss: f64) {
        if miss > self.tolerance {
            self.violations += 1;
        }
        self.max_violation = self.max_violation.max(miss);
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, l: usize) -> DMatrix<f64> {
    DMatrix::from_fn(l, l, |_, _| rng.sample(StandardNormal))
}

fn random_sequence(rng: &mut ChaCha8Rng, t: usize, l: usize) -> Vec<DMatrix<f64>> {
    (0..t).map(|_| random_matrix(rng, l)).collect()
}

/// `Σ_k B_k ⊗ B_k`
pub fn kron_square_sum(bs: &[DMatrix<f64>]) -> DMatrix<f64> {
    let l = bs[0].nrows();
    bs.iter().fold(DMatrix::zeros(l * l, l * l), |acc, b| acc + kron(b, b))
}

fn trial_rng(seed: u64, which: u64) -> ChaCha8Rng {
    substream(seed, Purpose::Theorem, which)
}

/// `ρ(B₁⊗B₁) ≤ ρ(Σ_k B_k⊗B_k)`
pub fn verify_theorem1(trials: usize, seed: u64) -> Result<TheoremReport> {
    let mut report = TheoremReport::new("theorem1", THEOREM1_TOL);
    let mut rng = trial_rng(seed, 1);
    for _ in 0..trials {
        let t = rng.random_range(1..=MAX_T);
        let l = rng.random_range(1..=MAX_L);
        let bs = random_sequence(&mut rng, t, l);
        let lhs = spectral_radius(&kron(&bs[0], &bs[0]))?;
        let rhs = spectral_radius(&kron_square_sum(&bs))?;
        report.record(lhs - rhs);
        report.trials += 1;
    }
    Ok(report)
}

/// `ρ(Σ_k (B_k⊗I_N)⊗(B_k⊗I_N)) = ρ(Σ_k B_k⊗B_k)` for `N ∈ {1, 2, 3}`.
pub fn verify_theorem2(trials: usize, seed: u64) -> Result<TheoremReport> {
    let mut report = TheoremReport::new("theorem2", THEOREM2_TOL);
    let mut rng = trial_rng(seed, 2);
    for _ in 0..trials {
        let t = rng.random_range(1..=3);
        let l = rng.random_range(1..=3);
        let n = rng.random_range(1..=3);
        let bs = random_sequence(&mut rng, t, l);
        let eye = DMatrix::<f64>::identity(n, n);
        let lifted: Vec<DMatrix<f64>> = bs.iter().map(|b| kron(b, &eye)).collect();
        let small = spectral_radius(&kron_square_sum(&bs))?;
        let big = spectral_radius(&kron_square_sum(&lifted))?;
        report.record((small - big).abs());
        report.trials += 1;
    }
    Ok(report)
}

/// `ρ(p·ΣB_k⊗ΣB_k + q·Σ(B_k⊗B_k)) ≥ (p + q/t)·ρ(ΣB_k⊗ΣB_k)`, with equality
/// checked on a sequence of identical matrices in every trial.
pub fn verify_theorem3(trials: usize, seed: u64) -> Result<TheoremReport> {
    let mut report = TheoremReport::new("theorem3", THEOREM3_TOL);
    let mut rng = trial_rng(seed, 3);
    for _ in 0..trials {
        let t = rng.random_range(1..=MAX_T);
        let l = rng.random_range(1..=MAX_L);
        let p: f64 = rng.random_range(0.0..2.0);
        let q: f64 = rng.random_range(0.0..2.0);
        let bs = random_sequence(&mut rng, t, l);
        let (lhs, rhs) = theorem3_sides(&bs, p, q)?;
        report.record(rhs - lhs);
        let same = vec![bs[0].clone(); t];
        let (lhs, rhs) = theorem3_sides(&same, p, q)?;
        report.record((lhs - rhs).abs());
        report.trials += 1;
    }
    Ok(report)
}

/// Left and right sides of the third inequality.
pub fn theorem3_sides(bs: &[DMatrix<f64>], p: f64, q: f64) -> Result<(f64, f64)> {
    let t = bs.len() as f64;
    let sum = bs.iter().skip(1).fold(bs[0].clone(), |acc, b| acc + b);
    let outer = kron(&sum, &sum);
    let lhs = spectral_radius(&(&outer * p + kron_square_sum(bs) * q))?;
    let rhs = (p + q / t) * spectral_radius(&outer)?;
    Ok((lhs, rhs))
}
