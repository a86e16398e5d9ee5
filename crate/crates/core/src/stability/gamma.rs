//! Deterministic period test on the noiseless error recursion.
//!
//! With cyclic data and no regulariser the network error evolves as
//! `w̃(i+1) = 𝒜2ᵀ[I − 𝒟𝓗(i)]𝒜1ᵀ w̃(i)`, where block `k` of `𝓗(i)` is
//! `Σ_l α_{l,k} u_l(i)u_l(i)ᵀ`. The map is periodic with period `L_m`, so
//! convergence is governed by the product over one period.

use nalgebra::DMatrix;

use crate::engine::StepSizes;
use crate::error::{invalid, Error, Result};
use crate::matrix::{axpy, dot};
use crate::network::WeightMatrices;
use crate::signal::{Partition, ProblemInstance};

use super::linalg::{eigen_moduli, DENSE_LIMIT};

/// Product of the error maps over one data period.
#[derive(Debug, Clone)]
pub struct GammaProduct {
    /// `NP × NP`, node-major blocks of size `N`.
    pub matrix: DMatrix<f64>,
    /// `L_m`
    pub period: usize,
    /// Eigenvalue moduli, non-increasing.
    pub eigen_moduli: Vec<f64>,
}

impl GammaProduct {
    /// Largest modulus once the `N − M` moduli closest to one are set aside.
    ///
    /// In exact arithmetic this is below one exactly when the modulus at
    /// rank `N − M + 1` is. Reading that rank directly breaks down past the
    /// limit: a growing mode pushes a unit eigenvalue into that slot and the
    /// verdict hinges on rounding around 1.
    pub fn critical_modulus(&self, n: usize, m: usize) -> f64 {
        let skip = n.saturating_sub(m).min(self.eigen_moduli.len().saturating_sub(1));
        let mut by_distance: Vec<f64> = self.eigen_moduli.clone();
        by_distance.sort_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs()));
        by_distance[skip..].iter().copied().fold(0.0, f64::max)
    }

    /// Number of moduli within `tol` of one.
    pub fn unit_moduli(&self, tol: f64) -> usize {
        self.eigen_moduli.iter().filter(|v| (*v - 1.0).abs() <= tol).count()
    }
}

/// Applies one error map to `v` (length `NP`), writing into `out`.
fn apply_error_map(
    problem: &ProblemInstance,
    partition: &Partition,
    weights: &WeightMatrices,
    mus: &[f64],
    iteration: usize,
    v: &[f64],
    phi: &mut [f64],
    out: &mut [f64],
) {
    let n = problem.n();
    let p = mus.len();
    phi.fill(0.0);
    for k in 0..p {
        for l in 0..p {
            let a = weights.a1[(l, k)];
            if a != 0.0 {
                axpy(&mut phi[k * n..(k + 1) * n], a, &v[l * n..(l + 1) * n]);
            }
        }
    }
    // θ_k = φ_k − μ_k Σ_l α_{l,k} u_l u_lᵀ φ_k, computed in place
    for k in 0..p {
        if mus[k] == 0.0 {
            continue;
        }
        let block = &mut phi[k * n..(k + 1) * n];
        let coeffs: Vec<(usize, f64)> = (0..p)
            .filter(|&l| weights.s[(l, k)] != 0.0)
            .map(|l| {
                let u = problem.theta.row(partition.row_at(l, iteration));
                (l, weights.s[(l, k)] * dot(u, block))
            })
            .collect();
        for (l, c) in coeffs {
            let u = problem.theta.row(partition.row_at(l, iteration));
            axpy(block, -mus[k] * c, u);
        }
    }
    out.fill(0.0);
    for k in 0..p {
        for l in 0..p {
            let a = weights.a2[(l, k)];
            if a != 0.0 {
                axpy(&mut out[k * n..(k + 1) * n], a, &phi[l * n..(l + 1) * n]);
            }
        }
    }
}

/// Builds the period product `Γ = E(L_m)···E(1)` of the error maps with
/// the cyclic data, and its eigenvalue moduli.
pub fn build_gamma(
    problem: &ProblemInstance,
    partition: &Partition,
    weights: &WeightMatrices,
    step_sizes: &StepSizes,
) -> Result<GammaProduct> {
    let p = partition.node_count();
    let n = problem.n();
    let dim = n * p;
    if dim > DENSE_LIMIT {
        return Err(Error::SizeGuard { dim, limit: DENSE_LIMIT });
    }
    if weights.node_count() != p {
        return invalid(format!("weights are for {} nodes, partition has {p}", weights.node_count()));
    }
    let mus = step_sizes.resolve(p)?;
    let period = partition.period();
    let mut gamma = DMatrix::<f64>::identity(dim, dim);
    let mut phi = vec![0.0; dim];
    let mut col = vec![0.0; dim];
    for i in 1..=period {
        for column in gamma.as_mut_slice().chunks_mut(dim) {
            apply_error_map(problem, partition, weights, &mus, i, column, &mut phi, &mut col);
            column.copy_from_slice(&col);
        }
    }
    let eigen_moduli = eigen_moduli(&gamma)?;
    Ok(GammaProduct { matrix: gamma, period, eigen_moduli })
}

/// True iff the modulus at rank `N − M + 1` is below one.
pub fn check_prop1(gamma: &GammaProduct, n: usize, m: usize) -> bool {
    gamma.critical_modulus(n, m) < 1.0
}
