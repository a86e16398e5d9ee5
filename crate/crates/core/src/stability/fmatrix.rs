//! Mean-square stability matrix and the step-size limits derived from it.
//!
//! With `T_k = diag(S[k, :])` the second-moment term `Σ_k T_k ⊗ T_k` is the
//! diagonal matrix `diag(vec(SᵀS))`, which is what every builder here uses.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

use super::linalg::{kron, spectral_radius};

/// Tolerance for the stochasticity checks.
pub const STOCHASTIC_TOL: f64 = 1e-12;

fn check_square(m: &DMatrix<f64>, p: usize, what: &str) -> Result<()> {
    if m.nrows() != p || m.ncols() != p {
        return invalid(format!("{what} is {}x{}, expected {p}x{p}", m.nrows(), m.ncols()));
    }
    Ok(())
}

/// Nonnegative with unit row and column sums.
pub fn is_doubly_stochastic(s: &DMatrix<f64>, tol: f64) -> bool {
    s.nrows() == s.ncols()
        && s.iter().all(|&v| v >= -tol)
        && s.row_iter().all(|r| (r.sum() - 1.0).abs() <= tol)
        && s.column_iter().all(|c| (c.sum() - 1.0).abs() <= tol)
}

/// `Σ_k T_k ⊗ T_k` built term by term.
pub fn sum_t_kron(s: &DMatrix<f64>) -> DMatrix<f64> {
    let p = s.nrows();
    let mut acc = DMatrix::zeros(p * p, p * p);
    for k in 0..p {
        let t = DMatrix::from_diagonal(&s.row(k).transpose());
        acc += kron(&t, &t);
    }
    acc
}

/// `vec(SᵀS)`, the diagonal of [`sum_t_kron`].
fn vec_sts(s: &DMatrix<f64>) -> DVector<f64> {
    let sts = s.transpose() * s;
    DVector::from_column_slice(sts.as_slice())
}

/// `F = [(1 − μ/M)²·I + ((N+1)μ²/M²)·diag(vec(SᵀS))]·(A2 ⊗ A2)` for a shared
/// step size, `A1 = I` and doubly stochastic `S`.
pub fn build_f(a2: &DMatrix<f64>, s: &DMatrix<f64>, mu: f64, n: usize, m: usize) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    check_square(s, p, "S")?;
    check_square(a2, p, "A2")?;
    if m == 0 {
        return invalid("m must be positive");
    }
    let (nf, mf) = (n as f64, m as f64);
    let c = (1.0 - mu / mf).powi(2);
    let d = (nf + 1.0) * mu * mu / (mf * mf);
    let diag = vec_sts(s).map(|v| c + d * v);
    let mut f = kron(a2, a2);
    for (i, mut row) in f.row_iter_mut().enumerate() {
        row *= diag[i];
    }
    Ok(f)
}

/// General form with per-node step sizes:
/// `F = (A1⊗A1)[(I − GD/M)⊗(I − GD/M) + ((N+1)/M²)·Σ_k T_kD ⊗ T_kD](A2⊗A2)`,
/// `G = diag(column sums of S)`, `D = diag(μ_k)`.
pub fn build_f_general(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    s: &DMatrix<f64>,
    mus: &[f64],
    n: usize,
    m: usize,
) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    check_square(s, p, "S")?;
    check_square(a1, p, "A1")?;
    check_square(a2, p, "A2")?;
    if mus.len() != p {
        return invalid(format!("{} step sizes for {p} nodes", mus.len()));
    }
    if m == 0 {
        return invalid("m must be positive");
    }
    let (nf, mf) = (n as f64, m as f64);
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(mus));
    let g = DMatrix::from_diagonal(&DVector::from_iterator(p, s.column_iter().map(|c| c.sum())));
    let e = DMatrix::identity(p, p) - &g * &d / mf;
    let mut inner = kron(&e, &e);
    for k in 0..p {
        let td = DMatrix::from_diagonal(&s.row(k).transpose()) * &d;
        inner += kron(&td, &td) * ((nf + 1.0) / (mf * mf));
    }
    Ok(kron(a1, a1) * inner * kron(a2, a2))
}

/// The same matrix with every `P × P` factor lifted by `⊗ I_N`, i.e. the
/// `(NP)² × (NP)²` operator before the Kronecker reduction. Only meant for
/// tiny cross-checks.
pub fn build_full_f(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    s: &DMatrix<f64>,
    mus: &[f64],
    n: usize,
    m: usize,
) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    if n * p > 9 {
        return invalid(format!("full operator limited to N·P <= 9, got {}", n * p));
    }
    if mus.len() != p {
        return invalid(format!("{} step sizes for {p} nodes", mus.len()));
    }
    let (nf, mf) = (n as f64, m as f64);
    let eye = DMatrix::<f64>::identity(n, n);
    let lift = |x: &DMatrix<f64>| kron(x, &eye);
    let d = lift(&DMatrix::from_diagonal(&DVector::from_column_slice(mus)));
    let g = lift(&DMatrix::from_diagonal(&DVector::from_iterator(p, s.column_iter().map(|c| c.sum()))));
    let e = DMatrix::identity(n * p, n * p) - &g * &d / mf;
    let mut inner = kron(&e, &e);
    for k in 0..p {
        let td = lift(&DMatrix::from_diagonal(&s.row(k).transpose())) * &d;
        inner += kron(&td, &td) * ((nf + 1.0) / (mf * mf));
    }
    let (l1, l2) = (lift(a1), lift(a2));
    Ok(kron(&l1, &l1) * inner * kron(&l2, &l2))
}

/// `ζ = max entry of SᵀS`
pub fn zeta(s: &DMatrix<f64>) -> f64 {
    (s.transpose() * s).max()
}

/// `(2M/((N+1)ζ + 1), 2PM/(P+N+1))`
pub fn mu_bracket(s: &DMatrix<f64>, n: usize, m: usize, p: usize) -> (f64, f64) {
    let (nf, mf, pf) = (n as f64, m as f64, p as f64);
    let lower = 2.0 * mf / ((nf + 1.0) * zeta(s) + 1.0);
    let upper = 2.0 * pf * mf / (pf + nf + 1.0);
    (lower, upper)
}

/// Outcome of the exact step-size search.
#[derive(Debug, Clone, PartialEq)]
pub struct MuSearch {
    /// Largest step size found with `ρ(F) < 1`.
    pub mu: f64,
    pub rho_at_mu: f64,
    pub lower: f64,
    pub upper: f64,
    /// False when `ρ(F) − 1` did not change sign on the search interval; `mu`
    /// is then the upper bound.
    pub bracketed: bool,
    /// Sampled points where `ρ(F(μ))` rose and then fell again.
    pub unimodal_violations: usize,
    pub evaluations: usize,
}

/// Relative widening of the bracket on both sides.
const BRACKET_SLACK: f64 = 1e-6;
const UNIMODAL_SAMPLES: usize = 16;

/// Bisection for the largest `μ` with `ρ(F(μ)) < 1`, stopping once the
/// interval is narrower than `tol` relative to the upper bound.
pub fn mu_exact(a2: &DMatrix<f64>, s: &DMatrix<f64>, n: usize, m: usize, p: usize, tol: f64) -> Result<MuSearch> {
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let (lower, upper) = mu_bracket(s, n, m, p);
    let mut evaluations = 0;
    let mut rho = |mu: f64| -> Result<f64> {
        evaluations += 1;
        spectral_radius(&build_f(a2, s, mu, n, m)?)
    };
    let mut lo = lower * (1.0 - BRACKET_SLACK);
    let mut hi = upper * (1.0 + BRACKET_SLACK);
    let rho_lo = rho(lo)?;
    let rho_hi = rho(hi)?;

    let mut samples = Vec::with_capacity(UNIMODAL_SAMPLES);
    for j in 0..UNIMODAL_SAMPLES {
        let mu = lo + (hi - lo) * j as f64 / (UNIMODAL_SAMPLES - 1) as f64;
        samples.push(rho(mu)?);
    }
    let unimodal_violations = count_unimodal_violations(&samples, 1e-12);

    if !(rho_lo < 1.0 && rho_hi >= 1.0) {
        return Ok(MuSearch {
            mu: upper,
            rho_at_mu: rho(upper)?,
            lower,
            upper,
            bracketed: false,
            unimodal_violations,
            evaluations,
        });
    }
    let mut rho_at = rho_lo;
    while hi - lo > tol * upper {
        let mid = 0.5 * (lo + hi);
        let r = rho(mid)?;
        if r < 1.0 {
            lo = mid;
            rho_at = r;
        } else {
            hi = mid;
        }
    }
    Ok(MuSearch { mu: lo, rho_at_mu: rho_at, lower, upper, bracketed: true, unimodal_violations, evaluations })
}

/// Number of rises that are later followed by a fall.
fn count_unimodal_violations(values: &[f64], slack: f64) -> usize {
    let mut rising = false;
    let mut violations = 0;
    for w in values.windows(2) {
        if w[1] > w[0] + slack {
            rising = true;
        } else if rising && w[1] < w[0] - slack {
            violations += 1;
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{grow_network, metropolis_weights, averaging_weights};

    #[test]
    fn scalar_case() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let (mu, n, m) = (0.2, 10, 5);
        let f = build_f(&one, &one, mu, n, m).unwrap();
        let expect = (1.0 - mu / 5.0f64).powi(2) + 11.0 * mu * mu / 25.0;
        assert!((f[(0, 0)] - expect).abs() < 1e-15);
    }

    #[test]
    fn kron_sum_is_diag_of_sts() {
        let topo = grow_network(7, 2, 9).unwrap();
        let s = metropolis_weights(&topo);
        let sum = sum_t_kron(&s);
        let v = vec_sts(&s);
        for i in 0..sum.nrows() {
            for j in 0..sum.ncols() {
                let expect = if i == j { v[i] } else { 0.0 };
                assert!((sum[(i, j)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn general_matches_simplified() {
        let topo = grow_network(6, 2, 4).unwrap();
        let s = metropolis_weights(&topo);
        let a = averaging_weights(&topo);
        let eye = DMatrix::identity(6, 6);
        let simple = build_f(&a, &s, 0.7, 50, 20).unwrap();
        let general = build_f_general(&eye, &a, &s, &[0.7; 6], 50, 20).unwrap();
        assert!((simple - general).abs().max() < 1e-14);
    }

    #[test]
    fn fully_connected_radius() {
        let p = 4;
        let u = DMatrix::from_element(p, p, 1.0 / p as f64);
        let (mu, n, m) = (3.0, 100, 40);
        let rho = spectral_radius(&build_f(&u, &u, mu, n, m).unwrap()).unwrap();
        let (nf, mf, pf) = (n as f64, m as f64, p as f64);
        let expect = (1.0 - mu / mf).powi(2) + (nf + 1.0) * mu * mu / (mf * mf * pf);
        assert!((rho - expect).abs() < 1e-12);
    }

    #[test]
    fn bracket_single_node() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let (lo, hi) = mu_bracket(&one, 1000, 200, 1);
        assert_eq!(lo, 400.0 / 1002.0);
        assert_eq!(hi, 400.0 / 1002.0);
        let found = mu_exact(&one, &one, 1000, 200, 1, 1e-12).unwrap();
        assert!(found.bracketed);
        assert!((found.mu - 400.0 / 1002.0).abs() < 1e-9);
    }

    #[test]
    fn violations_counter() {
        assert_eq!(count_unimodal_violations(&[3.0, 2.0, 1.0, 2.0, 3.0], 0.0), 0);
        assert_eq!(count_unimodal_violations(&[3.0, 2.0, 3.0, 2.0, 3.0], 0.0), 1);
    }
}
