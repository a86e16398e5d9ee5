//! Eigenvalue plumbing: dense spectra via a real Schur decomposition and a
//! Perron-root iteration for large nonnegative matrices.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Largest dimension handed to the dense eigensolver.
pub const DENSE_LIMIT: usize = 4000;

const DEFLATION_LADDER: [f64; 4] = [f64::EPSILON, 1e-14, 1e-13, 1e-12];

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return invalid(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return invalid("matrix has non-finite entries");
    }
    Ok(())
}

/// All eigenvalues of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    check_square(m)?;
    let dim = m.nrows();
    if dim > DENSE_LIMIT {
        return Err(Error::SizeGuard { dim, limit: DENSE_LIMIT });
    }
    if dim == 0 {
        return Ok(Vec::new());
    }
    // The QR sweep has no exceptional shifts and can stall on matrices with
    // many repeated eigenvalues; a slightly looser deflation test unblocks it.
    // The transpose has the same spectrum but sends the sweep down a
    // different path.
    for candidate in [m.clone(), m.transpose()] {
        for eps in DEFLATION_LADDER {
            if let Some(schur) = nalgebra::Schur::try_new(candidate.clone(), eps, 200 * dim.max(10)) {
                return Ok(schur.complex_eigenvalues().iter().copied().collect());
            }
        }
    }
    Err(Error::Eigen(format!("Schur iteration did not converge ({dim}x{dim})")))
}

/// Eigenvalue moduli sorted non-increasing.
pub fn eigen_moduli(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut moduli: Vec<f64> = eigenvalues(m)?.iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    Ok(moduli)
}

/// Largest eigenvalue modulus. Dense up to [`DENSE_LIMIT`]; larger
/// entrywise-nonnegative matrices go through [`perron_radius`].
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    check_square(m)?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.nrows() > DENSE_LIMIT {
        if m.iter().all(|&v| v >= 0.0) {
            return perron_radius(m, 1e-12, 100_000);
        }
        return Err(Error::SizeGuard { dim: m.nrows(), limit: DENSE_LIMIT });
    }
    Ok(eigen_moduli(m)?[0])
}

/// Perron root of an entrywise-nonnegative matrix.
///
/// Iterates with `A + I`, whose Perron root strictly dominates every other
/// eigenvalue in modulus, and stops once the Collatz–Wielandt bounds are
/// within `tol` (relative). If they never meet (reducible matrices) the
/// norm-ratio estimate clipped into the bounds is returned.
pub fn perron_radius(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    check_square(m)?;
    if m.iter().any(|&v| v < 0.0) {
        return invalid("Perron iteration needs a nonnegative matrix");
    }
    let dim = m.nrows();
    if dim == 0 {
        return Ok(0.0);
    }
    let mut x = DVector::from_element(dim, 1.0 / (dim as f64).sqrt());
    let mut estimate = 0.0;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..max_iter {
        let y = m * &x + &x;
        lo = f64::INFINITY;
        hi = 0.0f64;
        for (yi, xi) in y.iter().zip(x.iter()) {
            let r = yi / xi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let norm = y.norm();
        estimate = norm;
        if hi - lo <= tol * hi {
            return Ok(0.5 * (lo + hi) - 1.0);
        }
        x = y / norm;
        // keep every component strictly positive so the ratios stay defined
        x.iter_mut().for_each(|v| *v = v.max(f64::MIN_POSITIVE));
    }
    Ok(estimate.clamp(lo, hi) - 1.0)
}

/// `a ⊗ b`
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}
