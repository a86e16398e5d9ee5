//! Sparse ground truth, Gaussian measurements and the distribution of the
//! measurement rows across network nodes.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::matrix::{dot, RowMatrix};
use crate::rng::{substream, Purpose};

/// Lower edge of the nonzero-magnitude interval before normalisation.
pub const MIN_RAW_MAGNITUDE: f64 = 0.2;
/// Upper edge of the nonzero-magnitude interval before normalisation.
pub const MAX_RAW_MAGNITUDE: f64 = 1.0;

/// A K-sparse vector of unit Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    pub dim: usize,
    /// Sorted, distinct indices of the nonzero entries.
    pub support: Vec<usize>,
    /// Normalised values aligned with `support`.
    pub values: Vec<f64>,
    /// Norm of the raw draw the values were divided by. `None` when the
    /// signal was read back from a dump.
    pub raw_norm: Option<f64>,
}

impl SparseSignal {
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for (&j, &v) in self.support.iter().zip(&self.values) {
            x[j] = v;
        }
        x
    }

    fn from_dense(x: &[f64]) -> Self {
        let (support, values) = x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .unzip();
        Self { dim: x.len(), support, values, raw_norm: None }
    }
}

/// Draws a K-sparse signal: support uniform without replacement, raw values
/// uniform on `[-1, -0.2] ∪ [0.2, 1]`, then scaled to unit norm.
pub fn generate_sparse_signal(n: usize, k: usize, seed: u64) -> Result<SparseSignal> {
    if k == 0 || k > n {
        return invalid(format!("sparsity k = {k} must satisfy 0 < k <= n = {n}"));
    }
    let mut rng = substream(seed, Purpose::Signal, 0);
    let mut support = rand::seq::index::sample(&mut rng, n, k).into_vec();
    support.sort_unstable();
    let raw: Vec<f64> = (0..k)
        .map(|_| {
            let magnitude = rng.random_range(MIN_RAW_MAGNITUDE..=MAX_RAW_MAGNITUDE);
            if rng.random_bool(0.5) {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect();
    let raw_norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let values = raw.iter().map(|v| v / raw_norm).collect();
    Ok(SparseSignal { dim: n, support, values, raw_norm: Some(raw_norm) })
}

/// `y = Θx + v` together with everything needed to regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub signal: SparseSignal,
    /// M×N measurement matrix.
    pub theta: RowMatrix,
    /// Observations `y`.
    pub observations: Vec<f64>,
    /// Realised noise `v`; `observations[i] == theta.row(i)·x + noise[i]`
    /// holds bit for bit.
    pub noise: Vec<f64>,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.theta.cols()
    }

    pub fn m(&self) -> usize {
        self.theta.rows()
    }
}

/// Splits `y` into `Θx` and a realised noise term so that both
/// `y == Θx + v` and `y - Θx == v` hold exactly in floating point.
fn settle_noise(clean: f64, raw_noise: f64) -> (f64, f64) {
    let mut y = clean + raw_noise;
    for _ in 0..8 {
        let v = y - clean;
        let back = clean + v;
        if back == y {
            return (y, v);
        }
        y = back;
    }
    // Unreachable in practice; fall back to the pair that satisfies y = Θx + v.
    let v = y - clean;
    (clean + v, v)
}

/// Gaussian Θ with entry variance `1/m` and noise with per-entry variance
/// `sigma²/m`.
pub fn generate_measurements(
    x: &SparseSignal,
    m: usize,
    sigma: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    let n = x.dim;
    if m == 0 || m >= n {
        return invalid(format!("measurement count m = {m} must satisfy 0 < m < n = {n}"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return invalid(format!("noise level sigma = {sigma} must be finite and >= 0"));
    }
    let entry = Normal::new(0.0, 1.0 / (m as f64).sqrt()).expect("positive std-dev");
    let mut theta_rng = substream(seed, Purpose::Theta, 0);
    let data: Vec<f64> = (0..m * n).map(|_| entry.sample(&mut theta_rng)).collect();
    let theta = RowMatrix::from_vec(m, n, data);

    let noise_dist = Normal::new(0.0, sigma / (m as f64).sqrt()).expect("finite std-dev");
    let mut noise_rng = substream(seed, Purpose::Noise, 0);
    let dense = x.dense();
    let (observations, noise) = (0..m)
        .map(|i| {
            let raw = if sigma > 0.0 { noise_dist.sample(&mut noise_rng) } else { 0.0 };
            settle_noise(dot(theta.row(i), &dense), raw)
        })
        .unzip();
    Ok(ProblemInstance { signal: x.clone(), theta, observations, noise, noise_sigma: sigma, rng_seed: seed })
}

/// Convenience wrapper: signal and measurements from one seed.
pub fn generate_instance(n: usize, m: usize, k: usize, sigma: f64, seed: u64) -> Result<ProblemInstance> {
    let x = generate_sparse_signal(n, k, seed)?;
    generate_measurements(&x, m, sigma, seed)
}

const MAGIC: &[u8; 4] = b"DCS1";

impl ProblemInstance {
    /// Binary dump: magic `DCS1`, then little-endian `N, M, K` (u64),
    /// `sigma` (f64), `seed` (u64), Θ row-major, dense `x`, `y` (all f64).
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.n() as u64, self.m() as u64, self.signal.sparsity() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.noise_sigma.to_le_bytes())?;
        w.write_all(&self.rng_seed.to_le_bytes())?;
        let x = self.signal.dense();
        for v in self.theta.as_slice().iter().chain(&x).chain(&self.observations) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic, expected DCS1".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let m = u64::from_le_bytes(next(&mut r)?) as usize;
        let k = u64::from_le_bytes(next(&mut r)?) as usize;
        let sigma = f64::from_le_bytes(next(&mut r)?);
        let seed = u64::from_le_bytes(next(&mut r)?);
        if m == 0 || m >= n || n > 1 << 28 || m.saturating_mul(n) > 1 << 32 {
            return Err(Error::Format(format!("implausible dimensions n = {n}, m = {m}")));
        }
        let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; count * 8];
            r.read_exact(&mut buf)?;
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let theta = RowMatrix::from_vec(m, n, read_f64s(m * n)?);
        let x = read_f64s(n)?;
        let observations = read_f64s(m)?;
        let signal = SparseSignal::from_dense(&x);
        if signal.sparsity() != k {
            return Err(Error::Format(format!(
                "header says K = {k} but x has {} nonzeros",
                signal.sparsity()
            )));
        }
        let noise = (0..m).map(|i| observations[i] - dot(theta.row(i), &x)).collect();
        Ok(Self { signal, theta, observations, noise, noise_sigma: sigma, rng_seed: seed })
    }
}

/// Assignment of measurement rows to nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// Global row indices held by each node, in local order.
    pub node_rows: Vec<Vec<usize>>,
    /// `L_k` for each node.
    pub counts: Vec<usize>,
}

impl Partition {
    pub fn node_count(&self) -> usize {
        self.counts.len()
    }

    pub fn min_count(&self) -> usize {
        self.counts.iter().copied().min().unwrap_or(0)
    }

    /// Local row (0-based) used by `node` at 1-based iteration `i`.
    #[inline]
    pub fn local_index(&self, node: usize, iteration: usize) -> usize {
        iteration % self.counts[node]
    }

    /// Global row used by `node` at iteration `i`.
    #[inline]
    pub fn row_at(&self, node: usize, iteration: usize) -> usize {
        self.node_rows[node][self.local_index(node, iteration)]
    }

    /// Least common multiple of the per-node row counts.
    pub fn period(&self) -> usize {
        fn gcd(a: usize, b: usize) -> usize {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        self.counts.iter().fold(1, |acc, &c| acc / gcd(acc, c) * c)
    }
}

/// Contiguous, balanced blocks: the first `M mod p` nodes get one extra row.
pub fn partition_uniform(instance: &ProblemInstance, p: usize) -> Result<Partition> {
    partition_rows(instance.m(), p)
}

pub fn partition_rows(m: usize, p: usize) -> Result<Partition> {
    if p == 0 || p > m {
        return invalid(format!("node count p = {p} must satisfy 1 <= p <= m = {m}"));
    }
    let (base, extra) = (m / p, m % p);
    let mut start = 0;
    let mut node_rows = Vec::with_capacity(p);
    for k in 0..p {
        let len = base + usize::from(k < extra);
        node_rows.push((start..start + len).collect::<Vec<_>>());
        start += len;
    }
    let counts = node_rows.iter().map(Vec::len).collect();
    Ok(Partition { node_rows, counts })
}

/// Row and observation node `node` uses at 1-based iteration `iteration`:
/// local row `mod(i, L_k) + 1` in 1-based terms.
pub fn data_at<'a>(
    instance: &'a ProblemInstance,
    partition: &Partition,
    node: usize,
    iteration: usize,
) -> Result<(&'a [f64], f64)> {
    if node >= partition.node_count() {
        return invalid(format!("node {node} out of range for {} nodes", partition.node_count()));
    }
    if iteration == 0 {
        return invalid("iterations are counted from 1");
    }
    let row = partition.row_at(node, iteration);
    Ok((instance.theta.row(row), instance.observations[row]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_support_signal() {
        let s = generate_sparse_signal(8, 8, 3).unwrap();
        let x = s.dense();
        assert!(x.iter().all(|v| *v != 0.0));
        let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn raw_magnitudes_in_range() {
        let s = generate_sparse_signal(1000, 25, 11).unwrap();
        assert_eq!(s.sparsity(), 25);
        assert_eq!(s.dense().iter().filter(|v| **v != 0.0).count(), 25);
        let raw = s.raw_norm.unwrap();
        for v in &s.values {
            let m = v.abs() * raw;
            assert!((MIN_RAW_MAGNITUDE - 1e-12..=MAX_RAW_MAGNITUDE + 1e-12).contains(&m), "{m}");
        }
    }

    #[test]
    fn signal_is_deterministic() {
        assert_eq!(generate_sparse_signal(500, 20, 9).unwrap(), generate_sparse_signal(500, 20, 9).unwrap());
        assert_ne!(generate_sparse_signal(500, 20, 9).unwrap(), generate_sparse_signal(500, 20, 10).unwrap());
    }

    #[test]
    fn bad_sparsity_rejected() {
        assert!(matches!(generate_sparse_signal(5, 6, 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(generate_sparse_signal(5, 0, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn noiseless_observations_are_exact() {
        let x = generate_sparse_signal(60, 5, 1).unwrap();
        let inst = generate_measurements(&x, 20, 0.0, 2).unwrap();
        assert_eq!(inst.observations, inst.theta.matvec(&x.dense()));
        assert!(inst.noise.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn m_must_be_below_n() {
        let x = generate_sparse_signal(20, 2, 1).unwrap();
        assert!(generate_measurements(&x, 20, 0.0, 1).is_err());
        assert!(generate_measurements(&x, 25, 0.0, 1).is_err());
    }

    #[test]
    fn stored_noise_reconstructs_exactly() {
        let inst = generate_instance(300, 100, 10, 0.5, 4).unwrap();
        let x = inst.signal.dense();
        for i in 0..inst.m() {
            let clean = dot(inst.theta.row(i), &x);
            assert_eq!(inst.observations[i] - clean, inst.noise[i]);
            assert_eq!(clean + inst.noise[i], inst.observations[i]);
        }
    }

    #[test]
    fn partition_counts() {
        assert_eq!(partition_rows(7, 3).unwrap().counts, vec![3, 2, 2]);
        assert!(partition_rows(4000, 20).unwrap().counts.iter().all(|&c| c == 200));
        let one = partition_rows(9, 1).unwrap();
        assert_eq!(one.node_rows, vec![(0..9).collect::<Vec<_>>()]);
        assert!(partition_rows(3, 4).is_err());
        assert!(partition_rows(3, 0).is_err());
    }

    #[test]
    fn recycling_index() {
        let p = partition_rows(5, 1).unwrap();
        assert_eq!(p.local_index(0, 5), 0); // 1-based local index 1
        assert_eq!(p.local_index(0, 1), 1); // 1-based local index 2
        let seq: Vec<usize> = (1..=10).map(|i| p.local_index(0, i)).collect();
        assert_eq!(seq[..5], seq[5..]);
    }

    #[test]
    fn period_is_lcm() {
        let p = partition_rows(20, 3).unwrap();
        assert_eq!(p.counts, vec![7, 7, 6]);
        assert_eq!(p.period(), 42);
    }

    #[test]
    fn data_at_rejects_bad_node() {
        let inst = generate_instance(30, 10, 3, 0.0, 1).unwrap();
        let part = partition_uniform(&inst, 2).unwrap();
        assert!(data_at(&inst, &part, 2, 1).is_err());
        assert!(data_at(&inst, &part, 0, 0).is_err());
        let (u, d) = data_at(&inst, &part, 1, 1).unwrap();
        assert_eq!(u, inst.theta.row(6));
        assert_eq!(d, inst.observations[6]);
    }
}
