//! Topologies and diffusion weight matrices.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::index::sample;

use crate::error::{invalid, Error, Result};
use crate::rng::{substream, Purpose};

/// Tolerance for the stochasticity constraints.
pub const WEIGHT_TOL: f64 = 1e-12;

/// Undirected connected graph; every neighbourhood contains its own node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkTopology {
    neighborhoods: Vec<Vec<usize>>,
}

impl NetworkTopology {
    /// Builds a topology from an undirected edge list. Self-loops are
    /// implicit; duplicate edges are ignored.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return invalid("a network needs at least one node");
        }
        let mut neighborhoods: Vec<Vec<usize>> = (0..node_count).map(|k| vec![k]).collect();
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return invalid(format!("edge ({a}, {b}) references a node >= {node_count}"));
            }
            if a != b {
                neighborhoods[a].push(b);
                neighborhoods[b].push(a);
            }
        }
        for nb in &mut neighborhoods {
            nb.sort_unstable();
            nb.dedup();
        }
        let topo = Self { neighborhoods };
        if !topo.is_connected() {
            return invalid("topology is not connected");
        }
        Ok(topo)
    }

    pub fn complete(node_count: usize) -> Result<Self> {
        let edges: Vec<_> = (0..node_count)
            .flat_map(|a| (a + 1..node_count).map(move |b| (a, b)))
            .collect();
        Self::from_edges(node_count, &edges)
    }

    pub fn path(node_count: usize) -> Result<Self> {
        let edges: Vec<_> = (1..node_count).map(|b| (b - 1, b)).collect();
        Self::from_edges(node_count, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.neighborhoods.len()
    }

    /// `N_k`, sorted, including `k`.
    pub fn neighborhood(&self, k: usize) -> &[usize] {
        &self.neighborhoods[k]
    }

    /// `|N_k|`
    pub fn degree(&self, k: usize) -> usize {
        self.neighborhoods[k].len()
    }

    pub fn is_neighbor(&self, l: usize, k: usize) -> bool {
        self.neighborhoods[k].binary_search(&l).is_ok()
    }

    /// Number of undirected links, self-loops excluded.
    pub fn edge_count(&self) -> usize {
        self.neighborhoods.iter().map(|nb| nb.len() - 1).sum::<usize>() / 2
    }

    pub fn is_connected(&self) -> bool {
        let p = self.node_count();
        let mut seen = vec![false; p];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(k) = queue.pop_front() {
            for &l in &self.neighborhoods[k] {
                if !seen[l] {
                    seen[l] = true;
                    queue.push_back(l);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// One line per node: the node id followed by its neighbour ids
    /// (self excluded), separated by spaces.
    pub fn to_adjacency_text(&self) -> String {
        let mut out = String::new();
        for (k, nb) in self.neighborhoods.iter().enumerate() {
            let _ = write!(out, "{k}");
            for &l in nb.iter().filter(|&&l| l != k) {
                let _ = write!(out, " {l}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_adjacency_text(text: &str) -> Result<Self> {
        let mut adjacency = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let ids = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
            adjacency.push(ids);
        }
        let node_count = adjacency.len();
        let mut edges = Vec::new();
        for (pos, ids) in adjacency.iter().enumerate() {
            if ids[0] != pos {
                return Err(Error::Format(format!("expected node {pos}, found {}", ids[0])));
            }
            edges.extend(ids[1..].iter().map(|&l| (pos, l)));
        }
        let topo = Self::from_edges(node_count, &edges)?;
        for (k, ids) in adjacency.iter().enumerate() {
            for &l in &ids[1..] {
                if !adjacency[l][1..].contains(&k) {
                    return Err(Error::Format(format!("link {k}-{l} is not listed symmetrically")));
                }
            }
        }
        Ok(topo)
    }
}

/// Grows the `T_p` family: a complete graph on `p_links + 1` nodes, then each
/// new node links to `p_links` distinct existing nodes chosen uniformly.
///
/// Draws are sequential, so the graph for a smaller `p_count` with the same
/// seed is the induced subgraph on the first nodes.
pub fn grow_network(p_count: usize, p_links: usize, seed: u64) -> Result<NetworkTopology> {
    if p_links == 0 {
        return invalid("attachment degree must be >= 1");
    }
    if p_count <= p_links {
        return invalid(format!("p_count = {p_count} must exceed p_links = {p_links}"));
    }
    let mut edges: Vec<(usize, usize)> = (0..=p_links)
        .flat_map(|a| (a + 1..=p_links).map(move |b| (a, b)))
        .collect();
    let mut rng = substream(seed, Purpose::Topology, 0);
    for new in p_links + 1..p_count {
        for target in sample(&mut rng, new, p_links) {
            edges.push((target, new));
        }
    }
    NetworkTopology::from_edges(p_count, &edges)
}

/// Metropolis adaptation weights: `1/max(|N_k|, |N_l|)` on links, the
/// remainder on the diagonal. Symmetric and doubly stochastic.
pub fn metropolis_weights(topology: &NetworkTopology) -> DMatrix<f64> {
    let p = topology.node_count();
    let mut s = DMatrix::zeros(p, p);
    for k in 0..p {
        let mut off = 0.0;
        for &l in topology.neighborhood(k).iter().filter(|&&l| l != k) {
            let w = 1.0 / topology.degree(k).max(topology.degree(l)) as f64;
            s[(l, k)] = w;
            off += w;
        }
        s[(k, k)] = 1.0 - off;
    }
    s
}

/// Averaging combination weights: entry `(l, k) = 1/|N_k|` for `l ∈ N_k`.
pub fn averaging_weights(topology: &NetworkTopology) -> DMatrix<f64> {
    let p = topology.node_count();
    let mut a = DMatrix::zeros(p, p);
    for k in 0..p {
        let w = 1.0 / topology.degree(k) as f64;
        for &l in topology.neighborhood(k) {
            a[(l, k)] = w;
        }
    }
    a
}

/// Which diffusion ordering a weight set is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    /// Adapt then combine: `A1 = I`, `A2 = A`.
    AdaptThenCombine,
    /// Combine then adapt: `A1 = A`, `A2 = I`.
    CombineThenAdapt,
    /// Both combination steps use `A`.
    Both,
}

/// Adaptation matrix `S` and the two combination matrices of the general
/// recursion. Entry `(l, k)` is the weight node `k` gives to node `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrices {
    pub s: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
}

impl WeightMatrices {
    /// Metropolis `S` and averaging `A`, placed according to `ordering`.
    pub fn standard(topology: &NetworkTopology, ordering: Ordering) -> Self {
        let p = topology.node_count();
        let a = averaging_weights(topology);
        let eye = DMatrix::identity(p, p);
        let (a1, a2) = match ordering {
            Ordering::AdaptThenCombine => (eye, a),
            Ordering::CombineThenAdapt => (a, eye),
            Ordering::Both => (a.clone(), a),
        };
        Self { s: metropolis_weights(topology), a1, a2 }
    }

    /// Drops the adaptation exchange (`S = I`).
    pub fn without_adaptation_exchange(mut self) -> Self {
        let p = self.s.nrows();
        self.s = DMatrix::identity(p, p);
        self
    }

    pub fn node_count(&self) -> usize {
        self.s.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintCheck {
    pub name: String,
    pub passed: bool,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<ConstraintCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn max_violation(&self) -> f64 {
        self.checks.iter().map(|c| c.max_violation).fold(0.0, f64::max)
    }

    pub fn check(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn push_check(checks: &mut Vec<ConstraintCheck>, name: String, violation: f64) {
    checks.push(ConstraintCheck { name, passed: violation <= WEIGHT_TOL, max_violation: violation });
}

/// Checks `S·1 = 1`, `A1ᵀ·1 = A2ᵀ·1 = 1`, nonnegativity and that every
/// weight sits on a link of `topology`.
pub fn validate_weights(w: &WeightMatrices, topology: &NetworkTopology) -> Result<ValidationReport> {
    let p = topology.node_count();
    for (name, m) in [("S", &w.s), ("A1", &w.a1), ("A2", &w.a2)] {
        if m.nrows() != p || m.ncols() != p {
            return invalid(format!("{name} is {}x{}, expected {p}x{p}", m.nrows(), m.ncols()));
        }
    }
    let mut checks = Vec::new();
    let row_dev = (0..p).map(|l| (w.s.row(l).sum() - 1.0).abs()).fold(0.0, f64::max);
    push_check(&mut checks, "S row sums".into(), row_dev);
    for (name, m) in [("A1", &w.a1), ("A2", &w.a2)] {
        let col_dev = (0..p).map(|k| (m.column(k).sum() - 1.0).abs()).fold(0.0, f64::max);
        push_check(&mut checks, format!("{name} column sums"), col_dev);
    }
    for (name, m) in [("S", &w.s), ("A1", &w.a1), ("A2", &w.a2)] {
        let neg = m.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        push_check(&mut checks, format!("{name} nonnegative"), neg);
        let mut off_pattern = 0.0f64;
        for k in 0..p {
            for l in 0..p {
                if !topology.is_neighbor(l, k) {
                    off_pattern = off_pattern.max(m[(l, k)].abs());
                }
            }
        }
        push_check(&mut checks, format!("{name} neighborhood pattern"), off_pattern);
    }
    Ok(ValidationReport { checks })
}

/// Dense CSV, one matrix row per line, shortest round-trip float formatting.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(e.to_string()))
        })
        .collect::<Result<_>>()?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format("ragged CSV matrix".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-14
    }

    #[test]
    fn seed_graph_only() {
        let t = grow_network(3, 2, 5).unwrap();
        assert_eq!(t, NetworkTopology::complete(3).unwrap());
    }

    #[test]
    fn grown_edge_count_and_connectivity() {
        for seed in 0..20 {
            let t = grow_network(20, 3, seed).unwrap();
            assert!(t.is_connected());
            assert_eq!(t.edge_count(), 6 + 3 * 16);
        }
    }

    #[test]
    fn growth_is_deterministic_and_nested() {
        let big = grow_network(30, 2, 77).unwrap();
        assert_eq!(big, grow_network(30, 2, 77).unwrap());
        let small = grow_network(12, 2, 77).unwrap();
        for k in 0..12 {
            let induced: Vec<usize> = big.neighborhood(k).iter().copied().filter(|&l| l < 12).collect();
            assert_eq!(induced, small.neighborhood(k));
        }
    }

    #[test]
    fn growth_parameter_errors() {
        assert!(grow_network(3, 3, 0).is_err());
        assert!(grow_network(5, 0, 0).is_err());
    }

    #[test]
    fn metropolis_complete_three() {
        let s = metropolis_weights(&NetworkTopology::complete(3).unwrap());
        assert!(s.iter().all(|v| approx(*v, 1.0 / 3.0)));
    }

    #[test]
    fn metropolis_path() {
        let s = metropolis_weights(&NetworkTopology::path(3).unwrap());
        assert!(approx(s[(0, 1)], 1.0 / 3.0));
        assert!(approx(s[(0, 0)], 2.0 / 3.0));
        assert_eq!(s[(0, 2)], 0.0);
        assert!(approx(s[(1, 1)], 1.0 / 3.0));
        for i in 0..3 {
            assert!(approx(s.row(i).sum(), 1.0));
            assert!(approx(s.column(i).sum(), 1.0));
        }
    }

    #[test]
    fn averaging_path_and_complete() {
        let a = averaging_weights(&NetworkTopology::path(3).unwrap());
        for l in 0..3 {
            assert!(approx(a[(l, 1)], 1.0 / 3.0));
        }
        let c = averaging_weights(&NetworkTopology::complete(5).unwrap());
        assert!(c.iter().all(|v| approx(*v, 0.2)));
    }

    #[test]
    fn validation_detects_perturbation() {
        let t = grow_network(10, 2, 3).unwrap();
        let w = WeightMatrices::standard(&t, Ordering::AdaptThenCombine);
        assert!(validate_weights(&w, &t).unwrap().passed());
        let mut bad = w.clone();
        bad.s[(0, 0)] += 1e-3;
        let report = validate_weights(&bad, &t).unwrap();
        assert!(!report.passed());
        let row = report.check("S row sums").unwrap();
        assert!(!row.passed);
        assert!((row.max_violation - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn identity_adaptation_is_valid() {
        let t = grow_network(8, 2, 1).unwrap();
        let w = WeightMatrices::standard(&t, Ordering::Both).without_adaptation_exchange();
        assert!(validate_weights(&w, &t).unwrap().passed());
    }

    #[test]
    fn validation_dimension_mismatch() {
        let t = NetworkTopology::complete(3).unwrap();
        let w = WeightMatrices::standard(&NetworkTopology::complete(4).unwrap(), Ordering::Both);
        assert!(matches!(validate_weights(&w, &t), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn off_pattern_weight_fails() {
        let t = NetworkTopology::path(3).unwrap();
        let mut w = WeightMatrices::standard(&t, Ordering::AdaptThenCombine);
        w.a2[(2, 0)] = 0.1;
        w.a2[(0, 0)] -= 0.1;
        let r = validate_weights(&w, &t).unwrap();
        assert!(!r.check("A2 neighborhood pattern").unwrap().passed);
        assert!(r.check("A2 column sums").unwrap().passed);
    }

    #[test]
    fn disconnected_rejected() {
        assert!(NetworkTopology::from_edges(4, &[(0, 1), (2, 3)]).is_err());
    }

    #[test]
    fn adjacency_text_round_trip() {
        let t = grow_network(15, 3, 8).unwrap();
        let text = t.to_adjacency_text();
        assert_eq!(NetworkTopology::from_adjacency_text(&text).unwrap(), t);
        assert!(NetworkTopology::from_adjacency_text("0 1\n1\n").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = metropolis_weights(&grow_network(7, 2, 2).unwrap());
        assert_eq!(matrix_from_csv(&matrix_to_csv(&s)).unwrap(), s);
    }
}
