use diffcs_core::matrix::dot;
use diffcs_core::network::{
    averaging_weights, grow_network, matrix_from_csv, matrix_to_csv, metropolis_weights, validate_weights,
    NetworkTopology, Ordering, WeightMatrices,
};
use diffcs_core::signal::{
    data_at, generate_instance, generate_measurements, generate_sparse_signal, partition_rows, partition_uniform,
    ProblemInstance,
};
use diffcs_core::stability::spectral_radius;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signal_unit_norm_exact_support(n in 1usize..400, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let k = 1 + ((n - 1) as f64 * frac) as usize;
        let s = generate_sparse_signal(n, k, seed).unwrap();
        let x = s.dense();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() <= 1e-12);
        prop_assert_eq!(x.iter().filter(|v| **v != 0.0).count(), k);
        // every nonzero sits well above the sparsity threshold
        prop_assert!(s.values.iter().all(|v| v.abs() > 1e-3));
    }

    #[test]
    fn partition_is_balanced_disjoint_cover(m in 1usize..300, p_frac in 0.0f64..1.0) {
        let p = 1 + ((m - 1) as f64 * p_frac) as usize;
        let part = partition_rows(m, p).unwrap();
        let flat: Vec<usize> = part.node_rows.iter().flatten().copied().collect();
        prop_assert_eq!(flat, (0..m).collect::<Vec<_>>());
        let lo = m / p;
        prop_assert!(part.counts.iter().all(|&c| c == lo || c == lo + 1));
        prop_assert_eq!(part.counts.iter().sum::<usize>(), m);
        for w in part.counts.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn data_reuse_is_cyclic(p in 1usize..5, i in 1usize..500, seed in any::<u64>()) {
        let inst = generate_instance(30, 17, 3, 0.1, seed).unwrap();
        let part = partition_uniform(&inst, p).unwrap();
        for k in 0..p {
            let l = part.counts[k];
            prop_assert_eq!(data_at(&inst, &part, k, i).unwrap(), data_at(&inst, &part, k, i + l).unwrap());
        }
    }

    #[test]
    fn grown_networks_are_connected(p_links in 1usize..5, extra in 1usize..40, seed in any::<u64>()) {
        let topo = grow_network(p_links + extra, p_links, seed).unwrap();
        prop_assert!(topo.is_connected());
        for k in 0..topo.node_count() {
            prop_assert!(topo.is_neighbor(k, k));
            for &l in topo.neighborhood(k) {
                prop_assert!(topo.is_neighbor(k, l));
            }
        }
        // each appended node brings exactly p_links new edges
        let clique = p_links * (p_links + 1) / 2;
        prop_assert_eq!(topo.edge_count(), clique + (extra - 1) * p_links);
    }

    #[test]
    fn metropolis_and_averaging_constraints(p_links in 1usize..4, extra in 1usize..20, seed in any::<u64>()) {
        let topo = grow_network(p_links + extra, p_links, seed).unwrap();
        let p = topo.node_count();
        let s = metropolis_weights(&topo);
        let a = averaging_weights(&topo);
        for l in 0..p {
            let row: f64 = s.row(l).sum();
            let col: f64 = s.column(l).sum();
            prop_assert!((row - 1.0).abs() <= 1e-12 && (col - 1.0).abs() <= 1e-12);
            prop_assert!((a.column(l).sum() - 1.0).abs() <= 1e-12);
            for k in 0..p {
                prop_assert!((s[(l, k)] - s[(k, l)]).abs() <= 1e-12);
                prop_assert!(s[(l, k)] >= 0.0 && a[(l, k)] >= 0.0);
                if !topo.is_neighbor(l, k) {
                    prop_assert!(s[(l, k)] == 0.0 && a[(l, k)] == 0.0);
                }
            }
        }
        prop_assert!((spectral_radius(&a).unwrap() - 1.0).abs() <= 1e-10);
        let w = WeightMatrices::standard(&topo, Ordering::Both);
        prop_assert!(validate_weights(&w, &topo).unwrap().passed());
    }
}

#[test]
fn row_blocks_reassemble_theta_and_y() {
    let inst = generate_instance(50, 23, 4, 0.2, 8).unwrap();
    let part = partition_uniform(&inst, 4).unwrap();
    let mut theta = Vec::new();
    let mut y = Vec::new();
    for k in 0..4 {
        for &r in &part.node_rows[k] {
            theta.extend_from_slice(inst.theta.row(r));
            y.push(inst.observations[r]);
        }
    }
    assert_eq!(theta, inst.theta.as_slice());
    assert_eq!(y, inst.observations);
}

#[test]
fn local_index_examples() {
    let inst = generate_instance(20, 5, 2, 0.0, 1).unwrap();
    let part = partition_uniform(&inst, 1).unwrap();
    assert_eq!(data_at(&inst, &part, 0, 5).unwrap().0, inst.theta.row(0));
    assert_eq!(data_at(&inst, &part, 0, 1).unwrap().0, inst.theta.row(1));
    let rows: Vec<usize> = (1..=10).map(|i| part.row_at(0, i)).collect();
    assert_eq!(rows, vec![1, 2, 3, 4, 0, 1, 2, 3, 4, 0]);
}

#[test]
fn theta_and_noise_statistics_at_full_scale() {
    let (n, m, sigma) = (20_000, 4000, 3e-3);
    let x = generate_sparse_signal(n, 500, 21).unwrap();
    let inst = generate_measurements(&x, m, sigma, 22).unwrap();
    let entries = inst.theta.as_slice();
    let count = entries.len() as f64;
    let mean = entries.iter().sum::<f64>() / count;
    let var = entries.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
    let target = 1.0 / m as f64;
    assert!((var - target).abs() <= 0.05 * target, "theta variance {var}");

    let nvar = inst.noise.iter().map(|v| v * v).sum::<f64>() / m as f64;
    let ntarget = sigma * sigma / m as f64;
    assert!((nvar - ntarget).abs() <= 0.2 * ntarget, "noise variance {nvar} vs {ntarget}");

    let xd = x.dense();
    for i in (0..m).step_by(97) {
        assert_eq!(inst.observations[i] - dot(inst.theta.row(i), &xd), inst.noise[i]);
    }
}

#[test]
fn instance_file_round_trip() {
    let inst = generate_instance(60, 25, 5, 3e-3, 99).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.dcs");
    inst.write_to(std::fs::File::create(&path).unwrap()).unwrap();
    let back = ProblemInstance::read_from(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back.theta, inst.theta);
    assert_eq!(back.observations, inst.observations);
    assert_eq!(back.signal.dense(), inst.signal.dense());
    assert!(ProblemInstance::read_from(&b"XXXX"[..]).is_err());
}

#[test]
fn topology_and_matrix_text_round_trip() {
    let topo = grow_network(12, 2, 5).unwrap();
    let back = NetworkTopology::from_adjacency_text(&topo.to_adjacency_text()).unwrap();
    assert_eq!(back, topo);
    let s = metropolis_weights(&topo);
    let parsed = matrix_from_csv(&matrix_to_csv(&s)).unwrap();
    assert!((parsed - &s).abs().max() <= 1e-15);
}

#[test]
fn perturbed_weights_fail_validation() {
    let topo = grow_network(8, 2, 3).unwrap();
    let mut w = WeightMatrices::standard(&topo, Ordering::AdaptThenCombine);
    assert!(validate_weights(&w, &topo).unwrap().passed());
    let identity = w.clone().without_adaptation_exchange();
    assert!(validate_weights(&identity, &topo).unwrap().passed());
    w.s[(0, 0)] += 1e-3;
    let report = validate_weights(&w, &topo).unwrap();
    assert!(!report.passed());
    assert!((report.max_violation() - 1e-3).abs() < 1e-9);
}

#[test]
fn growth_rejects_bad_sizes() {
    assert!(grow_network(3, 3, 0).is_err());
    assert!(grow_network(5, 0, 0).is_err());
    assert!(NetworkTopology::complete(4).unwrap().is_connected());
}
