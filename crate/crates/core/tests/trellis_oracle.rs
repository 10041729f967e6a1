//! DP best-path against exhaustive enumeration, plus trellis invariants.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tuberank_core::synth::oracles::oracle_best_path;
use tuberank_core::trellis::{
    best_path, energy_of_path, rank_proposals, Trellis, TrellisNode,
};

fn random_trellis(rng: &mut ChaCha8Rng) -> Trellis {
    let n = rng.random_range(1..=6usize);
    let f = rng.random_range(1..=5usize);
    let layers: Vec<Vec<TrellisNode>> = (0..f)
        .map(|_| {
            (0..n)
                .map(|p| TrellisNode {
                    proposal_id: p as u32,
                    score: rng.random::<f64>(),
                })
                .collect()
        })
        .collect();
    let edges: Vec<Array2<f64>> = (0..f.saturating_sub(1))
        .map(|_| Array2::from_shape_fn((n, n), |_| rng.random::<f64>()))
        .collect();
    Trellis::new(layers, edges, 1.0).unwrap()
}

#[test]
fn dp_matches_enumeration_on_random_trellises() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..60 {
        let t = random_trellis(&mut rng);
        let (dp_path, dp_energy) = best_path(&t);
        let (oracle_path, oracle_energy) = oracle_best_path(&t).unwrap();
        assert!(
            (dp_energy - oracle_energy).abs() < 1e-9,
            "case {case}: energies {dp_energy} vs {oracle_energy}"
        );
        assert_eq!(dp_path, oracle_path, "case {case}");
    }
}

#[test]
fn dp_matches_enumeration_on_tie_heavy_trellises() {
    // Scores drawn from {0, 0.5, 1} force frequent exact ties.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..80 {
        let n = rng.random_range(1..=4usize);
        let f = rng.random_range(1..=4usize);
        let pick = |rng: &mut ChaCha8Rng| [0.0, 0.5, 1.0][rng.random_range(0..3usize)];
        let layers: Vec<Vec<TrellisNode>> = (0..f)
            .map(|_| {
                (0..n)
                    .map(|p| TrellisNode {
                        proposal_id: p as u32,
                        score: pick(&mut rng),
                    })
                    .collect()
            })
            .collect();
        let edges: Vec<Array2<f64>> = (0..f - 1)
            .map(|_| Array2::from_shape_fn((n, n), |_| pick(&mut rng)))
            .collect();
        let t = Trellis::new(layers, edges, 1.0).unwrap();
        let (dp_path, dp_energy) = best_path(&t);
        let (oracle_path, oracle_energy) = oracle_best_path(&t).unwrap();
        assert_eq!(dp_energy, oracle_energy, "case {case}");
        assert_eq!(dp_path, oracle_path, "case {case}");
    }
}

#[test]
fn extraction_yields_disjoint_paths_with_consistent_energies() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let t = random_trellis(&mut rng);
        let n = t.layers()[0].len();
        let selected = rank_proposals(&t, n);
        assert_eq!(selected.len(), n);
        for f in 0..t.num_layers() {
            let mut used: Vec<u32> = selected.iter().map(|s| s.path[f]).collect();
            used.sort_unstable();
            used.dedup();
            assert_eq!(used.len(), n, "layer {f} reuses a node");
        }
        for s in &selected {
            let recomputed = energy_of_path(&t, &s.path).unwrap();
            assert!(
                (recomputed - s.energy).abs() < 1e-9,
                "stored {} vs recomputed {recomputed}",
                s.energy
            );
        }
    }
}

#[test]
fn node_score_shift_moves_energy_by_f_times_c() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let t = random_trellis(&mut rng);
        let c = rng.random::<f64>() * 10.0 - 5.0;
        let shifted_layers: Vec<Vec<TrellisNode>> = t
            .layers()
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|nd| TrellisNode {
                        proposal_id: nd.proposal_id,
                        score: nd.score + c,
                    })
                    .collect()
            })
            .collect();
        let f = t.num_layers();
        let edges: Vec<Array2<f64>> = (0..f - 1)
            .map(|l| {
                let n0 = t.layers()[l].len();
                let n1 = t.layers()[l + 1].len();
                Array2::from_shape_fn((n0, n1), |(i, j)| t.edge(l, i, j))
            })
            .collect();
        let shifted = Trellis::new(shifted_layers, edges, t.lambda_edge()).unwrap();
        let (path, energy) = best_path(&t);
        let (shifted_path, shifted_energy) = best_path(&shifted);
        assert_eq!(path, shifted_path);
        assert!((shifted_energy - (energy + f as f64 * c)).abs() < 1e-9);
    }
}

#[test]
fn extraction_energies_non_increasing_without_edge_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..40 {
        let n = rng.random_range(2..=6usize);
        let f = rng.random_range(1..=5usize);
        let layers: Vec<Vec<TrellisNode>> = (0..f)
            .map(|_| {
                (0..n)
                    .map(|p| TrellisNode {
                        proposal_id: p as u32,
                        score: rng.random::<f64>(),
                    })
                    .collect()
            })
            .collect();
        let edges = (0..f - 1).map(|_| Array2::zeros((n, n))).collect();
        let t = Trellis::new(layers, edges, 1.0).unwrap();
        let selected = rank_proposals(&t, n);
        for pair in selected.windows(2) {
            assert!(pair[0].energy >= pair[1].energy - 1e-12);
        }
    }
}
