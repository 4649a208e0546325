//! Library results against independent reference implementations.

mod common;

use common::*;
use graphdial::dfs::{decode, encode_min_dfs};
use graphdial::features::{
    avg_shortest_path_length, clustering_coefficient, fit_power_law, modularity, modularity_louvain,
};
use graphdial::model::kl_loss;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn brute_force_enumeration_sanity() {
    // A triangle has 3 roots × 2 child orders = 6 traversals.
    let tri = graphdial::graph::Graph::new(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
    assert_eq!(all_dfs_codes(&tri).len(), 6);
    // Graphs with at most 3 edges: P2, P3, P4, K1,3, K3.
    assert_eq!(connected_graphs_up_to(3).len(), 5);
    // OEIS A002905 partial sums: 1, 1, 3, 5, 12 connected graphs with 1..5 edges.
    assert_eq!(connected_graphs_up_to(5).len(), 1 + 1 + 3 + 5 + 12);
}

#[test]
fn min_code_matches_brute_force_up_to_five_edges() {
    for g in connected_graphs_up_to(5) {
        let fast = encode_min_dfs(&g).unwrap();
        let slow = brute_min_dfs(&g);
        assert!(codes_equal(&fast, &slow), "{:?}\nfast {:?}\nslow {:?}", g.edges(), fast, slow);
    }
}

#[test]
fn round_trip_is_isomorphic() {
    for seed in 0..120 {
        let n = 2 + (seed as usize % 20);
        let g = random_connected(n, 0.15, seed);
        let back = decode(&encode_min_dfs(&g).unwrap()).unwrap();
        assert!(isomorphic(&g, &back), "seed {seed}");
    }
}

#[test]
fn aspl_and_clustering_match_oracles() {
    for seed in 0..60 {
        let n = 3 + (seed as usize % 30);
        let g = random_connected(n, 0.1, 1000 + seed);
        let fw = floyd_warshall_aspl(&g).unwrap();
        assert!((avg_shortest_path_length(&g).unwrap() - fw).abs() < 1e-9);
        assert!((clustering_coefficient(&g).unwrap() - triple_clustering(&g)).abs() < 1e-9);
    }
}

#[test]
fn modularity_matches_definition_and_louvain_is_near_best() {
    for seed in 0..12 {
        let n = 4 + (seed as usize % 5);
        let g = random_connected(n, 0.3, 2000 + seed);
        let (part, q) = modularity_louvain(&g).unwrap();
        assert!((q - modularity_by_definition(&g, &part)).abs() < 1e-12);
        assert!((modularity(&g, &part).unwrap() - q).abs() < 1e-12);
        assert!(q >= exhaustive_best_modularity(&g) - 0.05, "seed {seed}");
    }
}

#[test]
fn kl_matches_quadrature() {
    let cases: [(&[f64], &[f64]); 3] = [
        (&[0.0], &[0.0]),
        (&[1.0, -0.5], &[0.3, -1.2]),
        (&[2.0, 0.1, -1.0], &[1.0, 0.0, -0.4]),
    ];
    for (mu, lv) in cases {
        let exact = kl_loss(mu, lv).unwrap();
        assert!((exact - kl_quadrature(mu, lv)).abs() < 1e-8, "{mu:?} {lv:?}");
    }
}

#[test]
fn power_law_recovers_exponent_on_one_draw() {
    let law = DiscretePowerLaw::new(2.5, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let sample: Vec<usize> = (0..5000).map(|_| law.sample(&mut rng)).collect();
    let fit = fit_power_law(&sample).unwrap();
    assert!((fit.alpha - 2.5).abs() < 0.2, "{fit:?}");
}

#[test]
fn exhaustive_modularity_agrees_with_definition() {
    // Two triangles joined by an edge: best split is the two triangles.
    let g = graphdial::graph::Graph::new(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (2, 3)]).unwrap();
    let split = modularity_by_definition(&g, &[0, 0, 0, 1, 1, 1]);
    assert!((exhaustive_best_modularity(&g) - split).abs() < 1e-12);
    assert!((split - 5.0 / 14.0).abs() < 1e-12);
}
