//! Property tests for the stated invariants.

mod common;

use common::*;
use graphdial::autodiff::{ParamStore, Tape};
use graphdial::dataset::build_dataset;
use graphdial::dfs::{decode, encode_min_dfs, repair_decode, to_one_hot, Vocabulary};
use graphdial::eval::{eval_features, rmse_vs_condition};
use graphdial::features::{build_condition_vector, Feature, FeatureVector};
use graphdial::generate::generate_one;
use graphdial::graph::Graph;
use graphdial::model::{kl_loss, ConditionSpots, HyperParams, Model};
use proptest::prelude::*;

/// Connected graph: random tree (parent of node i among 0..i) plus extra
/// pairs, under a random relabelling.
fn connected(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<prop::sample::Index>(), n - 1),
            proptest::collection::vec((0..n, 0..n), 0..n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
            .prop_map(move |(parents, extra, perm)| {
                let mut edges: Vec<(usize, usize)> = parents
                    .iter()
                    .enumerate()
                    .map(|(i, ix)| (perm[i + 1], perm[ix.index(i + 1)]))
                    .collect();
                edges.extend(extra.into_iter().filter(|(u, v)| u != v));
                Graph::new(n, edges).unwrap()
            })
    })
}

fn any_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..2 * n).prop_map(move |pairs| {
            Graph::new(n, pairs.into_iter().filter(|(u, v)| u != v)).unwrap()
        })
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<usize>>()).prop_shuffle()
}

fn graph_and_perm(max_n: usize) -> impl Strategy<Value = (Graph, Vec<usize>)> {
    connected(max_n).prop_flat_map(|g| {
        let n = g.node_count();
        (Just(g), permutation(n))
    })
}

fn tiny_model(spots: ConditionSpots, seed: u64) -> Model {
    let vocab = Vocabulary {
        t_size: 5,
        l_size: 5,
        e_size: 2,
    };
    let hp = HyperParams {
        condition_dim: 2,
        enc_layers: 1,
        dec_layers: 2,
        spots,
        ..HyperParams::desk(vocab, 6, 3)
    };
    Model::new(hp, seed).unwrap()
}

fn tiny_sequence() -> graphdial::dfs::OneHotSequence {
    let g = Graph::new(4, [(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap();
    let vocab = Vocabulary {
        t_size: 5,
        l_size: 5,
        e_size: 2,
    };
    to_one_hot(&encode_min_dfs(&g).unwrap(), &vocab).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edge_list_reserialization_is_idempotent(g in any_graph(15)) {
        let once = Graph::from_edge_list(&g.to_edge_list());
        // Isolated nodes have no line to survive on; only edge-bearing graphs round trip.
        if g.edge_count() > 0 && g.degrees().iter().all(|&d| d > 0) {
            let once = once.unwrap();
            let twice = Graph::from_edge_list(&once.to_edge_list()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn handshake_and_full_induced_subgraph(g in any_graph(20)) {
        prop_assert_eq!(g.degrees().iter().sum::<usize>(), 2 * g.edge_count());
        let all: Vec<usize> = (0..g.node_count()).collect();
        prop_assert_eq!(g.induced_subgraph(&all).unwrap().edge_count(), g.edge_count());
    }

    #[test]
    fn codec_round_trip_and_length(g in connected(30)) {
        let code = encode_min_dfs(&g).unwrap();
        prop_assert_eq!(code.len(), g.edge_count());
        let back = decode(&code).unwrap();
        prop_assert!(isomorphic(&g, &back));
        prop_assert_eq!(repair_decode(&code).unwrap(), back);
    }

    #[test]
    fn code_is_isomorphism_invariant((g, perm) in graph_and_perm(14)) {
        let h = g.permuted(&perm).unwrap();
        prop_assert_eq!(encode_min_dfs(&g).unwrap(), encode_min_dfs(&h).unwrap());
    }

    #[test]
    fn features_are_isomorphism_invariant((g, perm) in graph_and_perm(16)) {
        let h = g.permuted(&perm).unwrap();
        let (a, b) = (FeatureVector::compute(&g).to_array(), FeatureVector::compute(&h).to_array());
        for k in 0..5 {
            match (a[k], b[k]) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9, "feature {k}: {x} vs {y}"),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn degree_identity_and_distance_oracles(g in connected(40)) {
        let n = g.node_count() as f64;
        let deg = Feature::AvgDegree.compute(&g).unwrap();
        // "exactly": the returned value is the correctly rounded quotient 2|E|/n.
        prop_assert_eq!(deg, 2.0 * g.edge_count() as f64 / n);
        prop_assert!((deg * n - 2.0 * g.edge_count() as f64).abs() <= 1e-12 * n);
        let aspl = Feature::Aspl.compute(&g).unwrap();
        prop_assert!((aspl - floyd_warshall_aspl(&g).unwrap()).abs() < 1e-9);
        let c = Feature::Clustering.compute(&g).unwrap();
        prop_assert!((c - triple_clustering(&g)).abs() < 1e-9);
    }

    #[test]
    fn manifests_are_connected_covered_and_reproducible(
        graphs in proptest::collection::vec(any_graph(9), 1..12),
        seed in any::<u64>(),
    ) {
        match build_dataset(&graphs, Feature::AvgDegree, 3, 1, seed) {
            Ok(ds) => {
                prop_assert!(ds.graphs.iter().all(Graph::is_connected));
                let v = ds.manifest.vocab;
                for code in &ds.codes {
                    prop_assert!(to_one_hot(code, &v).is_ok());
                    for t in &code.tuples {
                        prop_assert!(t.t_u < v.eos_t() && t.t_v < v.eos_t());
                        prop_assert!(t.l_u < v.eos_l() && t.l_v < v.eos_l());
                    }
                }
                let again = build_dataset(&graphs, Feature::AvgDegree, 3, 1, seed).unwrap();
                prop_assert_eq!(ds.manifest.to_json().unwrap(), again.manifest.to_json().unwrap());
            }
            Err(_) => prop_assert!(graphs.iter().all(|g| !g.is_connected() || g.edge_count() == 0)),
        }
    }

    #[test]
    fn softmax_rows_are_distributions(xs in proptest::collection::vec(-30.0f64..30.0, 1..12)) {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.input_vec(xs);
        let p = tape.softmax(x).unwrap();
        let v = tape.value(p);
        prop_assert!(v.iter().all(|&q| q >= 0.0));
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_is_non_negative(pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..8)) {
        let (mu, lv): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let kl = kl_loss(&mu, &lv).unwrap();
        prop_assert!(kl >= 0.0);
        let zero = mu.iter().chain(&lv).all(|&x| x == 0.0);
        prop_assert_eq!(kl == 0.0, zero);
    }

    #[test]
    fn encoder_ignores_condition_without_spot_e(seed in 0u64..1000, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let spots = ConditionSpots { on_encoder_input: false, ..ConditionSpots::ALL };
        let m = tiny_model(spots, seed);
        let seq = tiny_sequence();
        let ca = build_condition_vector(a, 2, 1).unwrap();
        let cb = build_condition_vector(b, 2, 1).unwrap();
        prop_assert_eq!(m.encode(&seq, &ca).unwrap(), m.encode(&seq, &cb).unwrap());
    }

    #[test]
    fn no_spots_means_unconditional(seed in 0u64..1000, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let m = tiny_model(ConditionSpots::NONE, seed);
        let seq = tiny_sequence();
        let ca = build_condition_vector(a, 2, 1).unwrap();
        let cb = build_condition_vector(b, 2, 1).unwrap();
        prop_assert_eq!(m.encode(&seq, &ca).unwrap(), m.encode(&seq, &cb).unwrap());
        let z = [0.3, -0.2, 0.1];
        prop_assert_eq!(
            m.decode_teacher_forced(&seq, &z, &ca).unwrap(),
            m.decode_teacher_forced(&seq, &z, &cb).unwrap()
        );
        prop_assert_eq!(generate_one(&m, &ca, seed, 6).ok(), generate_one(&m, &cb, seed, 6).ok());
    }

    #[test]
    fn generation_is_bounded_and_simple(seed in any::<u64>(), cond in -3.0f64..3.0, max_steps in 1usize..12) {
        let m = tiny_model(ConditionSpots::ALL, 3);
        let c = build_condition_vector(cond, 2, 1).unwrap();
        if let Ok(g) = generate_one(&m, &c, seed, max_steps) {
            prop_assert!(g.steps <= max_steps);
            prop_assert!(g.code.len() <= max_steps);
            prop_assert!(g.graph.is_connected());
            // Graph::new re-validates simplicity.
            prop_assert!(Graph::new(g.graph.node_count(), g.graph.edges().iter().copied()).is_ok());
        }
    }

    #[test]
    fn rmse_equals_two_pass_oracle(values in proptest::collection::vec(-100.0f64..100.0, 1..50), target in -100.0f64..100.0) {
        let mut ss = 0.0;
        for v in &values {
            ss += (v - target).powi(2);
        }
        let oracle = (ss / values.len() as f64).sqrt();
        prop_assert!((rmse_vs_condition(&values, target).unwrap() - oracle).abs() <= 1e-12 * oracle.max(1.0));
    }

    #[test]
    fn feature_means_agree_with_csv(sets in proptest::collection::vec(proptest::collection::vec(connected(10), 1..5), 1..4)) {
        let sets: Vec<(f64, Vec<Graph>)> = sets.into_iter().enumerate().map(|(i, g)| (i as f64, g)).collect();
        let report = eval_features(&sets, None).unwrap();
        let csv = report.csv();
        for s in &report.summaries {
            for k in 0..5 {
                let col: Vec<f64> = csv
                    .lines()
                    .skip(1)
                    .map(|l| l.split(',').collect::<Vec<_>>())
                    .filter(|f| f[0].parse::<f64>().unwrap() == s.condition)
                    .filter_map(|f| f[3 + k].parse::<f64>().ok())
                    .collect();
                let m = (!col.is_empty()).then(|| col.iter().sum::<f64>() / col.len() as f64);
                match (m, s.means[k]) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                    (a, b) => prop_assert_eq!(a, b),
                }
            }
        }
    }
}
