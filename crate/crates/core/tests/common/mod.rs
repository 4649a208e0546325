//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;

use graphdial::dfs::{dfs_code_compare, DfsCode, FiveTuple};
use graphdial::graph::Graph;
use petgraph::algo::is_isomorphic;
use petgraph::graph::UnGraph;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random spanning tree plus each remaining pair with probability `extra`,
/// under a random node labelling.
pub fn random_connected(n: usize, extra: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut edges = Vec::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        edges.push((perm[i], perm[j]));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(extra) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

/// Random graph with independent edges, not necessarily connected.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

pub fn to_petgraph(g: &Graph) -> UnGraph<(), ()> {
    let mut pg = UnGraph::new_undirected();
    let nodes: Vec<_> = (0..g.node_count()).map(|_| pg.add_node(())).collect();
    for &(u, v) in g.edges() {
        pg.add_edge(nodes[u], nodes[v], ());
    }
    pg
}

pub fn isomorphic(a: &Graph, b: &Graph) -> bool {
    a.node_count() == b.node_count() && a.edge_count() == b.edge_count() && is_isomorphic(&to_petgraph(a), &to_petgraph(b))
}

fn adjacency(g: &Graph) -> Vec<Vec<bool>> {
    let n = g.node_count();
    let mut a = vec![vec![false; n]; n];
    for &(u, v) in g.edges() {
        a[u][v] = true;
        a[v][u] = true;
    }
    a
}

/// Mean all-pairs distance from Floyd–Warshall; `None` if disconnected.
pub fn floyd_warshall_aspl(g: &Graph) -> Option<f64> {
    let n = g.node_count();
    let inf = usize::MAX / 4;
    let a = adjacency(g);
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                d[i][j] = 0;
            } else if a[i][j] {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let mut total = 0usize;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if d[i][j] >= inf {
                return None;
            }
            total += d[i][j];
            pairs += 1;
        }
    }
    (pairs > 0).then(|| total as f64 / pairs as f64)
}

/// Mean local clustering by enumerating every neighbour pair; nodes of
/// degree < 2 count as 0.
pub fn triple_clustering(g: &Graph) -> f64 {
    let n = g.node_count();
    let a = adjacency(g);
    let mut sum = 0.0;
    for v in 0..n {
        let nb: Vec<usize> = (0..n).filter(|&u| a[v][u]).collect();
        if nb.len() < 2 {
            continue;
        }
        let mut closed = 0;
        let mut total = 0;
        for i in 0..nb.len() {
            for j in i + 1..nb.len() {
                total += 1;
                if a[nb[i]][nb[j]] {
                    closed += 1;
                }
            }
        }
        sum += closed as f64 / total as f64;
    }
    sum / n as f64
}

/// Newman modularity of a partition, straight from the definition
/// `Q = 1/2m Σ_ij (A_ij − k_i k_j / 2m) δ(c_i, c_j)`.
pub fn modularity_by_definition(g: &Graph, part: &[usize]) -> f64 {
    let n = g.node_count();
    let a = adjacency(g);
    let k: Vec<f64> = (0..n).map(|v| a[v].iter().filter(|&&x| x).count() as f64).collect();
    let two_m = 2.0 * g.edge_count() as f64;
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if part[i] == part[j] {
                q += f64::from(u8::from(a[i][j])) - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Best modularity over all set partitions (restricted growth strings),
/// accumulating the modularity matrix `B_ij = A_ij − k_i k_j / 2m`
/// incrementally as nodes are assigned.
pub fn exhaustive_best_modularity(g: &Graph) -> f64 {
    let n = g.node_count();
    if n == 0 || g.edge_count() == 0 {
        return f64::NEG_INFINITY;
    }
    let a = adjacency(g);
    let two_m = 2.0 * g.edge_count() as f64;
    let k: Vec<f64> = (0..n).map(|v| a[v].iter().filter(|&&x| x).count() as f64).collect();
    let b: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(a[i][j])) - k[i] * k[j] / two_m).collect())
        .collect();
    fn rec(i: usize, max: usize, part: &mut Vec<usize>, b: &[Vec<f64>], acc: f64, best: &mut f64) {
        if i == part.len() {
            *best = best.max(acc);
            return;
        }
        for c in 0..=max + 1 {
            part[i] = c;
            // B_ii plus both orientations of every earlier same-block pair.
            let mut add = b[i][i];
            for j in 0..i {
                if part[j] == c {
                    add += 2.0 * b[i][j];
                }
            }
            rec(i + 1, max.max(c), part, b, acc + add, best);
        }
    }
    let mut part = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    rec(1, 0, &mut part, &b, b[0][0], &mut best);
    best / two_m
}

/// Every DFS code of `g` (degree node labels, edge label 0), one per
/// depth-first traversal: all roots, all child orders. Backward edges from a
/// newly discovered node follow its forward edge, nearest-root first.
pub fn all_dfs_codes(g: &Graph) -> Vec<DfsCode> {
    let n = g.node_count();
    let deg = g.degrees();
    let mut out = Vec::new();
    struct St {
        ts: Vec<Option<usize>>,
        stack: Vec<usize>,
        code: Vec<FiveTuple>,
        next: usize,
    }
    fn go(g: &Graph, deg: &[usize], st: &mut St, out: &mut Vec<DfsCode>) {
        let Some(&v) = st.stack.last() else {
            if st.code.len() == g.edge_count() {
                out.push(DfsCode::new(st.code.clone()));
            }
            return;
        };
        let fresh: Vec<usize> = g.neighbors(v).iter().copied().filter(|&w| st.ts[w].is_none()).collect();
        if fresh.is_empty() {
            st.stack.pop();
            go(g, deg, st, out);
            st.stack.push(v);
            return;
        }
        for w in fresh {
            let tv = st.ts[v].unwrap();
            let tw = st.next;
            st.ts[w] = Some(tw);
            st.next += 1;
            let mark = st.code.len();
            st.code.push(FiveTuple::new(tv, tw, deg[v], 0, deg[w]));
            let mut back: Vec<(usize, usize)> = g
                .neighbors(w)
                .iter()
                .filter(|&&x| x != v)
                .filter_map(|&x| st.ts[x].map(|t| (t, x)))
                .collect();
            back.sort();
            for (t, x) in back {
                st.code.push(FiveTuple::new(tw, t, deg[w], 0, deg[x]));
            }
            st.stack.push(w);
            go(g, deg, st, out);
            st.stack.pop();
            st.code.truncate(mark);
            st.next -= 1;
            st.ts[w] = None;
        }
    }
    for root in 0..n {
        let mut st = St {
            ts: vec![None; n],
            stack: vec![root],
            code: Vec::new(),
            next: 1,
        };
        st.ts[root] = Some(0);
        go(g, &deg, &mut st, &mut out);
    }
    out
}

pub fn brute_min_dfs(g: &Graph) -> DfsCode {
    all_dfs_codes(g)
        .into_iter()
        .min_by(|a, b| dfs_code_compare(a, b))
        .expect("connected graph with an edge")
}

pub fn codes_equal(a: &DfsCode, b: &DfsCode) -> bool {
    dfs_code_compare(a, b) == Ordering::Equal && a == b
}

/// All connected graphs with 1..=max_edges edges, one per isomorphism class.
pub fn connected_graphs_up_to(max_edges: usize) -> Vec<Graph> {
    let mut reps: Vec<Graph> = Vec::new();
    for n in 2..=max_edges + 1 {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        for m in n - 1..=max_edges.min(pairs.len()) {
            let mut bucket: Vec<Graph> = Vec::new();
            let mut idx: Vec<usize> = (0..m).collect();
            loop {
                let g = Graph::new(n, idx.iter().map(|&i| pairs[i])).unwrap();
                if g.is_connected() && !bucket.iter().any(|r| isomorphic(r, &g)) {
                    bucket.push(g);
                }
                // next m-combination of pairs
                let mut i = m;
                while i > 0 && idx[i - 1] == pairs.len() - m + i - 1 {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                idx[i - 1] += 1;
                for j in i..m {
                    idx[j] = idx[j - 1] + 1;
                }
            }
            reps.extend(bucket);
        }
    }
    reps
}

/// KL(N(μ, e^lv) ‖ N(0, 1)) per dimension by composite Simpson quadrature.
pub fn kl_quadrature(mu: &[f64], lv: &[f64]) -> f64 {
    mu.iter()
        .zip(lv)
        .map(|(&m, &l)| {
            let s = (0.5 * l).exp();
            let (a, b) = (m - 14.0 * s, m + 14.0 * s);
            let steps = 20_000;
            let h = (b - a) / steps as f64;
            let f = |x: f64| {
                let logp = -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
                let logq = -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln();
                logp.exp() * (logp - logq)
            };
            let mut acc = f(a) + f(b);
            for i in 1..steps {
                acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        })
        .sum()
}

/// Draws from the discrete power law `P(k) ∝ k^−α`, `k ≥ xmin`, by inverse
/// transform over a table truncated at `10^6`.
pub struct DiscretePowerLaw {
    xmin: usize,
    cdf: Vec<f64>,
}

impl DiscretePowerLaw {
    pub fn new(alpha: f64, xmin: usize) -> Self {
        let mut cdf = Vec::with_capacity(1_000_000);
        let mut acc = 0.0;
        for k in xmin..1_000_000 {
            acc += (k as f64).powf(-alpha);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        DiscretePowerLaw { xmin, cdf }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        self.xmin + self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }
}
