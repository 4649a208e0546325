//! Global structural features of a graph and the condition vectors built
//! from them.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dfs;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// A scalar structural feature usable as a generation condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Aspl,
    AvgDegree,
    Modularity,
    Clustering,
    Plaw,
    /// Edge density `2|E|/(n(n-1))`; the measurable counterpart of the ER
    /// edge probability.
    Density,
}

impl Feature {
    /// The five reported features, in table order.
    pub const REPORTED: [Feature; 5] = [
        Feature::Aspl,
        Feature::AvgDegree,
        Feature::Modularity,
        Feature::Clustering,
        Feature::Plaw,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Feature::Aspl => "aspl",
            Feature::AvgDegree => "avg_degree",
            Feature::Modularity => "modularity",
            Feature::Clustering => "clustering",
            Feature::Plaw => "plaw",
            Feature::Density => "density",
        }
    }

    pub fn compute(&self, g: &Graph) -> Result<f64> {
        match self {
            Feature::Aspl => avg_shortest_path_length(g),
            Feature::AvgDegree => average_degree(g),
            Feature::Modularity => modularity_louvain(g).map(|(_, q)| q),
            Feature::Clustering => clustering_coefficient(g),
            Feature::Plaw => power_law_exponent(g),
            Feature::Density => {
                if g.node_count() < 2 {
                    Err(Error::UndefinedFeature("density needs two nodes".into()))
                } else {
                    Ok(g.density())
                }
            }
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "aspl" => Feature::Aspl,
            "avg_degree" => Feature::AvgDegree,
            "modularity" => Feature::Modularity,
            "clustering" => Feature::Clustering,
            "plaw" | "plaw_exponent" => Feature::Plaw,
            "density" => Feature::Density,
            other => return Err(Error::Config(format!("unknown feature {other:?}"))),
        })
    }
}

/// The five reported features of one graph; `None` where undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub aspl: Option<f64>,
    pub avg_degree: Option<f64>,
    pub modularity: Option<f64>,
    pub clustering: Option<f64>,
    pub plaw_exponent: Option<f64>,
}

impl FeatureVector {
    pub fn compute(g: &Graph) -> Self {
        let vals = Feature::REPORTED.map(|f| f.compute(g).ok());
        FeatureVector::from_array(vals)
    }

    pub fn from_array(v: [Option<f64>; 5]) -> Self {
        FeatureVector {
            aspl: v[0],
            avg_degree: v[1],
            modularity: v[2],
            clustering: v[3],
            plaw_exponent: v[4],
        }
    }

    pub fn to_array(&self) -> [Option<f64>; 5] {
        [
            self.aspl,
            self.avg_degree,
            self.modularity,
            self.clustering,
            self.plaw_exponent,
        ]
    }

    pub fn get(&self, f: Feature) -> Option<f64> {
        match f {
            Feature::Aspl => self.aspl,
            Feature::AvgDegree => self.avg_degree,
            Feature::Modularity => self.modularity,
            Feature::Clustering => self.clustering,
            Feature::Plaw => self.plaw_exponent,
            Feature::Density => None,
        }
    }
}

/// Mean BFS hop distance over all unordered node pairs.
pub fn avg_shortest_path_length(g: &Graph) -> Result<f64> {
    let n = g.node_count();
    if n < 2 {
        return Err(Error::UndefinedFeature("aspl needs two nodes".into()));
    }
    let mut total = 0usize;
    for s in 0..n {
        for (t, d) in g.bfs_distances(s).into_iter().enumerate() {
            match d {
                Some(d) if t > s => total += d,
                Some(_) => {}
                None => {
                    return Err(Error::UndefinedFeature("aspl of a disconnected graph".into()))
                }
            }
        }
    }
    let pairs = n * (n - 1) / 2;
    Ok(total as f64 / pairs as f64)
}

pub fn average_degree(g: &Graph) -> Result<f64> {
    if g.node_count() == 0 {
        return Err(Error::UndefinedFeature("average degree of an empty graph".into()));
    }
    Ok(2.0 * g.edge_count() as f64 / g.node_count() as f64)
}

/// Mean local clustering; nodes of degree below two count as zero.
pub fn clustering_coefficient(g: &Graph) -> Result<f64> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::UndefinedFeature("clustering of an empty graph".into()));
    }
    let mut sum = 0.0;
    for v in 0..n {
        let nb = g.neighbors(v);
        let k = nb.len();
        if k < 2 {
            continue;
        }
        let mut tri = 0usize;
        for (i, &a) in nb.iter().enumerate() {
            for &b in &nb[i + 1..] {
                if g.has_edge(a, b) {
                    tri += 1;
                }
            }
        }
        sum += tri as f64 / (k * (k - 1) / 2) as f64;
    }
    Ok(sum / n as f64)
}

/// Newman modularity of a node partition, `Σ_c [e_c/m − (d_c/2m)²]`.
pub fn modularity(g: &Graph, community: &[usize]) -> Result<f64> {
    let m = g.edge_count();
    if m == 0 {
        return Err(Error::UndefinedFeature("modularity of an edgeless graph".into()));
    }
    if community.len() != g.node_count() {
        return Err(Error::Validation("partition length mismatch".into()));
    }
    let k = community.iter().copied().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; k];
    let mut degree = vec![0.0; k];
    for &(u, v) in g.edges() {
        if community[u] == community[v] {
            internal[community[u]] += 1.0;
        }
    }
    for v in 0..g.node_count() {
        degree[community[v]] += g.neighbors(v).len() as f64;
    }
    let m = m as f64;
    Ok((0..k)
        .map(|c| internal[c] / m - (degree[c] / (2.0 * m)).powi(2))
        .sum())
}

pub const LOUVAIN_RESTARTS: u64 = 8;

/// Louvain on a node order derived from the minimum DFS code, so that
/// isomorphic graphs get the same modularity. Returns community ids per node
/// (dense, in order of first appearance) and the modularity of that
/// partition. The best of `LOUVAIN_RESTARTS` seeded runs is kept; a single
/// run gets stuck well below the optimum on some small graphs.
pub fn modularity_louvain(g: &Graph) -> Result<(Vec<usize>, f64)> {
    if g.edge_count() == 0 {
        return Err(Error::UndefinedFeature("modularity of an edgeless graph".into()));
    }
    let order = canonical_node_order(g)?;
    let mut pos = vec![0; g.node_count()];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let canon = g.permuted(&pos)?;
    let mut best = louvain(&canon, 0)?;
    for seed in 1..LOUVAIN_RESTARTS {
        let run = louvain(&canon, seed)?;
        if run.1 > best.1 {
            best = run;
        }
    }
    let (part, q) = best;
    let part: Vec<usize> = (0..g.node_count()).map(|v| part[pos[v]]).collect();
    Ok((renumber(&part), q))
}

/// Per-component canonical orders, components sorted by their codes.
fn canonical_node_order(g: &Graph) -> Result<Vec<usize>> {
    let mut blocks: Vec<(dfs::DfsCode, Vec<usize>)> = Vec::new();
    for comp in g.components() {
        let sub = g.induced_subgraph(&comp)?;
        if comp.len() == 1 {
            blocks.push((dfs::DfsCode::default(), comp));
            continue;
        }
        let code = dfs::encode_min_dfs(&sub)?;
        let order = dfs::canonical_order(&sub)?;
        blocks.push((code, order.into_iter().map(|i| comp[i]).collect()));
    }
    blocks.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));
    Ok(blocks.into_iter().flat_map(|(_, nodes)| nodes).collect())
}

fn renumber(part: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    part.iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

/// Weighted adjacency used by the aggregation levels; self-loop weight is
/// stored once and counts twice toward the node strength.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
}

impl Level {
    fn strength(&self, v: usize) -> f64 {
        self.adj[v].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self.self_loop[v]
    }
}

/// Louvain community detection with a seeded node-visit shuffle.
pub fn louvain(g: &Graph, seed: u64) -> Result<(Vec<usize>, f64)> {
    let m = g.edge_count() as f64;
    if m == 0.0 {
        return Err(Error::UndefinedFeature("modularity of an edgeless graph".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = Level {
        adj: (0..g.node_count())
            .map(|v| g.neighbors(v).iter().map(|&w| (w, 1.0)).collect())
            .collect(),
        self_loop: vec![0.0; g.node_count()],
    };
    // membership of original nodes in current-level super nodes
    let mut member: Vec<usize> = (0..g.node_count()).collect();
    let two_m = 2.0 * m;

    loop {
        let nn = level.adj.len();
        let strength: Vec<f64> = (0..nn).map(|v| level.strength(v)).collect();
        let mut comm: Vec<usize> = (0..nn).collect();
        let mut tot: Vec<f64> = strength.clone();
        let mut moved_any = false;
        let mut order: Vec<usize> = (0..nn).collect();
        order.shuffle(&mut rng);
        let mut links = vec![0.0; nn];
        let mut touched: Vec<usize> = Vec::new();
        loop {
            let mut moved = false;
            for &v in &order {
                let cv = comm[v];
                let kv = strength[v];
                for &(w, wt) in &level.adj[v] {
                    let c = comm[w];
                    if links[c] == 0.0 && !touched.contains(&c) {
                        touched.push(c);
                    }
                    links[c] += wt;
                }
                tot[cv] -= kv;
                let gain = |c: usize, links: &[f64], tot: &[f64]| links[c] - tot[c] * kv / two_m;
                let mut best = cv;
                let mut best_gain = gain(cv, &links, &tot);
                // random tie-break among neighbouring communities
                touched.shuffle(&mut rng);
                for &c in &touched {
                    let g = gain(c, &links, &tot);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += kv;
                if best != cv {
                    comm[v] = best;
                    moved = true;
                    moved_any = true;
                }
                for &c in &touched {
                    links[c] = 0.0;
                }
                touched.clear();
            }
            if !moved {
                break;
            }
        }
        if !moved_any {
            break;
        }
        let dense = renumber(&comm);
        let k = dense.iter().copied().max().map_or(0, |c| c + 1);
        let mut agg: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); k];
        let mut self_loop = vec![0.0; k];
        for v in 0..nn {
            let cv = dense[v];
            self_loop[cv] += level.self_loop[v];
            for &(w, wt) in &level.adj[v] {
                let cw = dense[w];
                if cv == cw {
                    // each internal edge is seen from both ends
                    self_loop[cv] += wt / 2.0;
                } else {
                    *agg[cv].entry(cw).or_insert(0.0) += wt;
                }
            }
        }
        level = Level {
            adj: agg.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loop,
        };
        for c in &mut member {
            *c = dense[*c];
        }
    }
    let part = renumber(&member);
    let q = modularity(g, &part)?;
    Ok((part, q))
}

/// Hurwitz zeta `Σ_{k≥q} k^{-s}` for `s > 1`, `q ≥ 1`, by Euler–Maclaurin
/// summation past a direct head.
pub(crate) fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    let big = q.max(16.0).ceil();
    let mut head = 0.0;
    let mut k = q;
    while k < big {
        head += k.powf(-s);
        k += 1.0;
    }
    let n = k;
    let tail = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s * n.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * n.powf(-s - 3.0) / 720.0
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * n.powf(-s - 5.0) / 30240.0;
    head + tail
}

const ALPHA_LO: f64 = 1.0 + 1e-6;
const ALPHA_HI: f64 = 50.0;

/// Discrete power-law MLE for a fixed lower cutoff: maximizes
/// `-n ln ζ(α, x_min) - α Σ ln x` by golden-section search (the
/// log-likelihood is concave in α).
pub fn fit_discrete_alpha(tail: &[usize], xmin: usize) -> f64 {
    let n = tail.len() as f64;
    let sum_ln: f64 = tail.iter().map(|&x| (x as f64).ln()).sum();
    let q = xmin as f64;
    let ll = |a: f64| -n * hurwitz_zeta(a, q).ln() - a * sum_ln;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (ALPHA_LO, ALPHA_HI);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (ll(x1), ll(x2));
    while hi - lo > 1e-10 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = ll(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = ll(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Kolmogorov–Smirnov distance between the empirical CDF of a sorted tail
/// and the fitted discrete power law.
fn ks_distance(sorted_tail: &[usize], xmin: usize, alpha: f64) -> f64 {
    let n = sorted_tail.len() as f64;
    let z0 = hurwitz_zeta(alpha, xmin as f64);
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted_tail.len() {
        let x = sorted_tail[i];
        let mut j = i;
        while j < sorted_tail.len() && sorted_tail[j] == x {
            j += 1;
        }
        let emp = j as f64 / n;
        let fit = 1.0 - hurwitz_zeta(alpha, x as f64 + 1.0) / z0;
        d = d.max((emp - fit).abs());
        i = j;
    }
    d
}

/// Power-law fit result for a positive integer sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub xmin: usize,
    pub ks: f64,
    pub n_tail: usize,
}

/// Discrete MLE exponent with `x_min` chosen among the distinct sample values
/// by minimum KS distance (ties toward the smaller cutoff). Cutoffs that
/// leave a single distinct value in the tail are skipped.
pub fn fit_power_law(sample: &[usize]) -> Result<PowerLawFit> {
    let mut data: Vec<usize> = sample.iter().copied().filter(|&x| x >= 1).collect();
    if data.len() < 2 {
        return Err(Error::UndefinedFeature(
            "power-law fit needs two positive values".into(),
        ));
    }
    data.sort_unstable();
    let mut distinct = data.clone();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::UndefinedFeature(
            "power-law fit of a constant sequence".into(),
        ));
    }
    let mut best: Option<PowerLawFit> = None;
    for &xmin in &distinct[..distinct.len() - 1] {
        let start = data.partition_point(|&x| x < xmin);
        let tail = &data[start..];
        let alpha = fit_discrete_alpha(tail, xmin);
        let ks = ks_distance(tail, xmin, alpha);
        if best.map_or(true, |b| ks < b.ks) {
            best = Some(PowerLawFit {
                alpha,
                xmin,
                ks,
                n_tail: tail.len(),
            });
        }
    }
    Ok(best.expect("at least one candidate cutoff"))
}

/// Power-law exponent of the degree sequence.
pub fn power_law_exponent(g: &Graph) -> Result<f64> {
    fit_power_law(&g.degrees()).map(|f| f.alpha)
}

/// Round half away from zero to `places` decimals.
pub fn round_half_up(value: f64, places: u32) -> f64 {
    let scale = 10f64.powi(places as i32);
    // nudge by a few ulps so that values like 4.25 stored as 4.2499999 round up
    let scaled = value * scale;
    let nudged = scaled + scaled.signum() * scaled.abs() * 4.0 * f64::EPSILON;
    (nudged.abs() + 0.5).floor().copysign(value) / scale
}

/// A feature value repeated `dim` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionVector {
    pub value: f64,
    pub dim: usize,
    pub round_places: u32,
}

impl ConditionVector {
    pub fn values(&self) -> Vec<f64> {
        vec![self.value; self.dim]
    }
}

pub fn build_condition_vector(value: f64, dim: usize, round_places: u32) -> Result<ConditionVector> {
    if dim == 0 {
        return Err(Error::Validation("condition dim must be at least 1".into()));
    }
    if !value.is_finite() {
        return Err(Error::Validation(format!("condition value {value} is not finite")));
    }
    Ok(ConditionVector {
        value: round_half_up(value, round_places),
        dim,
        round_places,
    })
}
