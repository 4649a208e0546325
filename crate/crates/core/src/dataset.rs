//! Corpus synthesis (Watts–Strogatz, Erdős–Rényi, random-walk samples of a
//! large graph) and the on-disk manifest tying graphs to condition values.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dfs::{encode_min_dfs, to_one_hot, DfsCode, Vocabulary};
use crate::error::{Error, Result};
use crate::features::{build_condition_vector, round_half_up, Feature};
use crate::graph::Graph;
use crate::rng::{derive_seed, stream};
use crate::train::{Example, TrainingData};

/// Redraws allowed when a random graph comes out disconnected.
pub const CONNECT_RETRIES: usize = 100;

pub const TRAIN_FRACTION: f64 = 0.9;

/// Watts–Strogatz graph. Each node links to `k/2` ring neighbours per side;
/// odd `k` adds the chord `i — i + n/2`. Every lattice edge then has its far
/// endpoint rewired with probability `p` to a uniform node that is neither
/// the near endpoint nor already adjacent to it. Disconnected draws are
/// redrawn.
pub fn gen_ws(n: usize, k: usize, p: f64, seed: u64) -> Result<Graph> {
    if k < 2 || n <= k {
        return Err(Error::Validation(format!("need n > K >= 2, got n={n}, K={k}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Validation(format!("rewiring probability {p} outside [0, 1]")));
    }
    let mut lattice = Vec::new();
    for j in 1..=k / 2 {
        for i in 0..n {
            lattice.push((i, (i + j) % n));
        }
    }
    if k % 2 == 1 {
        for i in 0..n {
            let w = (i + n / 2) % n;
            if !lattice.iter().any(|&(a, b)| (a == i && b == w) || (a == w && b == i)) {
                lattice.push((i, w));
            }
        }
    }
    let mut rng = stream(seed);
    for _ in 0..CONNECT_RETRIES {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(u, v) in &lattice {
            adj[u].insert(v);
            adj[v].insert(u);
        }
        let mut edges = lattice.clone();
        for e in edges.iter_mut() {
            if !rng.gen_bool(p) {
                continue;
            }
            let (u, v) = *e;
            let choices: Vec<usize> = (0..n).filter(|&w| w != u && !adj[u].contains(&w)).collect();
            let Some(&w) = choices.choose(&mut rng) else {
                continue;
            };
            adj[u].remove(&v);
            adj[v].remove(&u);
            adj[u].insert(w);
            adj[w].insert(u);
            *e = (u, w);
        }
        let g = Graph::new(n, edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::GenerationBudget(format!(
        "no connected WS draw (n={n}, K={k}, p={p}) in {CONNECT_RETRIES} attempts"
    )))
}

/// Connected Erdős–Rényi `G(n, p)` draw.
pub fn gen_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Validation(format!("need n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Validation(format!("edge probability {p} outside [0, 1]")));
    }
    let mut rng = stream(seed);
    for _ in 0..CONNECT_RETRIES {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        let g = Graph::new(n, edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::GenerationBudget(format!(
        "no connected ER draw (n={n}, p={p}) in {CONNECT_RETRIES} attempts"
    )))
}

/// Induced subgraph on the first `target_nodes` distinct nodes visited by a
/// random walk from a uniform start, stepping along a uniform incident edge.
pub fn random_walk_sample(big: &Graph, target_nodes: usize, seed: u64) -> Result<Graph> {
    if target_nodes < 2 {
        return Err(Error::Validation("target_nodes must be at least 2".into()));
    }
    if big.node_count() < target_nodes {
        return Err(Error::Validation(format!(
            "source graph has {} nodes, fewer than {target_nodes}",
            big.node_count()
        )));
    }
    if big.edge_count() == 0 {
        return Err(Error::GenerationBudget("source graph has no edges".into()));
    }
    let mut rng = stream(seed);
    let n = big.node_count();
    let budget = 1000 * target_nodes;
    let mut start = rng.gen_range(0..n);
    while big.neighbors(start).is_empty() {
        start = rng.gen_range(0..n);
    }
    let mut seen = vec![false; n];
    let mut visited = vec![start];
    seen[start] = true;
    let mut cur = start;
    let mut steps = 0;
    while visited.len() < target_nodes {
        if steps == budget {
            return Err(Error::GenerationBudget(format!(
                "random walk found {} of {target_nodes} nodes in {budget} steps",
                visited.len()
            )));
        }
        steps += 1;
        let nb = big.neighbors(cur);
        cur = nb[rng.gen_range(0..nb.len())];
        if !seen[cur] {
            seen[cur] = true;
            visited.push(cur);
        }
    }
    big.induced_subgraph(&visited)
}

/// `count` WS graphs with `p` uniform in `p_range`.
pub fn ws_corpus(count: usize, n: usize, k: usize, p_range: (f64, f64), seed: u64) -> Result<Vec<Graph>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let p = stream(derive_seed(seed, 2 * i)).gen_range(p_range.0..=p_range.1);
            gen_ws(n, k, p, derive_seed(seed, 2 * i + 1))
        })
        .collect()
}

/// `count` connected ER graphs with `p` uniform in `p_range`.
pub fn er_corpus(count: usize, n: usize, p_range: (f64, f64), seed: u64) -> Result<Vec<Graph>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let p = stream(derive_seed(seed, 2 * i)).gen_range(p_range.0..=p_range.1);
            gen_er(n, p, derive_seed(seed, 2 * i + 1))
        })
        .collect()
}

/// `count` random-walk samples of `big`.
pub fn walk_corpus(big: &Graph, count: usize, target_nodes: usize, seed: u64) -> Result<Vec<Graph>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| random_walk_sample(big, target_nodes, derive_seed(seed, i)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Graph file, relative to the manifest's directory.
    pub path: String,
    pub condition: f64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub feature: Feature,
    pub dim: usize,
    #[serde(default = "default_round_places")]
    pub round_places: u32,
    pub vocab: Vocabulary,
    pub entries: Vec<ManifestEntry>,
}

fn default_round_places() -> u32 {
    1
}

/// A manifest with its graphs and their minimum DFS codes, index-aligned.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub graphs: Vec<Graph>,
    pub codes: Vec<DfsCode>,
    /// Input indices left out, with the reason.
    pub excluded: Vec<(usize, String)>,
}

/// Encodes `graphs`, computes `feature` rounded to `round_places` decimals
/// as each condition, builds the shared vocabulary and assigns a seeded
/// train/validation split with `⌈0.9·N⌉` training entries. Graphs whose
/// feature is undefined are excluded and listed.
pub fn build_dataset(
    graphs: &[Graph],
    feature: Feature,
    dim: usize,
    round_places: u32,
    seed: u64,
) -> Result<Dataset> {
    if graphs.is_empty() {
        return Err(Error::EmptyManifest);
    }
    if dim == 0 {
        return Err(Error::Validation("condition dim must be at least 1".into()));
    }
    let prepared: Vec<std::result::Result<(DfsCode, f64), String>> = graphs
        .par_iter()
        .map(|g| {
            if !g.is_connected() {
                return Err("graph is not connected".to_string());
            }
            let value = feature.compute(g).map_err(|e| e.to_string())?;
            let code = encode_min_dfs(g).map_err(|e| e.to_string())?;
            Ok((code, round_half_up(value, round_places)))
        })
        .collect();
    let mut kept = Vec::new();
    let mut codes = Vec::new();
    let mut conditions = Vec::new();
    let mut excluded = Vec::new();
    for (i, (g, r)) in graphs.iter().zip(prepared).enumerate() {
        match r {
            Ok((code, value)) => {
                kept.push(g.clone());
                codes.push(code);
                conditions.push(value);
            }
            Err(reason) => excluded.push((i, reason)),
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let vocab = Vocabulary::from_codes(&codes)?;
    let n = kept.len();
    let n_train = (TRAIN_FRACTION * n as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(derive_seed(seed, u64::MAX)));
    let mut split = vec![Split::Validation; n];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }
    let entries = (0..n)
        .map(|i| ManifestEntry {
            path: format!("graphs/{i:05}.txt"),
            condition: conditions[i],
            split: split[i],
        })
        .collect();
    Ok(Dataset {
        manifest: DatasetManifest {
            seed,
            feature,
            dim,
            round_places,
            vocab,
            entries,
        },
        graphs: kept,
        codes,
        excluded,
    })
}

impl Dataset {
    /// Writes `manifest.json` and the graph files under `dir`; returns the
    /// manifest path.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("graphs"))?;
        for (entry, g) in self.manifest.entries.iter().zip(&self.graphs) {
            std::fs::write(dir.join(&entry.path), g.to_edge_list())?;
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, self.manifest.to_json()?)?;
        Ok(path)
    }

    /// Reads a manifest and every graph it lists, re-encoding each graph.
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
        let manifest_path = manifest_path.as_ref();
        let manifest = DatasetManifest::from_json(&std::fs::read_to_string(manifest_path)?)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut graphs = Vec::with_capacity(manifest.entries.len());
        let mut codes = Vec::with_capacity(manifest.entries.len());
        for entry in &manifest.entries {
            let g = Graph::from_edge_list(&std::fs::read_to_string(base.join(&entry.path))?)?;
            codes.push(encode_min_dfs(&g)?);
            graphs.push(g);
        }
        Ok(Dataset {
            manifest,
            graphs,
            codes,
            excluded: Vec::new(),
        })
    }

    /// One-hot sequences and condition vectors, split per the manifest.
    pub fn training_data(&self) -> Result<TrainingData> {
        let m = &self.manifest;
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (entry, code) in m.entries.iter().zip(&self.codes) {
            let ex = Example {
                seq: to_one_hot(code, &m.vocab)?,
                cond: build_condition_vector(entry.condition, m.dim, m.round_places)?,
            };
            match entry.split {
                Split::Train => train.push(ex),
                Split::Validation => val.push(ex),
            }
        }
        if train.is_empty() {
            return Err(Error::EmptyManifest);
        }
        Ok(TrainingData {
            vocab: m.vocab,
            train,
            val,
            round_places: m.round_places,
            feature: Some(m.feature.name().to_string()),
        })
    }

    pub fn conditions(&self) -> Vec<f64> {
        self.manifest.entries.iter().map(|e| e.condition).collect()
    }
}

impl DatasetManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(text)?;
        if m.entries.is_empty() {
            return Err(Error::EmptyManifest);
        }
        Ok(m)
    }
}
