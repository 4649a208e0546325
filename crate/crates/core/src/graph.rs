//! Undirected simple graphs with dense integer node ids.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// An immutable undirected simple graph on nodes `0..n`.
///
/// Edges are kept in insertion order (orientation as first given) so that
/// serializing a parsed graph reproduces the original first-appearance
/// numbering. Equality compares the node count and the unordered edge set.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.canonical_edges() == other.canonical_edges()
    }
}

impl Eq for Graph {}

impl Graph {
    /// Builds a graph from an edge iterator. Duplicate and reversed-duplicate
    /// edges collapse; self-loops and out-of-range ids are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut adj = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::Validation(format!("self-loop on node {u}")));
            }
            if seen.insert((u.min(v), u.max(v))) {
                kept.push((u, v));
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Graph {
            n,
            edges: kept,
            adj,
        })
    }

    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    /// Parses the edge-list text format: one `u v` pair per line, `#` starts
    /// a comment, blank lines are ignored. Node ids are renumbered densely in
    /// order of first appearance.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut ids: HashMap<u64, usize> = HashMap::new();
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let mut fields = line.split_whitespace();
            let Some(first) = fields.next() else {
                continue;
            };
            let second = fields.next().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "expected two node ids".into(),
            })?;
            if fields.next().is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "expected exactly two node ids".into(),
                });
            }
            let parse = |tok: &str| {
                tok.parse::<u64>().map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("bad node id {tok:?}: {e}"),
                })
            };
            let (a, b) = (parse(first)?, parse(second)?);
            if a == b {
                return Err(Error::Validation(format!(
                    "self-loop on node {a} (line {line_no})"
                )));
            }
            let mut intern = |raw_id: u64| {
                let next = ids.len();
                *ids.entry(raw_id).or_insert(next)
            };
            let u = intern(a);
            let v = intern(b);
            pairs.push((u, v));
        }
        Graph::new(ids.len(), pairs)
    }

    /// Writes the edge-list text format, one edge per line in insertion order.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(self.edges.len() * 8);
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in insertion order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Edges as sorted `(min, max)` pairs.
    pub fn canonical_edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self.edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        e.sort_unstable();
        e
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> Result<usize> {
        self.adj
            .get(v)
            .map(Vec::len)
            .ok_or_else(|| Error::Validation(format!("node {v} out of range for {} nodes", self.n)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adj[u].binary_search(&v).is_ok()
    }

    /// True iff a BFS from node 0 reaches every node. A single node is
    /// connected; the empty graph is not.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        self.bfs_distances(0).iter().all(|d| d.is_some())
    }

    /// Unweighted hop distances from `src`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &w in &self.adj[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Connected components, each as a sorted node list, largest first
    /// (ties broken by smallest member).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut comps = Vec::new();
        for s in 0..self.n {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut i = 0;
            while i < comp.len() {
                let u = comp[i];
                i += 1;
                for &w in &self.adj[u] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }

    pub fn largest_component(&self) -> Graph {
        match self.components().first() {
            Some(nodes) => self
                .induced_subgraph(nodes)
                .expect("component nodes are in range"),
            None => Graph::empty(0),
        }
    }

    /// The subgraph induced by `nodes`. New id `i` is `nodes[i]`; repeated
    /// entries keep their first position.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Graph> {
        let mut remap = HashMap::with_capacity(nodes.len());
        let mut order = Vec::with_capacity(nodes.len());
        for &v in nodes {
            if v >= self.n {
                return Err(Error::Validation(format!(
                    "node {v} out of range for {} nodes",
                    self.n
                )));
            }
            if !remap.contains_key(&v) {
                remap.insert(v, order.len());
                order.push(v);
            }
        }
        let mut edges = Vec::new();
        for (i, &v) in order.iter().enumerate() {
            for &w in &self.adj[v] {
                if let Some(&j) = remap.get(&w) {
                    if i < j {
                        edges.push((i, j));
                    }
                }
            }
        }
        Graph::new(order.len(), edges)
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(Error::Validation("permutation length mismatch".into()));
        }
        let mut check = vec![false; self.n];
        for &p in perm {
            if p >= self.n || std::mem::replace(&mut check[p], true) {
                return Err(Error::Validation("not a permutation".into()));
            }
        }
        Graph::new(self.n, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
    }

    /// Edge density `2|E| / (n(n-1))`.
    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        2.0 * self.edges.len() as f64 / (self.n as f64 * (self.n as f64 - 1.0))
    }
}
