//! Minimum DFS codes: canonical edge sequences of connected graphs, the
//! one-hot alphabet used by the sequence model, and the lenient decoder that
//! turns model output back into a graph.
//!
//! Timestamps are discovery indices of a depth-first search. Each edge is a
//! [`FiveTuple`] `(t_u, t_v, l_u, l_e, l_v)`; forward edges have `t_u < t_v`,
//! backward edges `t_u > t_v`. Backward edges from a node are emitted right
//! after the forward edge that discovered it, in ascending order of the far
//! endpoint's timestamp.

use std::cmp::Ordering;
use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FiveTuple {
    pub t_u: usize,
    pub t_v: usize,
    pub l_u: usize,
    pub l_e: usize,
    pub l_v: usize,
}

impl FiveTuple {
    pub const fn new(t_u: usize, t_v: usize, l_u: usize, l_e: usize, l_v: usize) -> Self {
        FiveTuple {
            t_u,
            t_v,
            l_u,
            l_e,
            l_v,
        }
    }

    pub fn is_forward(&self) -> bool {
        self.t_u < self.t_v
    }

    pub fn components(&self) -> [usize; 5] {
        [self.t_u, self.t_v, self.l_u, self.l_e, self.l_v]
    }

    pub fn from_components(c: [usize; 5]) -> Self {
        FiveTuple::new(c[0], c[1], c[2], c[3], c[4])
    }

    fn labels(&self) -> (usize, usize, usize) {
        (self.l_u, self.l_e, self.l_v)
    }
}

/// DFS lexicographic order on single edges.
///
/// Forward edges grow from the deepest rightmost-path node first; backward
/// edges close onto the smallest timestamp first; any backward edge from the
/// rightmost node precedes every forward edge that leaves it. Labels break
/// ties once the structural part is equal.
pub fn tuple_compare(a: &FiveTuple, b: &FiveTuple) -> Ordering {
    match (a.is_forward(), b.is_forward()) {
        (true, true) => a
            .t_v
            .cmp(&b.t_v)
            .then(b.t_u.cmp(&a.t_u))
            .then(a.labels().cmp(&b.labels())),
        (false, false) => a
            .t_u
            .cmp(&b.t_u)
            .then(a.t_v.cmp(&b.t_v))
            .then(a.labels().cmp(&b.labels())),
        (false, true) => {
            if a.t_u < b.t_v {
                Ordering::Less
            } else {
                Ordering::Greater
            }
        }
        (true, false) => {
            if a.t_v <= b.t_u {
                Ordering::Less
            } else {
                Ordering::Greater
            }
        }
    }
}

/// An ordered sequence of edge tuples, without the EOS terminator.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DfsCode {
    pub tuples: Vec<FiveTuple>,
}

impl DfsCode {
    pub fn new(tuples: Vec<FiveTuple>) -> Self {
        DfsCode { tuples }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn max_timestamp(&self) -> Option<usize> {
        self.tuples.iter().map(|t| t.t_u.max(t.t_v)).max()
    }

    pub fn max_node_label(&self) -> Option<usize> {
        self.tuples.iter().map(|t| t.l_u.max(t.l_v)).max()
    }

    pub fn max_edge_label(&self) -> Option<usize> {
        self.tuples.iter().map(|t| t.l_e).max()
    }

    /// Debug text form: one `t_u t_v l_u l_e l_v` line per tuple, then `EOS`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tuples {
            out.push_str(&format!("{} {} {} {} {}\n", t.t_u, t.t_v, t.l_u, t.l_e, t.l_v));
        }
        out.push_str("EOS\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tuples = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line == "EOS" {
                break;
            }
            let vals: Vec<usize> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse().map_err(|e| Error::Parse {
                        line: idx + 1,
                        msg: format!("bad component {tok:?}: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            if vals.len() != 5 {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected 5 components, got {}", vals.len()),
                });
            }
            tuples.push(FiveTuple::new(vals[0], vals[1], vals[2], vals[3], vals[4]));
        }
        Ok(DfsCode { tuples })
    }
}

impl fmt::Display for DfsCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Lexicographic comparison of codes with [`tuple_compare`] per position;
/// a proper prefix is smaller.
pub fn dfs_code_compare(a: &DfsCode, b: &DfsCode) -> Ordering {
    for (x, y) in a.tuples.iter().zip(&b.tuples) {
        match tuple_compare(x, y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

impl PartialOrd for DfsCode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DfsCode {
    fn cmp(&self, other: &Self) -> Ordering {
        dfs_code_compare(self, other)
    }
}

const UNSEEN: usize = usize::MAX;

#[derive(Clone)]
struct SearchState {
    stamp: Vec<usize>,
    next_stamp: usize,
    stack: Vec<usize>,
    pending: VecDeque<FiveTuple>,
}

enum Step {
    Backward(FiveTuple),
    Forward(Vec<(FiveTuple, usize, usize)>),
    Done,
}

struct Labels<'a> {
    node: Vec<usize>,
    edge: &'a dyn Fn(usize, usize) -> usize,
}

impl SearchState {
    fn rooted(n: usize, root: usize) -> Self {
        let mut stamp = vec![UNSEEN; n];
        stamp[root] = 0;
        SearchState {
            stamp,
            next_stamp: 1,
            stack: vec![root],
            pending: VecDeque::new(),
        }
    }

    fn step(&mut self, g: &Graph, labels: &Labels<'_>) -> Step {
        if let Some(t) = self.pending.front() {
            return Step::Backward(*t);
        }
        while let Some(&top) = self.stack.last() {
            let fresh: Vec<usize> = g
                .neighbors(top)
                .iter()
                .copied()
                .filter(|&w| self.stamp[w] == UNSEEN)
                .collect();
            if fresh.is_empty() {
                self.stack.pop();
                continue;
            }
            let t_u = self.stamp[top];
            let cands = fresh
                .into_iter()
                .map(|w| {
                    let t = FiveTuple::new(
                        t_u,
                        self.next_stamp,
                        labels.node[top],
                        (labels.edge)(top, w),
                        labels.node[w],
                    );
                    (t, top, w)
                })
                .collect();
            return Step::Forward(cands);
        }
        Step::Done
    }

    fn advance(&mut self, g: &Graph, labels: &Labels<'_>, parent: usize, child: usize) {
        let t_child = self.next_stamp;
        self.stamp[child] = t_child;
        self.next_stamp += 1;
        self.stack.push(child);
        let mut back: Vec<(usize, usize)> = g
            .neighbors(child)
            .iter()
            .copied()
            .filter(|&w| w != parent && self.stamp[w] != UNSEEN)
            .map(|w| (self.stamp[w], w))
            .collect();
        back.sort_unstable();
        for (t_w, w) in back {
            self.pending.push_back(FiveTuple::new(
                t_child,
                t_w,
                labels.node[child],
                (labels.edge)(child, w),
                labels.node[w],
            ));
        }
    }
}

/// Nodes `a` and `b` are twins when swapping them is an automorphism that
/// fixes every other node.
fn twins(g: &Graph, a: usize, b: usize, labels: &Labels<'_>) -> bool {
    if labels.node[a] != labels.node[b] || g.neighbors(a).len() != g.neighbors(b).len() {
        return false;
    }
    let na = g.neighbors(a).iter().filter(|&&x| x != b);
    let nb = g.neighbors(b).iter().filter(|&&x| x != a);
    na.eq(nb)
        && g.neighbors(a)
            .iter()
            .filter(|&&x| x != b)
            .all(|&x| (labels.edge)(a, x) == (labels.edge)(b, x))
}

/// Minimum DFS code of a connected graph under arbitrary node and edge
/// labelers.
///
/// Branch-and-bound over all rooted depth-first traversals: at every step only
/// the partial traversals whose emitted prefix equals the current minimum
/// survive. Interchangeable twin nodes are expanded once.
///
/// The edge labeler must be symmetric in its arguments.
pub fn encode_min_dfs_with(
    g: &Graph,
    node_label: impl Fn(usize) -> usize,
    edge_label: &dyn Fn(usize, usize) -> usize,
) -> Result<DfsCode> {
    min_dfs_search(g, node_label, edge_label).map(|(code, _)| code)
}

/// Nodes of a connected graph listed by their timestamp in one traversal
/// that realizes the minimum degree-labeled DFS code. Isomorphic graphs get
/// orders that agree up to an automorphism.
pub fn canonical_order(g: &Graph) -> Result<Vec<usize>> {
    if g.node_count() == 1 {
        return Ok(vec![0]);
    }
    let degrees = g.degrees();
    min_dfs_search(g, |v| degrees[v], &|_, _| 0).map(|(_, order)| order)
}

fn min_dfs_search(
    g: &Graph,
    node_label: impl Fn(usize) -> usize,
    edge_label: &dyn Fn(usize, usize) -> usize,
) -> Result<(DfsCode, Vec<usize>)> {
    let n = g.node_count();
    if n < 2 {
        return Err(Error::Validation(
            "graph needs at least two nodes to have a DFS code".into(),
        ));
    }
    if !g.is_connected() {
        return Err(Error::Validation("graph is not connected".into()));
    }
    let labels = Labels {
        node: (0..n).map(node_label).collect(),
        edge: edge_label,
    };

    let mut states: Vec<SearchState> = (0..n).map(|r| SearchState::rooted(n, r)).collect();
    let mut code = Vec::with_capacity(g.edge_count());

    loop {
        let mut steps = Vec::with_capacity(states.len());
        let mut best: Option<FiveTuple> = None;
        for st in &mut states {
            let step = st.step(g, &labels);
            let cand = match &step {
                Step::Backward(t) => Some(*t),
                Step::Forward(c) => c
                    .iter()
                    .map(|(t, _, _)| *t)
                    .min_by(tuple_compare),
                Step::Done => None,
            };
            if let Some(c) = cand {
                if best.map_or(true, |b| tuple_compare(&c, &b) == Ordering::Less) {
                    best = Some(c);
                }
            }
            steps.push(step);
        }
        let Some(best) = best else {
            break;
        };
        code.push(best);

        let mut next = Vec::new();
        for (mut st, step) in states.into_iter().zip(steps) {
            match step {
                Step::Backward(t) => {
                    if t == best {
                        st.pending.pop_front();
                        next.push(st);
                    }
                }
                Step::Forward(cands) => {
                    let mut taken: Vec<usize> = Vec::new();
                    let mut cands: Vec<_> = cands.into_iter().filter(|(t, _, _)| *t == best).collect();
                    cands.sort_by_key(|&(_, _, w)| w);
                    for (_, parent, child) in cands {
                        if taken.iter().any(|&o| twins(g, o, child, &labels)) {
                            continue;
                        }
                        taken.push(child);
                        let mut branch = st.clone();
                        branch.advance(g, &labels, parent, child);
                        next.push(branch);
                    }
                }
                Step::Done => {}
            }
        }
        states = next;
    }
    debug_assert_eq!(code.len(), g.edge_count());
    let mut order = vec![0; n];
    if let Some(st) = states.first() {
        for (v, &t) in st.stamp.iter().enumerate() {
            order[t] = v;
        }
    }
    Ok((DfsCode { tuples: code }, order))
}

/// Minimum DFS code with degree node labels and a constant zero edge label.
pub fn encode_min_dfs(g: &Graph) -> Result<DfsCode> {
    let degrees = g.degrees();
    encode_min_dfs_with(g, |v| degrees[v], &|_, _| 0)
}

/// Rebuilds a graph from a well-formed DFS code, rejecting any rule
/// violation. Labels are ignored.
pub fn decode(code: &DfsCode) -> Result<Graph> {
    if code.is_empty() {
        return Err(Error::Validation("empty DFS code".into()));
    }
    let mut max_t = 0usize;
    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(code.len());
    for (i, t) in code.tuples.iter().enumerate() {
        let bad = |why: &str| Error::Validation(format!("tuple {i} ({}, {}): {why}", t.t_u, t.t_v));
        if t.t_u == t.t_v {
            return Err(bad("self-loop"));
        }
        if t.is_forward() {
            if t.t_u > max_t || t.t_v != max_t + 1 {
                return Err(bad("forward edge must reach the next new timestamp"));
            }
            max_t += 1;
        } else if t.t_u > max_t {
            return Err(bad("backward edge references an unseen timestamp"));
        }
        if !seen.insert((t.t_u.min(t.t_v), t.t_u.max(t.t_v))) {
            return Err(bad("duplicate edge"));
        }
        edges.push((t.t_u, t.t_v));
    }
    Graph::new(max_t + 1, edges)
}

/// Rebuilds a graph from possibly malformed model output.
///
/// Node 0 exists from the start. Tuples are applied in order; a tuple is
/// skipped when it is a self-loop, repeats an existing timestamp pair, or
/// mentions a timestamp beyond `current_max + 1`. A surviving tuple may add at
/// most one new node, so the result is always connected.
pub fn repair_decode(code: &DfsCode) -> Result<Graph> {
    let mut max_t = 0usize;
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for t in &code.tuples {
        if t.t_u == t.t_v {
            continue;
        }
        let key = (t.t_u.min(t.t_v), t.t_u.max(t.t_v));
        if seen.contains(&key) || key.1 > max_t + 1 {
            continue;
        }
        seen.insert(key);
        if key.1 == max_t + 1 {
            max_t += 1;
        }
        edges.push((t.t_u, t.t_v));
    }
    if edges.is_empty() {
        return Err(Error::EmptyGeneration);
    }
    Graph::new(max_t + 1, edges)
}

/// Alphabet sizes of the five tuple components, each including its EOS
/// symbol as the last index (edge labels: real 0, EOS 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub t_size: usize,
    pub l_size: usize,
    pub e_size: usize,
}

impl Vocabulary {
    /// Covers every tuple of every code; `EOS = 1 + max value` per component.
    pub fn from_codes<'a>(codes: impl IntoIterator<Item = &'a DfsCode>) -> Result<Self> {
        let mut max_t = None::<usize>;
        let mut max_l = None::<usize>;
        let mut max_e = 0usize;
        for c in codes {
            max_t = max_t.max(c.max_timestamp());
            max_l = max_l.max(c.max_node_label());
            max_e = max_e.max(c.max_edge_label().unwrap_or(0));
        }
        match (max_t, max_l) {
            (Some(t), Some(l)) => Ok(Vocabulary {
                t_size: t + 2,
                l_size: l + 2,
                e_size: max_e + 2,
            }),
            _ => Err(Error::EmptyManifest),
        }
    }

    pub fn eos_t(&self) -> usize {
        self.t_size - 1
    }

    pub fn eos_l(&self) -> usize {
        self.l_size - 1
    }

    pub fn eos_e(&self) -> usize {
        self.e_size - 1
    }

    pub fn eos_tuple(&self) -> FiveTuple {
        FiveTuple::new(self.eos_t(), self.eos_t(), self.eos_l(), self.eos_e(), self.eos_l())
    }

    /// Component alphabet sizes in tuple order.
    pub fn sizes(&self) -> [usize; 5] {
        [self.t_size, self.t_size, self.l_size, self.e_size, self.l_size]
    }

    pub fn eos_components(&self) -> [usize; 5] {
        self.eos_tuple().components()
    }

    /// Start of each component block in a one-hot row.
    pub fn offsets(&self) -> [usize; 5] {
        let s = self.sizes();
        let mut off = [0; 5];
        for i in 1..5 {
            off[i] = off[i - 1] + s[i - 1];
        }
        off
    }

    /// One-hot row width `2·t_size + 2·l_size + e_size`.
    pub fn width(&self) -> usize {
        2 * self.t_size + 2 * self.l_size + self.e_size
    }

    pub fn is_eos(&self, component: usize, value: usize) -> bool {
        self.eos_components()[component] == value
    }
}

const COMPONENT_NAMES: [&str; 5] = ["t_u", "t_v", "l_u", "l_e", "l_v"];

/// A code in model form: per-row component indices (the one-hot positions
/// within each block), terminated by the EOS row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotSequence {
    pub vocab: Vocabulary,
    pub rows: Vec<[usize; 5]>,
}

impl OneHotSequence {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.vocab.width()
    }

    /// Dense binary row `j`.
    pub fn dense_row(&self, j: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.width()];
        let off = self.vocab.offsets();
        for (c, &v) in self.rows[j].iter().enumerate() {
            row[off[c] + v] = 1.0;
        }
        row
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|j| self.dense_row(j)).collect()
    }
}

/// Component-wise one-hot encoding with the EOS row appended.
pub fn to_one_hot(code: &DfsCode, vocab: &Vocabulary) -> Result<OneHotSequence> {
    let sizes = vocab.sizes();
    let mut rows = Vec::with_capacity(code.len() + 1);
    for t in &code.tuples {
        let comps = t.components();
        for c in 0..5 {
            // A real value may not collide with the EOS slot either.
            if comps[c] >= sizes[c] - 1 {
                return Err(Error::VocabularyOverflow {
                    component: COMPONENT_NAMES[c],
                    value: comps[c],
                    size: sizes[c],
                });
            }
        }
        rows.push(comps);
    }
    rows.push(vocab.eos_components());
    Ok(OneHotSequence {
        vocab: *vocab,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(a: usize, b: usize, c: usize, d: usize, e: usize) -> FiveTuple {
        FiveTuple::new(a, b, c, d, e)
    }

    #[test]
    fn single_edge_code() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        assert_eq!(encode_min_dfs(&g).unwrap().tuples, vec![t(0, 1, 1, 0, 1)]);
    }

    #[test]
    fn triangle_code() {
        let g = Graph::new(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(
            encode_min_dfs(&g).unwrap().tuples,
            vec![t(0, 1, 2, 0, 2), t(1, 2, 2, 0, 2), t(2, 0, 2, 0, 2)]
        );
    }

    #[test]
    fn labeled_example_graph() {
        // Node labels A,B,C,A; edge labels a,b,c encoded as 0,1,2.
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 0), (1, 3)]).unwrap();
        let node = [0usize, 1, 2, 0];
        let edge = |u: usize, v: usize| match (u.min(v), u.max(v)) {
            (0, 1) | (1, 2) => 0,
            (0, 2) => 1,
            (1, 3) => 2,
            _ => unreachable!(),
        };
        let code = encode_min_dfs_with(&g, |v| node[v], &edge).unwrap();
        assert_eq!(
            code.tuples,
            vec![t(0, 1, 0, 0, 1), t(1, 2, 1, 0, 2), t(2, 0, 2, 1, 0), t(1, 3, 1, 2, 0)]
        );
        let back = decode(&code).unwrap();
        assert_eq!(back.node_count(), 4);
        assert_eq!(back.canonical_edges(), vec![(0, 1), (0, 2), (1, 2), (1, 3)]);
    }

    #[test]
    fn rejects_degenerate_graphs() {
        assert!(encode_min_dfs(&Graph::empty(1)).is_err());
        let g = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(encode_min_dfs(&g).is_err());
    }

    #[test]
    fn compare_basics() {
        let a = DfsCode::new(vec![t(0, 1, 1, 0, 1)]);
        let b = DfsCode::new(vec![t(0, 1, 2, 0, 2)]);
        assert_eq!(dfs_code_compare(&a, &b), Ordering::Less);
        assert_eq!(dfs_code_compare(&a, &a), Ordering::Equal);
        let mut longer = a.clone();
        longer.tuples.push(t(1, 2, 1, 0, 1));
        assert_eq!(dfs_code_compare(&a, &longer), Ordering::Less);
        // A backward edge off the rightmost node precedes a forward edge
        // leaving it, and forward growth from deeper nodes comes first.
        assert_eq!(tuple_compare(&t(2, 0, 9, 9, 9), &t(2, 3, 0, 0, 0)), Ordering::Less);
        assert_eq!(tuple_compare(&t(2, 3, 9, 9, 9), &t(1, 3, 0, 0, 0)), Ordering::Less);
        assert_eq!(tuple_compare(&t(3, 0, 9, 9, 9), &t(3, 1, 0, 0, 0)), Ordering::Less);
    }

    #[test]
    fn decode_examples() {
        let single = DfsCode::new(vec![t(0, 1, 1, 0, 1)]);
        assert_eq!(decode(&single).unwrap().edge_count(), 1);
        let tri = DfsCode::new(vec![t(0, 1, 2, 0, 2), t(1, 2, 2, 0, 2), t(2, 0, 2, 0, 2)]);
        let g = decode(&tri).unwrap();
        assert_eq!(g.canonical_edges(), vec![(0, 1), (0, 2), (1, 2)]);
        let skip = DfsCode::new(vec![t(0, 1, 0, 0, 0), t(1, 3, 0, 0, 0)]);
        assert!(decode(&skip).is_err());
        let dup = DfsCode::new(vec![t(0, 1, 0, 0, 0), t(1, 0, 0, 0, 0)]);
        assert!(decode(&dup).is_err());
    }

    #[test]
    fn repair_examples() {
        let dup = DfsCode::new(vec![t(0, 1, 0, 0, 0), t(0, 1, 0, 0, 0)]);
        assert_eq!(repair_decode(&dup).unwrap().edge_count(), 1);
        let jump = DfsCode::new(vec![t(0, 1, 0, 0, 0), t(3, 0, 0, 0, 0), t(1, 2, 0, 0, 0)]);
        let g = repair_decode(&jump).unwrap();
        assert_eq!(g.canonical_edges(), vec![(0, 1), (1, 2)]);
        let looped = DfsCode::new(vec![t(0, 0, 0, 0, 0)]);
        assert!(matches!(repair_decode(&looped), Err(Error::EmptyGeneration)));
    }

    #[test]
    fn one_hot_layout() {
        let vocab = Vocabulary {
            t_size: 3,
            l_size: 3,
            e_size: 2,
        };
        let seq = to_one_hot(&DfsCode::new(vec![t(0, 1, 1, 0, 1)]), &vocab).unwrap();
        let rows = seq.to_dense();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].len(), 14);
        let ones: Vec<usize> = (0..14).filter(|&i| rows[0][i] == 1.0).collect();
        assert_eq!(ones, vec![0, 4, 7, 9, 12]);
        let eos: Vec<usize> = (0..14).filter(|&i| rows[1][i] == 1.0).collect();
        assert_eq!(eos, vec![2, 3 + 2, 6 + 2, 9 + 1, 11 + 2]);

        let empty = to_one_hot(&DfsCode::default(), &vocab).unwrap();
        assert_eq!(empty.len(), 1);
    }

    #[test]
    fn one_hot_overflow() {
        let vocab = Vocabulary {
            t_size: 3,
            l_size: 3,
            e_size: 2,
        };
        let big = DfsCode::new(vec![t(0, 2, 1, 0, 1)]);
        assert!(matches!(
            to_one_hot(&big, &vocab),
            Err(Error::VocabularyOverflow { component: "t_v", .. })
        ));
    }

    #[test]
    fn vocabulary_from_codes() {
        let g = Graph::new(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        let code = encode_min_dfs(&g).unwrap();
        let v = Vocabulary::from_codes([&code]).unwrap();
        assert_eq!((v.t_size, v.l_size, v.e_size), (4, 4, 2));
        assert_eq!(v.eos_tuple(), t(3, 3, 3, 1, 3));
        assert_eq!(v.width(), 2 * 4 + 2 * 4 + 2);
    }

    #[test]
    fn text_round_trip() {
        let code = DfsCode::new(vec![t(0, 1, 2, 0, 2), t(1, 2, 2, 0, 2)]);
        let text = code.to_text();
        assert!(text.ends_with("EOS\n"));
        assert_eq!(DfsCode::from_text(&text).unwrap(), code);
    }
}
