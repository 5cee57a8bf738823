//! Adjacency structures, union graphs, acyclicity and node orderings.
//!
//! Entry `(h, j)` of an adjacency means the edge `Y_h ← Y_j`: node `j` is a
//! parent of node `h`. Orderings list children before their parents.

use std::io::{BufRead, Write};

use ndarray::ArrayView3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QdagError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Adjacency {
    p: usize,
    edges: Vec<bool>,
}

impl Adjacency {
    pub fn empty(p: usize) -> Self {
        Self { p, edges: vec![false; p * p] }
    }

    /// Builds from `(child, parent)` pairs.
    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = Self::empty(p);
        for &(h, j) in edges {
            adj.set(h, j, true)?;
        }
        Ok(adj)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn has_edge(&self, h: usize, j: usize) -> bool {
        self.edges[h * self.p + j]
    }

    pub fn set(&mut self, h: usize, j: usize, on: bool) -> Result<()> {
        if h >= self.p || j >= self.p {
            return Err(QdagError::Dimension(format!("edge ({h}, {j}) outside p = {}", self.p)));
        }
        if h == j && on {
            return Err(QdagError::Input(format!("self loop at node {h}")));
        }
        self.edges[h * self.p + j] = on;
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|e| **e).count()
    }

    /// `(child, parent)` pairs in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.p * self.p)
            .filter(|k| self.edges[*k])
            .map(|k| (k / self.p, k % self.p))
    }

    pub fn parents(&self, h: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.p).filter(move |&j| self.has_edge(h, j))
    }

    pub fn union_with(&mut self, other: &Adjacency) {
        for (a, b) in self.edges.iter_mut().zip(&other.edges) {
            *a |= *b;
        }
    }

    pub fn is_subgraph_of(&self, other: &Adjacency) -> bool {
        self.p == other.p && self.edges.iter().zip(&other.edges).all(|(a, b)| !*a || *b)
    }

    /// 0/1 CSV with a header row of node names.
    pub fn write_csv<W: Write>(&self, mut w: W, names: &[String]) -> Result<()> {
        if names.len() != self.p {
            return Err(QdagError::Dimension(format!("{} names for p = {}", names.len(), self.p)));
        }
        writeln!(w, "{}", names.join(","))?;
        for h in 0..self.p {
            let row: Vec<&str> = (0..self.p).map(|j| if self.has_edge(h, j) { "1" } else { "0" }).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<(Self, Vec<String>)> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| QdagError::Format("empty adjacency file".into()))??;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let p = names.len();
        let mut adj = Self::empty(p);
        let mut h = 0;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if h >= p {
                return Err(QdagError::Format("more rows than header columns".into()));
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != p {
                return Err(QdagError::Format(format!("row {h} has {} cells, expected {p}", cells.len())));
            }
            for (j, c) in cells.iter().enumerate() {
                match *c {
                    "0" => {}
                    "1" => adj.set(h, j, true)?,
                    other => return Err(QdagError::Format(format!("bad adjacency entry {other:?}"))),
                }
            }
            h += 1;
        }
        if h != p {
            return Err(QdagError::Format(format!("{h} rows for {p} columns")));
        }
        Ok((adj, names))
    }
}

/// Per-individual graphs and their union.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualDagSet {
    pub per_individual: Vec<Adjacency>,
    pub union: Adjacency,
}

impl IndividualDagSet {
    pub fn n(&self) -> usize {
        self.per_individual.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeOrdering(Vec<usize>);

impl NodeOrdering {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let p = order.len();
        let mut seen = vec![false; p];
        for &v in &order {
            if v >= p || seen[v] {
                return Err(QdagError::Input(format!("{order:?} is not a permutation of 0..{p}")));
            }
            seen[v] = true;
        }
        Ok(Self(order))
    }

    pub fn identity(p: usize) -> Self {
        Self((0..p).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `positions()[v]` is the rank of node `v` in the ordering.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (r, &v) in self.0.iter().enumerate() {
            pos[v] = r;
        }
        pos
    }

    /// True when every edge `h ← j` has `h` ranked before `j`.
    pub fn respects(&self, adj: &Adjacency) -> bool {
        let pos = self.positions();
        adj.edges().all(|(h, j)| pos[h] < pos[j])
    }
}

/// Kahn peeling of childless nodes, smallest index first. Returns the peeled
/// order and the set of nodes left when peeling stalls.
fn kahn(adj: &Adjacency) -> (Vec<usize>, Vec<bool>) {
    let p = adj.p();
    // out-degree counts children: j has child h when h ← j
    let mut children = vec![0usize; p];
    for (_, j) in adj.edges() {
        children[j] += 1;
    }
    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> =
        (0..p).filter(|&v| children[v] == 0).map(std::cmp::Reverse).collect();
    let mut removed = vec![false; p];
    let mut order = Vec::with_capacity(p);
    while let Some(std::cmp::Reverse(h)) = ready.pop() {
        removed[h] = true;
        order.push(h);
        for j in adj.parents(h) {
            children[j] -= 1;
            if children[j] == 0 {
                ready.push(std::cmp::Reverse(j));
            }
        }
    }
    (order, removed)
}

pub fn is_acyclic(adj: &Adjacency) -> bool {
    kahn(adj).0.len() == adj.p()
}

pub fn topological_order(adj: &Adjacency) -> Result<NodeOrdering> {
    let (order, removed) = kahn(adj);
    if order.len() == adj.p() {
        return Ok(NodeOrdering(order));
    }
    // every leftover node keeps a leftover child; walking child links must
    // revisit a node
    let p = adj.p();
    let start = (0..p).find(|&v| !removed[v]).expect("stalled peel leaves nodes");
    let child_of = |j: usize| (0..p).find(|&h| !removed[h] && adj.has_edge(h, j));
    let mut seen = vec![usize::MAX; p];
    let mut path = Vec::new();
    let mut v = start;
    while seen[v] == usize::MAX {
        seen[v] = path.len();
        path.push(v);
        v = child_of(v).expect("leftover node has a leftover child");
    }
    Err(QdagError::Cycle(path[seen[v]..].to_vec()))
}

/// Per-individual edge indicators `beta[i, h, j] != 0` (via `is_edge`) and
/// their union. Fails with the offending cycle when the union is cyclic.
pub fn union_graph<F: Fn(f64) -> bool>(beta: ArrayView3<f64>, is_edge: F) -> Result<IndividualDagSet> {
    let (n, p, p2) = beta.dim();
    if p != p2 {
        return Err(QdagError::Dimension(format!("beta is {n}x{p}x{p2}")));
    }
    let mut union = Adjacency::empty(p);
    let mut per_individual = Vec::with_capacity(n);
    for i in 0..n {
        let mut adj = Adjacency::empty(p);
        for h in 0..p {
            for j in 0..p {
                if h != j && is_edge(beta[[i, h, j]]) {
                    adj.set(h, j, true)?;
                }
            }
        }
        union.union_with(&adj);
        per_individual.push(adj);
    }
    topological_order(&union)?;
    Ok(IndividualDagSet { per_individual, union })
}

/// Kendall rank correlation between two orderings of the same nodes.
pub fn kendall_tau(a: &NodeOrdering, b: &NodeOrdering) -> Result<f64> {
    let p = a.len();
    if b.len() != p {
        return Err(QdagError::Dimension(format!("orderings of size {p} and {}", b.len())));
    }
    if p < 2 {
        return Ok(1.0);
    }
    let (pa, pb) = (a.positions(), b.positions());
    let mut net: i64 = 0;
    for u in 0..p {
        for v in u + 1..p {
            let s = (pa[u] as i64 - pa[v] as i64).signum() * (pb[u] as i64 - pb[v] as i64).signum();
            net += s;
        }
    }
    Ok(net as f64 / (p * (p - 1) / 2) as f64)
}

pub const MISSPECIFY_TOL: f64 = 0.02;
const MISSPECIFY_MAX_MOVES: usize = 100_000;

/// Random adjacent-transposition hill climb from `true_order` toward the
/// target Kendall correlation.
pub fn misspecify_order(true_order: &NodeOrdering, target_tau: f64, seed: u64) -> Result<NodeOrdering> {
    let p = true_order.len();
    let fail = || QdagError::OrderingSearch { target: target_tau, tol: MISSPECIFY_TOL, p };
    if !(target_tau > -1.0 && target_tau < 1.0) {
        return Err(QdagError::Input(format!("target Kendall tau must lie in (-1, 1), got {target_tau}")));
    }
    if p < 2 {
        return Err(fail());
    }
    let pairs = (p * (p - 1) / 2) as i64;
    // attainable values are 1 - 2k/pairs; `goal` is the closest inversion count
    let goal = (((1.0 - target_tau) * pairs as f64) / 2.0).round().clamp(0.0, pairs as f64) as i64;
    let tau_of = |inv: i64| 1.0 - 2.0 * inv as f64 / pairs as f64;
    if (tau_of(goal) - target_tau).abs() > MISSPECIFY_TOL {
        return Err(fail());
    }

    let rank = true_order.positions();
    let mut order = true_order.as_slice().to_vec();
    let mut inversions: i64 = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MISSPECIFY_MAX_MOVES {
        if inversions == goal {
            break;
        }
        let k = rng.random_range(0..p - 1);
        let concordant = rank[order[k]] < rank[order[k + 1]];
        // swapping a concordant pair adds an inversion
        let delta = if concordant { 1 } else { -1 };
        if (inversions + delta - goal).abs() < (inversions - goal).abs() {
            order.swap(k, k + 1);
            inversions += delta;
        }
    }
    if inversions != goal {
        return Err(fail());
    }
    Ok(NodeOrdering(order))
}
