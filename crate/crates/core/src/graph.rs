//! Similarity graphs over observation sequences.
//!
//! The graph handed to the scan statistics is a k-MST: the union of `k`
//! successive minimum spanning trees of the complete Euclidean graph, each
//! computed after deleting the edges of the trees before it.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("need at least 2 observations, got {0}")]
    TooFewNodes(usize),
    #[error("observation {index} has dimension {found}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("k must be at least 1")]
    InvalidK,
}

/// Symmetric Euclidean distance matrix stored as its strict upper triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.upper[self.offset(i, j)],
            std::cmp::Ordering::Greater => self.upper[self.offset(j, i)],
        }
    }

    /// Build from an explicit upper-triangle listing `(0,1), (0,2), ..., (n-2,n-1)`.
    pub fn from_upper(n: usize, upper: Vec<f64>) -> Self {
        assert_eq!(upper.len(), n * n.saturating_sub(1) / 2, "upper triangle length");
        Self { n, upper }
    }

    /// Number of distinct off-diagonal entries, `n(n-1)/2`.
    pub fn pair_count(&self) -> usize {
        self.upper.len()
    }
}

/// Euclidean distances between every pair of rows.
pub fn pairwise_distances<R: AsRef<[f64]> + Sync>(rows: &[R]) -> Result<DistanceMatrix, GraphError> {
    let n = rows.len();
    if n < 2 {
        return Err(GraphError::TooFewNodes(n));
    }
    let dim = rows[0].as_ref().len();
    for (index, r) in rows.iter().enumerate() {
        if r.as_ref().len() != dim {
            return Err(GraphError::DimensionMismatch { index, expected: dim, found: r.as_ref().len() });
        }
    }
    let upper: Vec<f64> = (0..n - 1)
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = rows[i].as_ref();
            rows[i + 1..]
                .iter()
                .map(move |b| a.iter().zip(b.as_ref()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        })
        .collect();
    Ok(DistanceMatrix { n, upper })
}

/// Undirected simple graph given as an edge list with `i < j` in every edge.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityGraph {
    pub n: usize,
    pub k: usize,
    pub edges: Vec<(usize, usize)>,
    /// `edges[tree_bounds[t]..tree_bounds[t + 1]]` is tree `t`.
    tree_bounds: Vec<usize>,
    /// Set when a tree could not span the remaining graph; the last entry of
    /// [`SimilarityGraph::trees`] is then a spanning forest.
    pub truncated: bool,
}

impl SimilarityGraph {
    /// A graph from an arbitrary edge list, treated as a single "tree" group.
    pub fn from_edges(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let edges: Vec<_> = edges.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        let len = edges.len();
        Self { n, k: 1, edges, tree_bounds: vec![0, len], truncated: false }
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn trees(&self) -> impl Iterator<Item = &[(usize, usize)]> + '_ {
        self.tree_bounds.windows(2).map(move |w| &self.edges[w[0]..w[1]])
    }

    pub fn tree_count(&self) -> usize {
        self.tree_bounds.len() - 1
    }

    /// Apply a node relabeling `node -> perm[node]`.
    pub fn relabeled(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        let edges = self
            .edges
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (perm[a], perm[b]);
                (x.min(y), x.max(y))
            })
            .collect();
        Self { edges, ..self.clone() }
    }

    /// Neighbor lists in compressed form: neighbors of `v` are
    /// `targets[offsets[v]..offsets[v + 1]]`, sorted ascending.
    pub fn adjacency(&self) -> Adjacency {
        Adjacency::new(self.n, &self.edges)
    }

    /// Debug dump as `i,j` rows (0-based), one edge per line.
    pub fn write_edge_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j")?;
        for &(i, j) in &self.edges {
            writeln!(out, "{i},{j}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Adjacency {
    pub offsets: Vec<usize>,
    pub targets: Vec<usize>,
}

impl Adjacency {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for &(a, b) in edges {
            offsets[a + 1] += 1;
            offsets[b + 1] += 1;
        }
        for v in 0..n {
            offsets[v + 1] += offsets[v];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0usize; offsets[n]];
        for &(a, b) in edges {
            targets[fill[a]] = b;
            fill[a] += 1;
            targets[fill[b]] = a;
            fill[b] += 1;
        }
        for v in 0..n {
            targets[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        Self { offsets, targets }
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn root(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn unite(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.root(a), self.root(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Union of `k` successive minimum spanning trees.
///
/// Edges are ordered by `(weight, i, j)` so equal weights resolve
/// lexicographically and the output is reproducible. If the graph left after
/// removing earlier trees is disconnected, the minimum spanning forest of the
/// remainder is kept, extraction stops and `truncated` is set.
pub fn kmst(dm: &DistanceMatrix, k: usize) -> Result<SimilarityGraph, GraphError> {
    let n = dm.n();
    if k == 0 {
        return Err(GraphError::InvalidK);
    }
    if n < 2 {
        return Err(GraphError::TooFewNodes(n));
    }
    let mut order: Vec<(f64, u32, u32)> = Vec::with_capacity(dm.pair_count());
    for i in 0..n {
        for j in i + 1..n {
            order.push((dm.get(i, j), i as u32, j as u32));
        }
    }
    order.par_sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut used = vec![false; order.len()];
    let mut edges = Vec::with_capacity(k * (n - 1));
    let mut tree_bounds = vec![0];
    let mut truncated = false;
    for tree in 0..k {
        let mut uf = UnionFind::new(n);
        let mut taken = 0;
        for (slot, &(_, i, j)) in order.iter().enumerate() {
            if used[slot] {
                continue;
            }
            if uf.unite(i as usize, j as usize) {
                used[slot] = true;
                edges.push((i as usize, j as usize));
                taken += 1;
                if taken == n - 1 {
                    break;
                }
            }
        }
        tree_bounds.push(edges.len());
        if taken < n - 1 {
            log::warn!("k-MST truncated: tree {} of {k} spans only {taken} of {} edges", tree + 1, n - 1);
            truncated = true;
            break;
        }
    }
    Ok(SimilarityGraph { n, k, edges, tree_bounds, truncated })
}

/// Degree tallies used by the permutation-null moments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphStats {
    pub m: usize,
    pub degrees: Vec<usize>,
    /// Unordered pairs of distinct edges sharing a node: sum of `d(d-1)/2`.
    pub shared_pairs: u64,
}

pub fn graph_stats(g: &SimilarityGraph) -> GraphStats {
    let mut degrees = vec![0usize; g.n];
    for &(a, b) in &g.edges {
        degrees[a] += 1;
        degrees[b] += 1;
    }
    let shared_pairs = degrees.iter().map(|&d| (d as u64) * (d as u64).saturating_sub(1) / 2).sum();
    GraphStats { m: g.edges.len(), degrees, shared_pairs }
}
