//! Edge-count scan statistics for a single changed interval.
//!
//! Observations `0..n` are the nodes of a similarity graph. A candidate
//! interval `(t1, t2]` groups nodes `t1..t2` (0-based, half-open) against the
//! rest. For each candidate the graph edges split into
//!
//! - `r1`: both endpoints inside the interval,
//! - `r2`: both endpoints outside,
//! - `r0`: one endpoint on each side,
//!
//! and these counts are standardized by their exact moments under the
//! permutation null (a uniformly random choice of which `n1` nodes form the
//! group). Four statistics are available:
//!
//! | kind | value |
//! |------|-------|
//! | `o`  | `z0 = -(r0 - E r0) / sd(r0)` |
//! | `w`  | `zw`, standardized `((n0-1) r1 + (n1-1) r2) / (n-2)` |
//! | `g`  | `zw^2 + zd^2`, with `zd` the standardized `r1 - r2` |
//! | `m`  | `max(zw, abs(zd))` |
//!
//! [`scan`] maximizes one of them over all intervals with length in
//! `[l0, l1]`; [`brute_force_scan`] is the quadratic-times-edges reference it
//! is tested against.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{graph_stats, Adjacency, GraphStats, SimilarityGraph};
use crate::rng::stream_rng;

#[derive(Debug, Error, PartialEq)]
pub enum ScanError {
    #[error("interval length bounds must satisfy 2 <= l0 <= l1 <= n-2 (l0={l0}, l1={l1}, n={n})")]
    InvalidBounds { l0: usize, l1: usize, n: usize },
    #[error("group sizes must both be at least 2 (n={n}, n1={n1})")]
    DegenerateGroup { n: usize, n1: usize },
    #[error("statistic has zero variance for this group size")]
    ZeroVariance,
    #[error("no candidate interval has a non-degenerate null variance")]
    NoValidCandidate,
    #[error("graph has {graph} nodes but {given} observations were declared")]
    NodeCountMismatch { graph: usize, given: usize },
    #[error("window has {n} observations, detection needs at least {required}")]
    WindowTooShort { n: usize, required: usize },
    #[error("number of permutations must be at least 1")]
    NoPermutations,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatKind {
    #[serde(rename = "o")]
    Original,
    #[serde(rename = "w")]
    Weighted,
    #[serde(rename = "g")]
    Generalized,
    #[serde(rename = "m")]
    MaxType,
}

impl StatKind {
    pub const ALL: [StatKind; 4] = [StatKind::Original, StatKind::Weighted, StatKind::Generalized, StatKind::MaxType];

    pub fn code(self) -> &'static str {
        match self {
            StatKind::Original => "o",
            StatKind::Weighted => "w",
            StatKind::Generalized => "g",
            StatKind::MaxType => "m",
        }
    }
}

impl FromStr for StatKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "o" => Ok(StatKind::Original),
            "w" => Ok(StatKind::Weighted),
            "g" => Ok(StatKind::Generalized),
            "m" => Ok(StatKind::MaxType),
            other => Err(format!("unknown statistic {other:?} (expected o, w, g or m)")),
        }
    }
}

impl std::fmt::Display for StatKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeCounts {
    pub r0: u64,
    pub r1: u64,
    pub r2: u64,
}

impl EdgeCounts {
    pub fn total(&self) -> u64 {
        self.r0 + self.r1 + self.r2
    }
}

/// Classify every edge against the group `t1..t2`.
pub fn edge_counts(g: &SimilarityGraph, t1: usize, t2: usize) -> EdgeCounts {
    let inside = |v: usize| (t1..t2).contains(&v);
    let mut c = EdgeCounts { r0: 0, r1: 0, r2: 0 };
    for &(a, b) in &g.edges {
        match (inside(a), inside(b)) {
            (true, true) => c.r1 += 1,
            (false, false) => c.r2 += 1,
            _ => c.r0 += 1,
        }
    }
    c
}

/// Classify every edge against an arbitrary node set.
pub fn edge_counts_for_set(g: &SimilarityGraph, in_group: &[bool]) -> EdgeCounts {
    let mut c = EdgeCounts { r0: 0, r1: 0, r2: 0 };
    for &(a, b) in &g.edges {
        match (in_group[a], in_group[b]) {
            (true, true) => c.r1 += 1,
            (false, false) => c.r2 += 1,
            _ => c.r0 += 1,
        }
    }
    c
}

/// Exact first and second moments of `(r1, r2)` under the permutation null.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NullMoments {
    pub n: usize,
    pub n1: usize,
    pub m: usize,
    pub mean_r1: f64,
    pub mean_r2: f64,
    pub var_r1: f64,
    pub var_r2: f64,
    pub cov_r1_r2: f64,
}

impl NullMoments {
    pub fn n0(&self) -> usize {
        self.n - self.n1
    }

    pub fn mean_r0(&self) -> f64 {
        self.m as f64 - self.mean_r1 - self.mean_r2
    }

    pub fn var_r0(&self) -> f64 {
        self.var_r1 + self.var_r2 + 2.0 * self.cov_r1_r2
    }
}

/// Falling-factorial ratio `a(a-1)..(a-j+1) / b(b-1)..(b-j+1)`: the chance
/// that `j` fixed nodes all land in a group of size `a` drawn from `b`.
fn falling_ratio(a: usize, b: usize, j: usize) -> f64 {
    (0..j).map(|i| (a as f64 - i as f64) / (b as f64 - i as f64)).product()
}

/// Permutation-null moments for a group of `n1` out of `n` nodes.
///
/// Ordered edge pairs are split into identical pairs (`m`), pairs sharing one
/// node (`2 * shared_pairs`) and disjoint pairs (the rest); each class has a
/// closed-form probability of landing entirely inside a group.
pub fn null_moments(gs: &GraphStats, n: usize, n1: usize) -> Result<NullMoments, ScanError> {
    if n1 < 2 || n1 + 2 > n {
        return Err(ScanError::DegenerateGroup { n, n1 });
    }
    let n0 = n - n1;
    let m = gs.m as f64;
    let shared = 2.0 * gs.shared_pairs as f64;
    let disjoint = m * (m - 1.0) - shared;

    let second = |size: usize| {
        let p2 = falling_ratio(size, n, 2);
        let p3 = falling_ratio(size, n, 3);
        let p4 = falling_ratio(size, n, 4);
        let mean = m * p2;
        // Split as m(p2 - p4) + shared(p3 - p4) + m^2 (p4 - p2^2) to keep the
        // large terms from cancelling.
        let var = m * (p2 - p4) + shared * (p3 - p4) + m * m * (p4 - p2 * p2);
        (mean, var)
    };
    let (mean_r1, var_r1) = second(n1);
    let (mean_r2, var_r2) = second(n0);
    let mixed = (n1 as f64 * (n1 as f64 - 1.0) * n0 as f64 * (n0 as f64 - 1.0))
        / (n as f64 * (n as f64 - 1.0) * (n as f64 - 2.0) * (n as f64 - 3.0));
    let cov_r1_r2 = disjoint * mixed - mean_r1 * mean_r2;
    Ok(NullMoments { n, n1, m: gs.m, mean_r1, mean_r2, var_r1, var_r2, cov_r1_r2 })
}

/// All four standardized quantities for one candidate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StatValues {
    pub z0: f64,
    pub zw: f64,
    pub zd: f64,
    pub s: f64,
    pub mstat: f64,
}

impl StatValues {
    pub fn get(&self, kind: StatKind) -> f64 {
        match kind {
            StatKind::Original => self.z0,
            StatKind::Weighted => self.zw,
            StatKind::Generalized => self.s,
            StatKind::MaxType => self.mstat,
        }
    }
}

/// Centering and scaling constants derived from [`NullMoments`] for one group
/// size. A `None` scale marks a quantity whose null variance vanishes.
#[derive(Clone, Copy, Debug)]
pub struct Standardizer {
    w1: f64,
    w2: f64,
    mean_r0: f64,
    inv_sd_r0: Option<f64>,
    mean_rw: f64,
    inv_sd_rw: Option<f64>,
    mean_diff: f64,
    inv_sd_diff: Option<f64>,
}

impl Standardizer {
    pub fn new(mo: &NullMoments) -> Self {
        let n = mo.n as f64;
        let w1 = (mo.n0() as f64 - 1.0) / (n - 2.0);
        let w2 = (mo.n1 as f64 - 1.0) / (n - 2.0);
        // Relative floor: the moments carry rounding error of order eps * m^2.
        let floor = 1e-10 * (mo.m as f64 * mo.m as f64).max(1.0);
        let inv_sd = |v: f64| (v > floor).then(|| 1.0 / v.sqrt());
        let var_rw = w1 * w1 * mo.var_r1 + w2 * w2 * mo.var_r2 + 2.0 * w1 * w2 * mo.cov_r1_r2;
        let var_diff = mo.var_r1 + mo.var_r2 - 2.0 * mo.cov_r1_r2;
        Self {
            w1,
            w2,
            mean_r0: mo.mean_r0(),
            inv_sd_r0: inv_sd(mo.var_r0()),
            mean_rw: w1 * mo.mean_r1 + w2 * mo.mean_r2,
            inv_sd_rw: inv_sd(var_rw),
            mean_diff: mo.mean_r1 - mo.mean_r2,
            inv_sd_diff: inv_sd(var_diff),
        }
    }

    #[inline]
    pub fn z0(&self, r0: u64) -> Option<f64> {
        self.inv_sd_r0.map(|k| -(r0 as f64 - self.mean_r0) * k)
    }

    #[inline]
    pub fn zw(&self, r1: u64, r2: u64) -> Option<f64> {
        self.inv_sd_rw.map(|k| (self.w1 * r1 as f64 + self.w2 * r2 as f64 - self.mean_rw) * k)
    }

    #[inline]
    pub fn zd(&self, r1: u64, r2: u64) -> Option<f64> {
        self.inv_sd_diff.map(|k| (r1 as f64 - r2 as f64 - self.mean_diff) * k)
    }

    /// The chosen statistic, or `None` when it is undefined for this size.
    #[inline]
    pub fn value(&self, kind: StatKind, c: &EdgeCounts) -> Option<f64> {
        match kind {
            StatKind::Original => self.z0(c.r0),
            StatKind::Weighted => self.zw(c.r1, c.r2),
            StatKind::Generalized => {
                let (zw, zd) = (self.zw(c.r1, c.r2)?, self.zd(c.r1, c.r2)?);
                Some(zw * zw + zd * zd)
            }
            StatKind::MaxType => {
                let (zw, zd) = (self.zw(c.r1, c.r2)?, self.zd(c.r1, c.r2)?);
                Some(zw.max(zd.abs()))
            }
        }
    }
}

/// Standardize one candidate's counts.
pub fn statistics(c: &EdgeCounts, mo: &NullMoments) -> Result<StatValues, ScanError> {
    let st = Standardizer::new(mo);
    let z0 = st.z0(c.r0).ok_or(ScanError::ZeroVariance)?;
    let zw = st.zw(c.r1, c.r2).ok_or(ScanError::ZeroVariance)?;
    let zd = st.zd(c.r1, c.r2).ok_or(ScanError::ZeroVariance)?;
    Ok(StatValues { z0, zw, zd, s: zw * zw + zd * zd, mstat: zw.max(zd.abs()) })
}

/// The maximizing interval `(t1, t2]` of one scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub t1: usize,
    pub t2: usize,
    pub stat_kind: StatKind,
    pub value: f64,
    pub p_value: Option<f64>,
}

impl ScanResult {
    pub fn len(&self) -> usize {
        self.t2 - self.t1
    }

    pub fn is_empty(&self) -> bool {
        self.t2 == self.t1
    }
}

fn check_bounds(n: usize, l0: usize, l1: usize) -> Result<(), ScanError> {
    if l0 < 2 || l0 > l1 || l1 + 2 > n {
        return Err(ScanError::InvalidBounds { l0, l1, n });
    }
    Ok(())
}

/// Candidate ordering: larger value wins; ties go to the smaller `t1`, then
/// the shorter interval.
#[inline]
fn beats(value: f64, t1: usize, len: usize, best: &Option<(f64, usize, usize)>) -> bool {
    match *best {
        None => true,
        Some((bv, bt1, blen)) => value > bv || (value == bv && (t1 < bt1 || (t1 == bt1 && len < blen))),
    }
}

/// Scan state shared by the observed graph and its relabelings: the null
/// moments depend only on `n`, the edge count and the degree sequence's
/// shared-pair count, all invariant under node relabeling.
#[derive(Clone, Debug)]
pub struct Scanner {
    n: usize,
    l0: usize,
    l1: usize,
    kind: StatKind,
    m: u64,
    standardizers: Vec<Standardizer>,
}

impl Scanner {
    pub fn new(g: &SimilarityGraph, l0: usize, l1: usize, kind: StatKind) -> Result<Self, ScanError> {
        let n = g.n;
        check_bounds(n, l0, l1)?;
        let gs = graph_stats(g);
        let standardizers = (l0..=l1)
            .map(|n1| null_moments(&gs, n, n1).map(|mo| Standardizer::new(&mo)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { n, l0, l1, kind, m: gs.m as u64, standardizers })
    }

    pub fn kind(&self) -> StatKind {
        self.kind
    }

    /// Maximize the statistic over all admissible intervals of `g`, which must
    /// have the same node count and edge multiset shape as the graph this
    /// scanner was built from (the graph itself or a relabeling of it).
    ///
    /// Works through `t1` from the end: `row[b]` holds `r1` for the group
    /// `t1..b` and is updated from the previous `t1` with the new node's
    /// higher-indexed neighbors, so every candidate costs O(1) after an
    /// O(n + deg) update per `t1`.
    pub fn scan(&self, g: &SimilarityGraph) -> Result<ScanResult, ScanError> {
        if g.n != self.n {
            return Err(ScanError::NodeCountMismatch { graph: g.n, given: self.n });
        }
        let n = self.n;
        let adj = g.adjacency();
        let mut cum_deg = vec![0u64; n + 1];
        for v in 0..n {
            cum_deg[v + 1] = cum_deg[v] + adj.degree(v) as u64;
        }
        let mut row = vec![0u64; n + 1];
        let mut bumps = vec![0u64; n + 2];
        let mut best: Option<(f64, usize, usize)> = None;

        for t1 in (0..n).rev() {
            add_left_node(&adj, t1, n, &mut row, &mut bumps);
            if t1 + self.l0 > n {
                continue;
            }
            let hi = n.min(t1 + self.l1);
            for t2 in t1 + self.l0..=hi {
                let len = t2 - t1;
                let r1 = row[t2];
                let r0 = cum_deg[t2] - cum_deg[t1] - 2 * r1;
                let r2 = self.m - r1 - r0;
                let counts = EdgeCounts { r0, r1, r2 };
                debug_assert_eq!(counts.total(), self.m);
                if let Some(v) = self.standardizers[len - self.l0].value(self.kind, &counts) {
                    if beats(v, t1, len, &best) {
                        best = Some((v, t1, len));
                    }
                }
            }
        }
        let (value, t1, len) = best.ok_or(ScanError::NoValidCandidate)?;
        Ok(ScanResult { t1, t2: t1 + len, stat_kind: self.kind, value, p_value: None })
    }

    /// Permutation p-value `(1 + #{b : max_b >= observed}) / (B + 1)`, where
    /// `max_b` is the scan maximum after relabeling nodes with permutation
    /// `b`. Replicate `b` draws from its own RNG stream, so the result does not
    /// depend on thread scheduling.
    pub fn permutation_pvalue(
        &self,
        g: &SimilarityGraph,
        observed: f64,
        permutations: usize,
        seed: u64,
    ) -> Result<f64, ScanError> {
        if permutations == 0 {
            return Err(ScanError::NoPermutations);
        }
        let maxima = (0..permutations)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream_rng(seed, rep as u64 + 1);
                let mut perm: Vec<usize> = (0..self.n).collect();
                perm.shuffle(&mut rng);
                self.scan(&g.relabeled(&perm)).map(|r| r.value)
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let exceed = maxima.iter().filter(|&&v| v >= observed).count();
        Ok((1 + exceed) as f64 / (permutations + 1) as f64)
    }
}

/// Extend `row` (r1 of groups `t1+1..b`) to groups `t1..b`: edge `(t1, v)`
/// with `v > t1` lies inside every group `t1..b` with `b > v`.
#[inline]
fn add_left_node(adj: &Adjacency, t1: usize, n: usize, row: &mut [u64], bumps: &mut [u64]) {
    let nb = adj.neighbors(t1);
    let first = nb.partition_point(|&v| v <= t1);
    if first == nb.len() {
        return;
    }
    for &v in &nb[first..] {
        bumps[v + 1] += 1;
    }
    let mut acc = 0u64;
    for b in nb[first] + 1..=n {
        acc += bumps[b];
        bumps[b] = 0;
        row[b] += acc;
    }
}

/// Maximize `kind` over all `(t1, t2]` with `l0 <= t2 - t1 <= l1`.
pub fn scan(g: &SimilarityGraph, n: usize, l0: usize, l1: usize, kind: StatKind) -> Result<ScanResult, ScanError> {
    if g.n != n {
        return Err(ScanError::NodeCountMismatch { graph: g.n, given: n });
    }
    Scanner::new(g, l0, l1, kind)?.scan(g)
}

/// Reference enumerator: recounts every edge for every candidate and
/// recomputes the null moments from scratch. O(n^2 m); for tests.
pub fn brute_force_scan(
    g: &SimilarityGraph,
    n: usize,
    l0: usize,
    l1: usize,
    kind: StatKind,
) -> Result<ScanResult, ScanError> {
    if g.n != n {
        return Err(ScanError::NodeCountMismatch { graph: g.n, given: n });
    }
    check_bounds(n, l0, l1)?;
    let gs = graph_stats(g);
    let mut best: Option<(f64, usize, usize)> = None;
    for t1 in 0..n {
        for len in l0..=l1 {
            let t2 = t1 + len;
            if t2 > n {
                break;
            }
            let counts = edge_counts(g, t1, t2);
            let mo = null_moments(&gs, n, len)?;
            if let Some(v) = Standardizer::new(&mo).value(kind, &counts) {
                if beats(v, t1, len, &best) {
                    best = Some((v, t1, len));
                }
            }
        }
    }
    let (value, t1, len) = best.ok_or(ScanError::NoValidCandidate)?;
    Ok(ScanResult { t1, t2: t1 + len, stat_kind: kind, value, p_value: None })
}

/// Scan `g` and attach a permutation p-value from `permutations` relabelings.
pub fn permutation_pvalue(
    g: &SimilarityGraph,
    n: usize,
    l0: usize,
    l1: usize,
    kind: StatKind,
    permutations: usize,
    seed: u64,
) -> Result<f64, ScanError> {
    if g.n != n {
        return Err(ScanError::NodeCountMismatch { graph: g.n, given: n });
    }
    let scanner = Scanner::new(g, l0, l1, kind)?;
    let observed = scanner.scan(g)?.value;
    scanner.permutation_pvalue(g, observed, permutations, seed)
}
