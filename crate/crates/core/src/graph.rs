//! Sparsity-pattern analysis of appraisal networks.
//!
//! Every simple directed cycle `r` of the off-diagonal pattern carries a
//! conserved quantity, the cycle constant `c_r = prod_{(i,j) in r} a_ii / a_ij`.
//! This module enumerates the cycles, extracts a basis of the cycle space
//! (0/1 path vectors over the ordered off-diagonal edge list, independence
//! certified over the rationals) and evaluates cycle constants.

use std::collections::VecDeque;

use num::{BigRational, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{AsapError, Result};
use crate::types::{AppraisalMatrix, SparsityPattern};

/// Threshold for edge presence on integrated (noisy) states.
pub const INTEGRATED_ZERO_THRESHOLD: f64 = 1e-12;

/// Edge `(i, j)` is present iff `a_ij > zero_threshold`. Use `0.0` on exact
/// inputs and [`INTEGRATED_ZERO_THRESHOLD`] on integrated states.
pub fn pattern_of(a: &AppraisalMatrix, zero_threshold: f64) -> SparsityPattern {
    let n = a.n();
    let mut p = SparsityPattern::empty(n);
    for i in 0..n {
        for j in 0..n {
            if a.get(i, j) > zero_threshold {
                p.insert(i, j);
            }
        }
    }
    p
}

fn reaches_all(n: usize, next: impl Fn(usize) -> Vec<usize>) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for v in next(u) {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// True iff the off-diagonal digraph is a single strongly connected
/// component: node 0 reaches every node and is reached from every node.
pub fn is_strongly_connected(pattern: &SparsityPattern) -> bool {
    let n = pattern.n();
    if n <= 1 {
        return true;
    }
    reaches_all(n, |u| pattern.successors(u).collect())
        && reaches_all(n, |u| (0..n).filter(|&k| k != u && pattern.contains(k, u)).collect())
}

/// A simple directed cycle, stored without the repeated closing node and
/// rotated to start at its smallest node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cycle {
    nodes: Vec<usize>,
}

impl Cycle {
    /// Builds a cycle from its node sequence (closing node optional),
    /// checking it against `pattern`.
    pub fn new(mut nodes: Vec<usize>, pattern: &SparsityPattern) -> Result<Self> {
        if nodes.len() > 1 && nodes.first() == nodes.last() {
            nodes.pop();
        }
        if nodes.len() < 2 {
            return Err(AsapError::Domain("a cycle needs at least two distinct nodes".into()));
        }
        let mut seen = vec![false; pattern.n()];
        for &v in &nodes {
            if v >= pattern.n() || std::mem::replace(&mut seen[v], true) {
                return Err(AsapError::Domain(format!("invalid or repeated node {v} in cycle")));
            }
        }
        let c = Self::canonical(nodes);
        if let Some((i, j)) = c.edges().find(|&(i, j)| !pattern.contains(i, j)) {
            return Err(AsapError::Domain(format!("edge ({i}, {j}) is not in the pattern")));
        }
        Ok(c)
    }

    fn canonical(mut nodes: Vec<usize>) -> Self {
        let start = nodes.iter().enumerate().min_by_key(|(_, &v)| v).map(|(k, _)| k).unwrap_or(0);
        nodes.rotate_left(start);
        Self { nodes }
    }

    /// Node sequence `r_1, ..., r_k` (closing node omitted).
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Ordered edges `(r_1, r_2), ..., (r_k, r_1)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let k = self.nodes.len();
        (0..k).map(move |t| (self.nodes[t], self.nodes[(t + 1) % k]))
    }
}

/// Bounds on cycle enumeration, which grows super-exponentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationLimits {
    pub max_nodes: usize,
    pub max_cycles: usize,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self { max_nodes: 12, max_cycles: 1_000_000 }
    }
}

/// Enumerates every simple directed cycle (self-loops excluded) exactly once,
/// sorted by length then lexicographically.
pub fn enumerate_cycles(pattern: &SparsityPattern) -> Result<Vec<Cycle>> {
    enumerate_cycles_with(pattern, EnumerationLimits::default())
}

pub fn enumerate_cycles_with(pattern: &SparsityPattern, limits: EnumerationLimits) -> Result<Vec<Cycle>> {
    let n = pattern.n();
    if n > limits.max_nodes {
        return Err(AsapError::EnumerationLimit { limit: limits.max_nodes, what: "nodes" });
    }
    let adj: Vec<Vec<usize>> = (0..n).map(|i| pattern.successors(i).collect()).collect();
    let mut out = Vec::new();
    for start in 0..n {
        let mut search = Johnson {
            adj: &adj,
            start,
            blocked: vec![false; n],
            blocked_by: vec![Vec::new(); n],
            stack: Vec::new(),
            out: &mut out,
            limit: limits.max_cycles,
        };
        search.circuit(start)?;
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.nodes.cmp(&b.nodes)));
    Ok(out)
}

/// Johnson's elementary-circuit search rooted at `start`, restricted to nodes
/// `>= start` so each cycle is found once, from its smallest node.
struct Johnson<'a> {
    adj: &'a [Vec<usize>],
    start: usize,
    blocked: Vec<bool>,
    blocked_by: Vec<Vec<usize>>,
    stack: Vec<usize>,
    out: &'a mut Vec<Cycle>,
    limit: usize,
}

impl Johnson<'_> {
    fn circuit(&mut self, v: usize) -> Result<bool> {
        let mut found = false;
        self.stack.push(v);
        self.blocked[v] = true;
        for &w in &self.adj[v] {
            if w < self.start {
                continue;
            }
            if w == self.start {
                if self.out.len() >= self.limit {
                    return Err(AsapError::EnumerationLimit { limit: self.limit, what: "cycles" });
                }
                self.out.push(Cycle { nodes: self.stack.clone() });
                found = true;
            } else if !self.blocked[w] && self.circuit(w)? {
                found = true;
            }
        }
        if found {
            self.unblock(v);
        } else {
            for &w in &self.adj[v] {
                if w >= self.start && !self.blocked_by[w].contains(&v) {
                    self.blocked_by[w].push(v);
                }
            }
        }
        self.stack.pop();
        Ok(found)
    }

    fn unblock(&mut self, v: usize) {
        let mut pending = vec![v];
        while let Some(u) = pending.pop() {
            self.blocked[u] = false;
            pending.extend(std::mem::take(&mut self.blocked_by[u]).into_iter().filter(|&x| self.blocked[x]));
        }
    }
}

/// Incremental reduced row-echelon basis over the rationals.
#[derive(Debug, Clone, Default)]
struct RationalEchelon {
    rows: Vec<Vec<BigRational>>,
    pivots: Vec<usize>,
}

impl RationalEchelon {
    fn reduce(&self, v: &[u8]) -> Vec<BigRational> {
        let mut r: Vec<BigRational> = v.iter().map(|&x| BigRational::from_integer(x.into())).collect();
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            if !r[p].is_zero() {
                let f = r[p].clone();
                for (x, y) in r.iter_mut().zip(row) {
                    if !y.is_zero() {
                        *x -= &f * y;
                    }
                }
            }
        }
        r
    }

    /// Adds `v` if it is independent of the current rows.
    fn insert(&mut self, v: &[u8]) -> bool {
        let mut r = self.reduce(v);
        let Some(p) = r.iter().position(|x| !x.is_zero()) else {
            return false;
        };
        let lead = r[p].clone();
        for x in r.iter_mut() {
            *x /= &lead;
        }
        for row in self.rows.iter_mut() {
            if !row[p].is_zero() {
                let f = row[p].clone();
                for (x, y) in row.iter_mut().zip(&r) {
                    if !y.is_zero() {
                        *x -= &f * y;
                    }
                }
            }
        }
        self.rows.push(r);
        self.pivots.push(p);
        true
    }

    fn contains(&self, v: &[u8]) -> bool {
        self.reduce(v).iter().all(Zero::is_zero)
    }

    fn rank(&self) -> usize {
        self.rows.len()
    }
}

/// Exact rank of a set of 0/1 vectors over the rationals.
pub fn rational_rank(vectors: &[Vec<u8>]) -> usize {
    let mut e = RationalEchelon::default();
    for v in vectors {
        e.insert(v);
    }
    e.rank()
}

/// Exact rank of a square 0/1 block (row-major).
fn block_is_nonsingular(block: &[Vec<u8>]) -> bool {
    rational_rank(block) == block.len()
}

/// Basis of the cycle space of a strongly connected pattern.
///
/// `edges` orders the off-diagonal edges so that the `mu` pivot edges of the
/// basis come last; the bottom `mu x mu` block of the path-vector matrix is
/// then nonsingular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleBasis {
    edges: Vec<(usize, usize)>,
    cycles: Vec<Cycle>,
    columns: Vec<Vec<u8>>,
}

impl CycleBasis {
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn cycles(&self) -> &[Cycle] {
        &self.cycles
    }

    /// Number of off-diagonal edges `m`.
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Cycle-space dimension `mu`.
    pub fn mu(&self) -> usize {
        self.cycles.len()
    }

    /// Column `k` of the `m x mu` path-vector matrix.
    pub fn column(&self, k: usize) -> &[u8] {
        &self.columns[k]
    }

    /// Dense `m x mu` path-vector matrix.
    pub fn matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.m(), self.mu(), |e, k| f64::from(self.columns[k][e]))
    }

    /// 0/1 path vector of `cycle` in this basis' edge ordering.
    pub fn path_vector(&self, cycle: &Cycle) -> Vec<u8> {
        path_vector(&self.edges, cycle)
    }

    /// Exact check that `cycle` lies in the span of the basis.
    pub fn spans(&self, cycle: &Cycle) -> bool {
        let mut e = RationalEchelon::default();
        for c in &self.columns {
            e.insert(c);
        }
        e.contains(&self.path_vector(cycle))
    }

    /// Exact rank of the path-vector matrix.
    pub fn rank(&self) -> usize {
        rational_rank(&self.columns)
    }

    /// True when the trailing `mu x mu` block (pivot edges) is nonsingular.
    pub fn pivot_block_is_nonsingular(&self) -> bool {
        let (m, mu) = (self.m(), self.mu());
        let block: Vec<Vec<u8>> = (m - mu..m).map(|e| self.columns.iter().map(|c| c[e]).collect()).collect();
        block_is_nonsingular(&block)
    }
}

fn path_vector(edges: &[(usize, usize)], cycle: &Cycle) -> Vec<u8> {
    let mut v = vec![0u8; edges.len()];
    for e in cycle.edges() {
        if let Some(k) = edges.iter().position(|&x| x == e) {
            v[k] = 1;
        }
    }
    v
}

/// Greedy cycle basis: cycles are scanned shortest first (ties broken
/// lexicographically) and kept when they raise the exact rank.
pub fn cycle_basis(pattern: &SparsityPattern) -> Result<CycleBasis> {
    cycle_basis_with(pattern, EnumerationLimits::default())
}

pub fn cycle_basis_with(pattern: &SparsityPattern, limits: EnumerationLimits) -> Result<CycleBasis> {
    if !pattern.has_full_diagonal() {
        return Err(AsapError::Precondition("pattern must have a positive diagonal".into()));
    }
    if !is_strongly_connected(pattern) {
        return Err(AsapError::Precondition("pattern is not strongly connected".into()));
    }
    let edges = pattern.off_diagonal_edges();
    let mu = edges.len() + 1 - pattern.n();
    let all = enumerate_cycles_with(pattern, limits)?;
    let mut echelon = RationalEchelon::default();
    let mut chosen = Vec::with_capacity(mu);
    for c in all {
        if echelon.insert(&path_vector(&edges, &c)) {
            chosen.push(c);
            if chosen.len() == mu {
                break;
            }
        }
    }
    if chosen.len() != mu {
        return Err(AsapError::Numeric(format!("found {} independent cycles, expected {mu}", chosen.len())));
    }
    // Non-pivot edges first, pivot edges last, each group in row-major order.
    let mut pivot = vec![false; edges.len()];
    for &p in &echelon.pivots {
        pivot[p] = true;
    }
    let ordered: Vec<(usize, usize)> = edges
        .iter()
        .zip(&pivot)
        .filter(|(_, &p)| !p)
        .chain(edges.iter().zip(&pivot).filter(|(_, &p)| p))
        .map(|(&e, _)| e)
        .collect();
    let columns = chosen.iter().map(|c| path_vector(&ordered, c)).collect();
    Ok(CycleBasis { edges: ordered, cycles: chosen, columns })
}

/// Cycle constant `prod_{(i,j) in r} a_ii / a_ij`.
pub fn cycle_constant(a: &AppraisalMatrix, cycle: &Cycle) -> Result<f64> {
    let mut c = 1.0;
    for (i, j) in cycle.edges() {
        let (aii, aij) = (a.get(i, i), a.get(i, j));
        if !(aii > 0.0 && aij > 0.0) {
            return Err(AsapError::Domain(format!(
                "cycle edge ({i}, {j}) needs positive a_ii and a_ij, got {aii} and {aij}"
            )));
        }
        c *= aii / aij;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn ring(n: usize) -> SparsityPattern {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        SparsityPattern::from_edges(n, &edges)
    }

    fn complete(n: usize) -> SparsityPattern {
        let edges: Vec<_> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).collect();
        SparsityPattern::from_edges(n, &edges)
    }

    /// Brute force: every subset of size k >= 2 and every circular order
    /// starting at its minimum, kept when all edges exist.
    fn brute_force_cycles(p: &SparsityPattern) -> usize {
        fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
            if k == items.len() {
                out.push(items.clone());
                return;
            }
            for i in k..items.len() {
                items.swap(k, i);
                permutations(items, k + 1, out);
                items.swap(k, i);
            }
        }
        let n = p.n();
        let mut count = 0;
        for mask in 0u32..(1 << n) {
            let nodes: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            if nodes.len() < 2 {
                continue;
            }
            let mut rest = nodes[1..].to_vec();
            let mut perms = Vec::new();
            permutations(&mut rest, 0, &mut perms);
            for perm in perms {
                let seq: Vec<usize> = std::iter::once(nodes[0]).chain(perm).collect();
                let k = seq.len();
                if (0..k).all(|t| p.contains(seq[t], seq[(t + 1) % k])) {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn pattern_thresholds() {
        let a = AppraisalMatrix::new(DMatrix::identity(3, 3), 1e-9).unwrap();
        assert_eq!(pattern_of(&a, 0.0).m(), 0);
        let full = AppraisalMatrix::new(DMatrix::from_element(3, 3, 1.0 / 3.0), 1e-9).unwrap();
        assert_eq!(pattern_of(&full, 0.0).m(), 6);
        let tiny = AppraisalMatrix::from_matrix_unchecked(DMatrix::from_row_slice(2, 2, &[1.0 - 1e-15, 1e-15, 0.5, 0.5]));
        assert!(!pattern_of(&tiny, INTEGRATED_ZERO_THRESHOLD).contains(0, 1));
        assert!(pattern_of(&tiny, 0.0).contains(0, 1));
    }

    #[test]
    fn connectivity() {
        assert!(is_strongly_connected(&ring(5)));
        // Blocks {0,1} and {2,3}, each bidirectional, joined by 1 -> 2 only.
        let p = SparsityPattern::from_edges(4, &[(0, 1), (1, 0), (2, 3), (3, 2), (1, 2)]);
        assert!(!is_strongly_connected(&p));
    }

    #[test]
    fn small_cycle_counts() {
        let two = complete(2);
        let cycles = enumerate_cycles(&two).unwrap();
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].nodes(), &[0, 1]);
        let r = enumerate_cycles(&ring(6)).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].len(), 6);
    }

    #[test]
    fn complete_four_has_twenty_cycles() {
        let p = complete(4);
        assert_eq!(brute_force_cycles(&p), 20);
        assert_eq!(enumerate_cycles(&p).unwrap().len(), 20);
    }

    #[test]
    fn enumeration_limits() {
        let limits = EnumerationLimits { max_nodes: 12, max_cycles: 10 };
        assert!(matches!(
            enumerate_cycles_with(&complete(4), limits),
            Err(AsapError::EnumerationLimit { what: "cycles", .. })
        ));
        assert!(matches!(enumerate_cycles(&ring(13)), Err(AsapError::EnumerationLimit { what: "nodes", .. })));
    }

    #[test]
    fn ring_basis_is_all_ones() {
        let b = cycle_basis(&ring(5)).unwrap();
        assert_eq!(b.mu(), 1);
        assert!(b.column(0).iter().all(|&x| x == 1));
        assert_eq!(cycle_basis(&complete(2)).unwrap().mu(), 1);
    }

    #[test]
    fn complete_three_basis_matches_rank_of_all_cycles() {
        let p = complete(3);
        let b = cycle_basis(&p).unwrap();
        assert_eq!(b.m(), 6);
        assert_eq!(b.mu(), 4);
        let all: Vec<Vec<u8>> = enumerate_cycles(&p).unwrap().iter().map(|c| b.path_vector(c)).collect();
        assert_eq!(rational_rank(&all), 4);
        assert_eq!(b.rank(), 4);
        assert!(b.pivot_block_is_nonsingular());
    }

    #[test]
    fn basis_requires_strong_connectivity() {
        let p = SparsityPattern::from_edges(3, &[(0, 1), (1, 2)]);
        assert!(matches!(cycle_basis(&p), Err(AsapError::Precondition(_))));
    }

    #[test]
    fn two_node_cycle_constant() {
        let a = AppraisalMatrix::from_rows(&[vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let c = Cycle::new(vec![0, 1, 0], &pattern_of(&a, 0.0)).unwrap();
        let direct = (0.6 / 0.4) * (0.7 / 0.3);
        assert!((cycle_constant(&a, &c).unwrap() - direct).abs() < 1e-15);
        assert!((direct - 3.5).abs() < 1e-14);
    }

    #[test]
    fn rank_one_has_unit_constants() {
        let ad = [0.2, 0.3, 0.5];
        let a = AppraisalMatrix::new(DMatrix::from_fn(3, 3, |_, j| ad[j]), 1e-12).unwrap();
        for c in enumerate_cycles(&pattern_of(&a, 0.0)).unwrap() {
            assert!((cycle_constant(&a, &c).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_edge_is_a_domain_error() {
        let a = AppraisalMatrix::from_rows(&[vec![1.0, 0.0], vec![0.3, 0.7]]).unwrap();
        let c = Cycle { nodes: vec![0, 1] };
        assert!(matches!(cycle_constant(&a, &c), Err(AsapError::Domain(_))));
    }

    #[test]
    fn cycle_new_canonicalizes_and_checks_edges() {
        let p = ring(4);
        let c = Cycle::new(vec![2, 3, 0, 1, 2], &p).unwrap();
        assert_eq!(c.nodes(), &[0, 1, 2, 3]);
        assert!(Cycle::new(vec![0, 2, 0], &p).is_err());
    }
}
