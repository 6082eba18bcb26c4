//! Row-stochastic interaction matrices and the structural graph queries the
//! convergence certificates rely on: reachability into a deficiency set and
//! per-node aperiodicity.
//!
//! The directed graph of a matrix is its support: there is an edge `v -> w`
//! exactly when the entry at `(v, w)` is positive.

use std::collections::BTreeSet;
use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Row sums may deviate from one by at most this much.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A square nonnegative matrix whose rows each sum to one.
///
/// Constructed only through normalizing or generating constructors, so the
/// invariant holds for every value of this type.
#[derive(Debug, Clone, PartialEq)]
pub struct RowStochasticMatrix {
    m: DMatrix<f64>,
}

impl RowStochasticMatrix {
    /// Normalizes a raw square nonnegative matrix row-by-row.
    ///
    /// Each row of the result is the input row divided by its sum; a row
    /// already summing to one within [`ROW_SUM_TOL`] is kept bit-for-bit,
    /// which makes the constructor idempotent and lets serialized matrices
    /// round-trip exactly. Fails on non-square input, any negative entry, or
    /// a row whose sum is zero.
    pub fn from_raw(raw: &DMatrix<f64>) -> Result<Self> {
        if raw.nrows() != raw.ncols() {
            return Err(Error::NonSquare {
                rows: raw.nrows(),
                cols: raw.ncols(),
            });
        }
        if raw.nrows() == 0 {
            return Err(Error::Domain("matrix must have at least one node".into()));
        }
        for v in 0..raw.nrows() {
            for w in 0..raw.ncols() {
                let x = raw[(v, w)];
                if !(x >= 0.0) {
                    return Err(Error::NegativeEntry {
                        row: v,
                        col: w,
                        value: x,
                    });
                }
            }
        }
        let mut m = raw.clone();
        for v in 0..m.nrows() {
            let s: f64 = m.row(v).iter().sum();
            if s <= 0.0 {
                return Err(Error::ZeroRow { row: v });
            }
            if (s - 1.0).abs() > ROW_SUM_TOL {
                for w in 0..m.ncols() {
                    m[(v, w)] /= s;
                }
            }
        }
        Ok(Self { m })
    }

    /// Builds from nested rows; every row must have length `rows.len()`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::NonSquare {
                    rows: n,
                    cols: r.len(),
                });
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_raw(&DMatrix::from_row_slice(n, n, &flat))
    }

    /// The identity matrix: every node listens only to itself.
    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("matrix must have at least one node".into()));
        }
        Ok(Self {
            m: DMatrix::identity(n, n),
        })
    }

    /// Samples a directed Erdős–Rényi graph and normalizes it.
    ///
    /// Each off-diagonal edge is present independently with probability `p`
    /// under a generator seeded with `seed`; edges are drawn in row-major
    /// order, so the result is a pure function of `(n, p, seed)`. A node that
    /// would end up with no outgoing edge receives a self-loop. Present edges
    /// in a row share its weight uniformly.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("matrix must have at least one node".into()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!(
                "edge probability must lie in [0, 1], got {p}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut raw = DMatrix::zeros(n, n);
        for v in 0..n {
            for w in 0..n {
                if v != w && rng.random::<f64>() < p {
                    raw[(v, w)] = 1.0;
                }
            }
            if raw.row(v).iter().all(|&x| x == 0.0) {
                raw[(v, v)] = 1.0;
            }
        }
        Self::from_raw(&raw)
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, v: usize, w: usize) -> f64 {
        self.m[(v, w)]
    }

    /// Borrow the underlying dense matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Successors of `v` in the support graph.
    pub fn out_neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.n()).filter(|&w| self.m[(v, w)] > 0.0).collect()
    }

    /// Predecessors of `v` in the support graph.
    pub fn in_neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.n()).filter(|&u| self.m[(u, v)] > 0.0).collect()
    }
}

/// An ordered set of node indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeSet {
    members: BTreeSet<usize>,
}

impl NodeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, v: usize) {
        self.members.insert(v);
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.contains(&v)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// True when the set is exactly `{0, .., n-1}`.
    pub fn is_all(&self, n: usize) -> bool {
        self.members.len() == n && self.members.iter().all(|&v| v < n)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        Self {
            members: iter.into_iter().collect(),
        }
    }
}

/// All nodes with a directed path into `targets` (targets included).
///
/// Walks the reversed support graph breadth-first from the target set.
pub fn reaching_set(p: &RowStochasticMatrix, targets: &NodeSet) -> Result<NodeSet> {
    let n = p.n();
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    for v in targets.iter() {
        if v >= n {
            return Err(Error::NodeOutOfRange { node: v, n });
        }
    }
    let mut reached = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for v in targets.iter() {
        reached[v] = true;
        queue.push_back(v);
    }
    while let Some(w) = queue.pop_front() {
        for u in p.in_neighbors(w) {
            if !reached[u] {
                reached[u] = true;
                queue.push_back(u);
            }
        }
    }
    Ok((0..n).filter(|&v| reached[v]).collect())
}

/// Whether the cycles through `v` have coprime lengths.
///
/// Restricts the support graph to the strongly connected component of `v`,
/// labels it breadth-first from `v`, and accumulates the gcd of
/// `level(u) + 1 - level(w)` over intra-component edges `u -> w`. The gcd is
/// the component's period; the node is aperiodic exactly when it is one. A
/// node on no cycle has no intra-component edge and reports `false`.
pub fn is_aperiodic_node(p: &RowStochasticMatrix, v: usize) -> Result<bool> {
    let n = p.n();
    if v >= n {
        return Err(Error::NodeOutOfRange { node: v, n });
    }
    let forward = bfs_reachable(n, v, |u| p.out_neighbors(u));
    let backward = bfs_reachable(n, v, |u| p.in_neighbors(u));
    let in_scc: Vec<bool> = (0..n).map(|u| forward[u] && backward[u]).collect();

    // BFS levels from v inside the component; the component is strongly
    // connected, so every member gets a level.
    let mut level = vec![usize::MAX; n];
    level[v] = 0;
    let mut queue = VecDeque::from([v]);
    while let Some(u) = queue.pop_front() {
        for w in p.out_neighbors(u) {
            if in_scc[w] && level[w] == usize::MAX {
                level[w] = level[u] + 1;
                queue.push_back(w);
            }
        }
    }

    let mut g: u64 = 0;
    for u in 0..n {
        if !in_scc[u] {
            continue;
        }
        for w in p.out_neighbors(u) {
            if in_scc[w] {
                let d = (level[u] as u64 + 1).abs_diff(level[w] as u64);
                g = gcd(g, d);
            }
        }
    }
    // g == 0 means every intra-component edge was a BFS tree edge, which
    // cannot happen on a cycle; the node then lies on no cycle at all.
    Ok(g == 1)
}

fn bfs_reachable(n: usize, start: usize, neighbors: impl Fn(usize) -> Vec<usize>) -> Vec<bool> {
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for w in neighbors(u) {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
