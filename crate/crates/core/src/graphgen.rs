//! Regular host graphs and seeded edge percolation.
//!
//! Host edges are indexed lexicographically by `(min endpoint, max endpoint)`.
//! Percolation decides each edge by hashing `(seed, edge index)`, so the
//! retained set does not depend on evaluation order or thread count, and a
//! single edge can be decided lazily without percolating the whole host
//! (see [`LocalHost`]).

use std::collections::HashSet;
use std::fmt;
use std::hash::Hash;
use std::io::BufRead;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::keyed;

pub const MAX_HYPERCUBE_DIM: usize = 30;
pub const RANDOM_REGULAR_RESTARTS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Hypercube,
    Complete,
    RandomRegular,
    Torus,
    CliqueUnion,
    Custom,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Hypercube => "hypercube",
            Family::Complete => "complete",
            Family::RandomRegular => "random-regular",
            Family::Torus => "torus",
            Family::CliqueUnion => "clique-union",
            Family::Custom => "custom",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hypercube" => Family::Hypercube,
            "complete" => Family::Complete,
            "random-regular" => Family::RandomRegular,
            "torus" => Family::Torus,
            "clique-union" => Family::CliqueUnion,
            "custom" => Family::Custom,
            other => return Err(Error::Domain(format!("unknown host family `{other}`"))),
        })
    }
}

#[derive(Clone, Debug)]
enum Adjacency {
    /// CSR adjacency plus, per vertex, the index of its first upper edge.
    Explicit { graph: Graph, upper_start: Vec<u64> },
    Complete,
    Hypercube,
}

/// Immutable host graph. `d` is the common degree; for irregular custom
/// hosts it is the maximum degree and [`HostGraph::is_regular`] is false.
#[derive(Clone, Debug)]
pub struct HostGraph {
    family: Family,
    n: usize,
    d: usize,
    regular: bool,
    adjacency: Adjacency,
}

impl HostGraph {
    fn explicit(family: Family, graph: Graph, require_regular: bool) -> Result<Self> {
        let n = graph.n();
        let d = graph.max_degree();
        let min = (0..n as u32).map(|v| graph.degree(v)).min().unwrap_or(0);
        let regular = min == d;
        if require_regular && !regular {
            return Err(Error::InvalidGraph(format!(
                "host is not regular: degrees range over [{min}, {d}]"
            )));
        }
        let mut upper_start = Vec::with_capacity(n + 1);
        let mut acc = 0u64;
        for u in 0..n as u32 {
            upper_start.push(acc);
            acc += graph.neighbors(u).iter().filter(|&&v| v > u).count() as u64;
        }
        upper_start.push(acc);
        Ok(HostGraph {
            family,
            n,
            d,
            regular,
            adjacency: Adjacency::Explicit { graph, upper_start },
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_regular(&self) -> bool {
        self.regular
    }

    pub fn num_edges(&self) -> u64 {
        match &self.adjacency {
            Adjacency::Explicit { upper_start, .. } => *upper_start.last().unwrap_or(&0),
            Adjacency::Complete => (self.n as u64) * (self.n as u64 - 1) / 2,
            Adjacency::Hypercube => (self.n as u64) * (self.d as u64) / 2,
        }
    }

    pub fn degree(&self, u: u32) -> usize {
        match &self.adjacency {
            Adjacency::Explicit { graph, .. } => graph.degree(u),
            _ => self.d,
        }
    }

    /// Neighbors of `u` in ascending order.
    pub fn neighbors(&self, u: u32) -> Neighbors<'_> {
        match &self.adjacency {
            Adjacency::Explicit { graph, .. } => Neighbors::Slice(graph.neighbors(u).iter()),
            Adjacency::Complete => Neighbors::Complete {
                next: 0,
                skip: u,
                n: self.n as u32,
            },
            Adjacency::Hypercube => {
                let full = if self.d == 32 { u32::MAX } else { (1u32 << self.d) - 1 };
                Neighbors::Hypercube {
                    u,
                    lower: u,
                    upper: !u & full,
                }
            }
        }
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        if u as usize >= self.n || v as usize >= self.n || u == v {
            return false;
        }
        match &self.adjacency {
            Adjacency::Explicit { graph, .. } => graph.has_edge(u, v),
            Adjacency::Complete => true,
            Adjacency::Hypercube => (u ^ v).count_ones() == 1,
        }
    }

    /// Lexicographic index of edge `{u, v}`, or `None` if it is not an edge.
    pub fn edge_index(&self, u: u32, v: u32) -> Option<u64> {
        if !self.has_edge(u, v) {
            return None;
        }
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        Some(match &self.adjacency {
            Adjacency::Explicit { graph, upper_start } => {
                let nb = graph.neighbors(a);
                let first_upper = nb.partition_point(|&w| w <= a);
                let pos = nb.partition_point(|&w| w < b);
                upper_start[a as usize] + (pos - first_upper) as u64
            }
            Adjacency::Complete => complete_row_start(self.n as u64, a as u64) + (b - a - 1) as u64,
            Adjacency::Hypercube => {
                let bit = (a ^ b).trailing_zeros();
                let below = a & ((1u32 << bit) - 1);
                hypercube_upper_start(a as u64, self.d as u64) + (bit - below.count_ones()) as u64
            }
        })
    }

    /// Materialize the host as a CSR graph.
    pub fn to_graph(&self) -> Result<Graph> {
        if let Adjacency::Explicit { graph, .. } = &self.adjacency {
            return Ok(graph.clone());
        }
        let m = self.num_edges();
        if m > 200_000_000 {
            return Err(Error::Size(format!("refusing to materialize {m} host edges")));
        }
        let mut edges = Vec::with_capacity(m as usize);
        for u in 0..self.n as u32 {
            edges.extend(self.neighbors(u).filter(|&v| v > u).map(|v| (u, v)));
        }
        Ok(Graph::build(self.n, &edges))
    }
}

/// Index of the first edge `(u, ·)` of `K_n`.
fn complete_row_start(n: u64, u: u64) -> u64 {
    u * (n - 1) - u * u.saturating_sub(1) / 2
}

/// Index of the first upper edge of `u` in `Q^d`: `u*d` minus the number of
/// one bits over all labels below `u`.
fn hypercube_upper_start(u: u64, d: u64) -> u64 {
    let mut ones = 0u64;
    for i in 0..d {
        let period = 1u64 << (i + 1);
        let half = 1u64 << i;
        ones += (u / period) * half + (u % period).saturating_sub(half);
    }
    u * d - ones
}

/// Ascending neighbor iterator over any host adjacency.
#[derive(Clone, Debug)]
pub enum Neighbors<'a> {
    Slice(std::slice::Iter<'a, u32>),
    Complete { next: u32, skip: u32, n: u32 },
    Hypercube { u: u32, lower: u32, upper: u32 },
}

impl Iterator for Neighbors<'_> {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        match self {
            Neighbors::Slice(it) => it.next().copied(),
            Neighbors::Complete { next, skip, n } => {
                if *next == *skip {
                    *next += 1;
                }
                if *next >= *n {
                    return None;
                }
                let v = *next;
                *next += 1;
                Some(v)
            }
            Neighbors::Hypercube { u, lower, upper } => {
                if *lower != 0 {
                    // highest set bit first gives the smallest lower neighbor
                    let bit = 31 - lower.leading_zeros();
                    *lower &= !(1u32 << bit);
                    Some(*u ^ (1u32 << bit))
                } else if *upper != 0 {
                    let bit = upper.trailing_zeros();
                    *upper &= *upper - 1;
                    Some(*u ^ (1u32 << bit))
                } else {
                    None
                }
            }
        }
    }
}

/// `Q^d`: vertex labels `0..2^d`, adjacent iff they differ in one bit.
pub fn make_hypercube(d: usize) -> Result<HostGraph> {
    if !(1..=MAX_HYPERCUBE_DIM).contains(&d) {
        return Err(Error::Size(format!(
            "hypercube dimension {d} outside [1, {MAX_HYPERCUBE_DIM}]"
        )));
    }
    Ok(HostGraph {
        family: Family::Hypercube,
        n: 1usize << d,
        d,
        regular: true,
        adjacency: Adjacency::Hypercube,
    })
}

/// `K_n`, stored implicitly.
pub fn make_complete(n: usize) -> Result<HostGraph> {
    if n < 2 {
        return Err(Error::Size(format!("complete graph needs n >= 2, got {n}")));
    }
    if n > u32::MAX as usize {
        return Err(Error::Size(format!("complete graph order {n} too large")));
    }
    Ok(HostGraph {
        family: Family::Complete,
        n,
        d: n - 1,
        regular: true,
        adjacency: Adjacency::Complete,
    })
}

/// `k` disjoint copies of `K_{d+1}`.
pub fn make_clique_union(k: usize, d: usize) -> Result<HostGraph> {
    if k == 0 || d == 0 {
        return Err(Error::Size(format!("clique union needs k, d >= 1, got k={k}, d={d}")));
    }
    let s = d + 1;
    let total = k
        .checked_mul(s)
        .and_then(|n| n.checked_mul(d))
        .filter(|&e| e <= 400_000_000)
        .ok_or_else(|| Error::Size(format!("clique union k={k}, d={d} too large")))?;
    let mut edges = Vec::with_capacity(total / 2);
    for block in 0..k {
        let base = (block * s) as u32;
        for i in 0..s as u32 {
            for j in i + 1..s as u32 {
                edges.push((base + i, base + j));
            }
        }
    }
    HostGraph::explicit(Family::CliqueUnion, Graph::build(k * s, &edges), true)
}

/// Discrete torus `(Z_side)^dim`, degree `2*dim`.
pub fn make_torus(side: usize, dim: usize) -> Result<HostGraph> {
    if side < 3 || dim == 0 {
        return Err(Error::Size(format!("torus needs side >= 3 and dim >= 1, got {side}, {dim}")));
    }
    let n = (0..dim)
        .try_fold(1usize, |acc, _| acc.checked_mul(side))
        .filter(|&n| n.saturating_mul(dim) <= 200_000_000)
        .ok_or_else(|| Error::Size(format!("torus {side}^{dim} too large")))?;
    let mut edges = Vec::with_capacity(n * dim);
    for v in 0..n {
        let mut stride = 1;
        for _ in 0..dim {
            let coord = (v / stride) % side;
            let w = if coord + 1 == side { v - coord * stride } else { v + stride };
            edges.push((v.min(w) as u32, v.max(w) as u32));
            stride *= side;
        }
    }
    HostGraph::explicit(Family::Torus, Graph::build(n, &edges), true)
}

/// Simple `d`-regular graph on `n` vertices by configuration-model pairing.
///
/// Points are paired uniformly at random; a pair that would create a loop or a
/// repeated edge is redrawn. When no admissible pair remains the pairing is
/// restarted, at most [`RANDOM_REGULAR_RESTARTS`] times.
pub fn make_random_regular(n: usize, d: usize, seed: u64) -> Result<HostGraph> {
    if (n * d) % 2 == 1 {
        return Err(Error::Parity { n, d });
    }
    if d >= n {
        return Err(Error::Domain(format!("random regular graph needs d < n, got d={d}, n={n}")));
    }
    if n.saturating_mul(d) > 400_000_000 || n > u32::MAX as usize {
        return Err(Error::Size(format!("random regular n={n}, d={d} too large")));
    }
    let mut rng = keyed::stream(seed, 0x7267_7261_7068);
    for _ in 0..RANDOM_REGULAR_RESTARTS {
        if let Some(edges) = try_pairing(n, d, &mut rng) {
            return HostGraph::explicit(Family::RandomRegular, Graph::build(n, &edges), true);
        }
    }
    Err(Error::Generation(format!(
        "no simple pairing for n={n}, d={d} after {RANDOM_REGULAR_RESTARTS} restarts"
    )))
}

fn edge_key(u: u32, v: u32) -> u64 {
    let (a, b) = if u < v { (u, v) } else { (v, u) };
    ((a as u64) << 32) | b as u64
}

fn try_pairing<R: Rng>(n: usize, d: usize, rng: &mut R) -> Option<Vec<(u32, u32)>> {
    const RANDOM_TRIES: usize = 64;
    const EXHAUSTIVE_BELOW: usize = 4096;

    let mut points: Vec<u32> = (0..n as u32).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    points.shuffle(rng);
    let mut seen: HashSet<u64> = HashSet::with_capacity(n * d / 2);
    let mut edges = Vec::with_capacity(n * d / 2);

    while !points.is_empty() {
        let len = points.len();
        let mut chosen = None;
        for _ in 0..RANDOM_TRIES {
            let i = rng.random_range(0..len);
            let j = rng.random_range(0..len);
            if i != j && points[i] != points[j] && !seen.contains(&edge_key(points[i], points[j])) {
                chosen = Some((i, j));
                break;
            }
        }
        if chosen.is_none() {
            if len > EXHAUSTIVE_BELOW {
                return None;
            }
            let mut admissible = Vec::new();
            for i in 0..len {
                for j in i + 1..len {
                    if points[i] != points[j] && !seen.contains(&edge_key(points[i], points[j])) {
                        admissible.push((i, j));
                    }
                }
            }
            if admissible.is_empty() {
                return None;
            }
            chosen = Some(admissible[rng.random_range(0..admissible.len())]);
        }
        let (i, j) = chosen.unwrap();
        let (u, v) = (points[i], points[j]);
        seen.insert(edge_key(u, v));
        edges.push((u.min(v), u.max(v)));
        let (hi, lo) = if i > j { (i, j) } else { (j, i) };
        points.swap_remove(hi);
        points.swap_remove(lo);
    }
    Some(edges)
}

/// Load a host from an edge list: one `u v` pair per line, 0-indexed,
/// `#` starts a comment. The vertex count is one more than the largest
/// label. Irregular hosts are rejected unless `allow_irregular` is set.
pub fn load_edge_list<R: BufRead>(reader: R, allow_irregular: bool) -> Result<HostGraph> {
    let mut edges = Vec::new();
    let mut n = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut parts = body.split_whitespace();
        let mut field = |name: &str| -> Result<u32> {
            parts
                .next()
                .ok_or_else(|| Error::Parse { line: lineno + 1, msg: format!("missing {name}") })?
                .parse::<u32>()
                .map_err(|e| Error::Parse { line: lineno + 1, msg: format!("bad {name}: {e}") })
        };
        let u = field("u")?;
        let v = field("v")?;
        if parts.next().is_some() {
            return Err(Error::Parse { line: lineno + 1, msg: "expected exactly two fields".into() });
        }
        n = n.max(u.max(v) as usize + 1);
        edges.push((u, v));
    }
    let graph = Graph::from_edges(n, &edges)?;
    HostGraph::explicit(Family::Custom, graph, !allow_irregular)
}

/// Edge subset of a host, retained independently with probability `p`.
#[derive(Clone, Debug)]
pub struct PercolatedGraph<'h> {
    host: &'h HostGraph,
    graph: Graph,
    retained: Vec<u64>,
    p: f64,
    seed: u64,
}

impl<'h> PercolatedGraph<'h> {
    pub fn host(&self) -> &'h HostGraph {
        self.host
    }

    /// The retained subgraph on the host's vertex set.
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Sorted indices of the retained host edges.
    pub fn retained(&self) -> &[u64] {
        &self.retained
    }

    pub fn is_retained(&self, edge_index: u64) -> bool {
        self.retained.binary_search(&edge_index).is_ok()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

const CHUNK: usize = 4096;

/// Retain each host edge independently with probability `p`.
///
/// For explicit hosts and hypercubes edge `e` survives iff
/// `keyed_unit(seed, e) < p`, identical to [`LocalHost::is_retained`].
/// The implicit complete graph is sampled row by row with geometric skips
/// drawn from a stream keyed by `(seed, row)`; the law is the same but the
/// realization differs from the per-edge hash.
pub fn percolate(host: &HostGraph, p: f64, seed: u64) -> Result<PercolatedGraph<'_>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("retention probability {p} outside [0, 1]")));
    }
    let n = host.n();
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<(u32, u32, u64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = (c * CHUNK) as u32;
            let hi = ((c + 1) * CHUNK).min(n) as u32;
            let mut out = Vec::new();
            for u in lo..hi {
                match &host.adjacency {
                    Adjacency::Complete => complete_row(n as u64, u, p, seed, &mut out),
                    _ => {
                        let mut idx = match &host.adjacency {
                            Adjacency::Explicit { upper_start, .. } => upper_start[u as usize],
                            _ => hypercube_upper_start(u as u64, host.d as u64),
                        };
                        for v in host.neighbors(u).filter(|&v| v > u) {
                            if keyed::keyed_bernoulli(seed, idx, p) {
                                out.push((u, v, idx));
                            }
                            idx += 1;
                        }
                    }
                }
            }
            out
        })
        .collect();
    let total = parts.iter().map(Vec::len).sum();
    let mut edges = Vec::with_capacity(total);
    let mut retained = Vec::with_capacity(total);
    for part in parts {
        for (u, v, idx) in part {
            edges.push((u, v));
            retained.push(idx);
        }
    }
    Ok(PercolatedGraph {
        host,
        graph: Graph::build(n, &edges),
        retained,
        p,
        seed,
    })
}

fn complete_row(n: u64, u: u32, p: f64, seed: u64, out: &mut Vec<(u32, u32, u64)>) {
    if p <= 0.0 {
        return;
    }
    let start = complete_row_start(n, u as u64);
    let first = u as u64 + 1;
    if p >= 1.0 {
        out.extend((first..n).map(|v| (u, v as u32, start + v - first)));
        return;
    }
    let mut rng = keyed::stream(seed, u as u64);
    let log_q = (-p).ln_1p();
    let mut v = first;
    loop {
        let uni: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
        let skip = (uni.ln() / log_q).floor();
        if skip >= (n - v) as f64 {
            break;
        }
        v += skip as u64;
        out.push((u, v as u32, start + v - first));
        v += 1;
        if v >= n {
            break;
        }
    }
}

/// A regular host that can be explored locally, with lazily decided
/// percolation. Used by the coupled exploration, which must work on hosts
/// far too large to enumerate (e.g. `Q^256`).
pub trait LocalHost: Sync {
    type Vertex: Clone + Eq + Hash + Ord + fmt::Debug + Send;

    /// Common degree `d`.
    fn degree(&self) -> usize;

    /// Neighbors of `v` in ascending order.
    fn neighbors(&self, v: &Self::Vertex) -> Vec<Self::Vertex>;

    fn is_adjacent(&self, a: &Self::Vertex, b: &Self::Vertex) -> bool;

    /// Key identifying the edge `{a, b}`; only called on adjacent pairs.
    fn edge_key(&self, a: &Self::Vertex, b: &Self::Vertex) -> u64;

    fn random_vertex<R: Rng>(&self, rng: &mut R) -> Self::Vertex;

    fn is_retained(&self, a: &Self::Vertex, b: &Self::Vertex, p: f64, seed: u64) -> bool {
        keyed::keyed_bernoulli(seed, self.edge_key(a, b), p)
    }
}

impl LocalHost for HostGraph {
    type Vertex = u32;

    fn degree(&self) -> usize {
        self.d
    }

    fn neighbors(&self, v: &u32) -> Vec<u32> {
        HostGraph::neighbors(self, *v).collect()
    }

    fn is_adjacent(&self, a: &u32, b: &u32) -> bool {
        self.has_edge(*a, *b)
    }

    fn edge_key(&self, a: &u32, b: &u32) -> u64 {
        self.edge_index(*a, *b).expect("edge_key on non-adjacent pair")
    }

    fn random_vertex<R: Rng>(&self, rng: &mut R) -> u32 {
        rng.random_range(0..self.n as u32)
    }
}

/// Hypercube of any dimension with labels stored as bit vectors. Nothing is
/// materialized, so `d` in the hundreds is fine for local exploration.
#[derive(Clone, Debug)]
pub struct ImplicitHypercube {
    d: usize,
}

/// Vertex label of an [`ImplicitHypercube`], little-endian 64-bit words.
pub type CubeLabel = Box<[u64]>;

impl ImplicitHypercube {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 || d > 1 << 16 {
            return Err(Error::Size(format!("implicit hypercube dimension {d} out of range")));
        }
        Ok(ImplicitHypercube { d })
    }

    pub fn zero(&self) -> CubeLabel {
        vec![0u64; self.d.div_ceil(64)].into_boxed_slice()
    }

    fn flip(v: &CubeLabel, bit: usize) -> CubeLabel {
        let mut w = v.clone();
        w[bit / 64] ^= 1u64 << (bit % 64);
        w
    }

    fn differing_bit(a: &CubeLabel, b: &CubeLabel) -> Option<usize> {
        let mut found = None;
        for (i, (x, y)) in a.iter().zip(b.iter()).enumerate() {
            let diff = x ^ y;
            if diff == 0 {
                continue;
            }
            if diff.count_ones() > 1 || found.is_some() {
                return None;
            }
            found = Some(i * 64 + diff.trailing_zeros() as usize);
        }
        found
    }
}

impl LocalHost for ImplicitHypercube {
    type Vertex = CubeLabel;

    fn degree(&self) -> usize {
        self.d
    }

    fn neighbors(&self, v: &CubeLabel) -> Vec<CubeLabel> {
        let mut out: Vec<CubeLabel> = (0..self.d).map(|bit| Self::flip(v, bit)).collect();
        // lexicographic order on the numeric value (most significant word last)
        out.sort_by(|a, b| a.iter().rev().cmp(b.iter().rev()));
        out
    }

    fn is_adjacent(&self, a: &CubeLabel, b: &CubeLabel) -> bool {
        Self::differing_bit(a, b).is_some()
    }

    fn edge_key(&self, a: &CubeLabel, b: &CubeLabel) -> u64 {
        let bit = Self::differing_bit(a, b).expect("edge_key on non-adjacent pair");
        let low = Self::flip(a, bit);
        let low = if a[bit / 64] & (1u64 << (bit % 64)) == 0 { a } else { &low };
        let mut parts: Vec<u64> = low.to_vec();
        parts.push(bit as u64);
        keyed::derive_seed(0x6375_6265, &parts)
    }

    fn random_vertex<R: Rng>(&self, rng: &mut R) -> CubeLabel {
        let mut v = self.zero();
        for bit in 0..self.d {
            if rng.random::<bool>() {
                v[bit / 64] |= 1u64 << (bit % 64);
            }
        }
        v
    }
}
