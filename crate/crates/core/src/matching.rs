//! Matching numbers.
//!
//! Exact mode removes leaves Karp-Sipser style (a degree-one vertex is always
//! covered by some maximum matching, so matching it to its neighbour loses
//! nothing) and runs Edmonds' blossom algorithm on the remaining core.
//! Heuristic mode is the full Karp-Sipser algorithm: when no leaf is left it
//! matches a uniformly random remaining edge, which yields a lower bound.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::keyed;

/// Default vertex cap for the blossom algorithm.
pub const DEFAULT_BLOSSOM_CAP: usize = 1_000_000;

const NONE: u32 = u32::MAX;

/// A set of pairwise disjoint edges, each stored as `(u, v)` with `u < v`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Matching {
    edges: Vec<(u32, u32)>,
}

impl Matching {
    pub fn from_edges(mut edges: Vec<(u32, u32)>) -> Self {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        Matching { edges }
    }

    fn from_mate(mate: &[u32]) -> Self {
        let edges = mate
            .iter()
            .enumerate()
            .filter(|&(v, &w)| w != NONE && (v as u32) < w)
            .map(|(v, &w)| (v as u32, w))
            .collect();
        Matching { edges }
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// The matching size `ν`.
    pub fn size(&self) -> usize {
        self.edges.len()
    }
}

/// True iff every edge of `m` is an edge of `g` and no two share a vertex.
pub fn verify_matching(g: &Graph, m: &Matching) -> bool {
    let mut covered = vec![false; g.n()];
    for &(u, v) in m.edges() {
        if !g.has_edge(u, v) || covered[u as usize] || covered[v as usize] {
            return false;
        }
        covered[u as usize] = true;
        covered[v as usize] = true;
    }
    true
}

/// Outcome of exhaustive leaf removal.
#[derive(Clone, Debug)]
pub struct KsReduction {
    /// Leaf edges `(leaf, neighbour)` in removal order.
    pub forced_edges: Vec<(u32, u32)>,
    /// Residual graph, minimum degree at least two (or empty).
    pub core: Graph,
    /// Original label of each core vertex.
    pub core_vertices: Vec<u32>,
    /// Vertices discarded because they had (or reached) degree zero.
    pub removed_isolated: usize,
}

/// Repeatedly match a leaf to its unique neighbour and delete both, dropping
/// isolated vertices, until every remaining vertex has degree at least two.
///
/// Leaves are processed first-in first-out; the initial leaves are queued in
/// increasing id order and new leaves in the order they appear.
pub fn karp_sipser_reduce(g: &Graph) -> KsReduction {
    let n = g.n();
    let mut deg: Vec<usize> = (0..n as u32).map(|v| g.degree(v)).collect();
    let mut alive = vec![true; n];
    let mut removed_isolated = 0;
    let mut queue = VecDeque::new();
    for v in 0..n {
        match deg[v] {
            0 => {
                alive[v] = false;
                removed_isolated += 1;
            }
            1 => queue.push_back(v as u32),
            _ => {}
        }
    }
    let mut forced_edges = Vec::new();
    while let Some(leaf) = queue.pop_front() {
        if !alive[leaf as usize] || deg[leaf as usize] != 1 {
            continue;
        }
        let partner = *g
            .neighbors(leaf)
            .iter()
            .find(|&&w| alive[w as usize])
            .expect("leaf has one live neighbour");
        forced_edges.push((leaf, partner));
        alive[leaf as usize] = false;
        alive[partner as usize] = false;
        for &w in g.neighbors(partner) {
            if !alive[w as usize] {
                continue;
            }
            deg[w as usize] -= 1;
            match deg[w as usize] {
                0 => {
                    alive[w as usize] = false;
                    removed_isolated += 1;
                }
                1 => queue.push_back(w),
                _ => {}
            }
        }
    }
    let core_vertices: Vec<u32> = (0..n as u32).filter(|&v| alive[v as usize]).collect();
    let core = g.induced(&core_vertices);
    KsReduction {
        forced_edges,
        core,
        core_vertices,
        removed_isolated,
    }
}

/// Maximum-cardinality matching by Edmonds' blossom algorithm, with the
/// default vertex cap.
pub fn max_matching_blossom(g: &Graph) -> Result<Matching> {
    max_matching_blossom_capped(g, DEFAULT_BLOSSOM_CAP)
}

pub fn max_matching_blossom_capped(g: &Graph, cap: usize) -> Result<Matching> {
    if g.n() > cap {
        return Err(Error::Size(format!(
            "blossom matching on {} vertices exceeds the cap of {cap}; use heuristic mode",
            g.n()
        )));
    }
    let mut solver = Blossom::new(g);
    solver.run();
    Ok(Matching::from_mate(&solver.mate))
}

/// Augmenting-path search with blossom contraction (one BFS per free
/// vertex). A vertex from which no augmenting path exists never gains one
/// later, so each free vertex is searched once. Scratch arrays are reset only
/// on the vertices a search touched.
struct Blossom<'g> {
    g: &'g Graph,
    mate: Vec<u32>,
    parent: Vec<u32>,
    base: Vec<u32>,
    used: Vec<bool>,
    touched: Vec<u32>,
    in_touched: Vec<bool>,
    mark: Vec<u32>,
    blossom: Vec<u32>,
    stamp: u32,
    queue: VecDeque<u32>,
}

impl<'g> Blossom<'g> {
    fn new(g: &'g Graph) -> Self {
        let n = g.n();
        Blossom {
            g,
            mate: vec![NONE; n],
            parent: vec![NONE; n],
            base: (0..n as u32).collect(),
            used: vec![false; n],
            touched: Vec::new(),
            in_touched: vec![false; n],
            mark: vec![0; n],
            blossom: vec![0; n],
            stamp: 0,
            queue: VecDeque::new(),
        }
    }

    fn run(&mut self) {
        let n = self.g.n() as u32;
        // greedy start
        for v in 0..n {
            if self.mate[v as usize] == NONE {
                if let Some(&w) = self.g.neighbors(v).iter().find(|&&w| self.mate[w as usize] == NONE) {
                    self.mate[v as usize] = w;
                    self.mate[w as usize] = v;
                }
            }
        }
        for root in 0..n {
            if self.mate[root as usize] == NONE && self.g.degree(root) > 0 {
                if let Some(end) = self.find_path(root) {
                    self.augment(end);
                }
                self.reset();
            }
        }
    }

    fn touch(&mut self, v: u32) {
        if !self.in_touched[v as usize] {
            self.in_touched[v as usize] = true;
            self.touched.push(v);
        }
    }

    fn reset(&mut self) {
        for &v in &self.touched {
            let v = v as usize;
            self.parent[v] = NONE;
            self.base[v] = v as u32;
            self.used[v] = false;
            self.in_touched[v] = false;
        }
        self.touched.clear();
        self.queue.clear();
    }

    fn next_stamp(&mut self) -> u32 {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.mark.fill(0);
            self.blossom.fill(0);
            self.stamp = 1;
        }
        self.stamp
    }

    fn lca(&mut self, mut a: u32, mut b: u32) -> u32 {
        let s = self.next_stamp();
        loop {
            a = self.base[a as usize];
            self.mark[a as usize] = s;
            if self.mate[a as usize] == NONE {
                break;
            }
            a = self.parent[self.mate[a as usize] as usize];
        }
        loop {
            b = self.base[b as usize];
            if self.mark[b as usize] == s {
                return b;
            }
            b = self.parent[self.mate[b as usize] as usize];
        }
    }

    fn mark_path(&mut self, mut v: u32, b: u32, mut child: u32, s: u32) {
        while self.base[v as usize] != b {
            let m = self.mate[v as usize];
            self.blossom[self.base[v as usize] as usize] = s;
            self.blossom[self.base[m as usize] as usize] = s;
            self.parent[v as usize] = child;
            self.touch(v);
            child = m;
            v = self.parent[m as usize];
        }
    }

    fn find_path(&mut self, root: u32) -> Option<u32> {
        self.used[root as usize] = true;
        self.touch(root);
        self.queue.push_back(root);
        while let Some(v) = self.queue.pop_front() {
            let g = self.g;
            for &to in g.neighbors(v) {
                if self.base[v as usize] == self.base[to as usize] || self.mate[v as usize] == to {
                    continue;
                }
                let to_mate = self.mate[to as usize];
                if to == root || (to_mate != NONE && self.parent[to_mate as usize] != NONE) {
                    let cur = self.lca(v, to);
                    let s = self.next_stamp();
                    self.mark_path(v, cur, to, s);
                    self.mark_path(to, cur, v, s);
                    for i in 0..self.touched.len() {
                        let x = self.touched[i];
                        if self.blossom[self.base[x as usize] as usize] == s {
                            self.base[x as usize] = cur;
                            if !self.used[x as usize] {
                                self.used[x as usize] = true;
                                self.queue.push_back(x);
                            }
                        }
                    }
                } else if self.parent[to as usize] == NONE {
                    self.parent[to as usize] = v;
                    self.touch(to);
                    if to_mate == NONE {
                        return Some(to);
                    }
                    self.used[to_mate as usize] = true;
                    self.touch(to_mate);
                    self.queue.push_back(to_mate);
                }
            }
        }
        None
    }

    fn augment(&mut self, mut v: u32) {
        while v != NONE {
            let pv = self.parent[v as usize];
            let next = self.mate[pv as usize];
            self.mate[v as usize] = pv;
            self.mate[pv as usize] = v;
            v = next;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchingMode {
    Exact,
    Heuristic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchingNumber {
    /// `ν(g)` in exact mode, a lower bound on it in heuristic mode.
    pub nu: usize,
    pub exact: bool,
}

/// Exact maximum matching: forced leaf edges plus a blossom matching of the
/// Karp-Sipser core.
pub fn maximum_matching(g: &Graph) -> Result<Matching> {
    let red = karp_sipser_reduce(g);
    let core = max_matching_blossom(&red.core)?;
    let mut edges = red.forced_edges;
    edges.extend(
        core.edges()
            .iter()
            .map(|&(a, b)| (red.core_vertices[a as usize], red.core_vertices[b as usize])),
    );
    Ok(Matching::from_edges(edges))
}

pub fn matching_number(g: &Graph, mode: MatchingMode, seed: u64) -> Result<MatchingNumber> {
    match mode {
        MatchingMode::Exact => {
            let red = karp_sipser_reduce(g);
            let core = max_matching_blossom(&red.core)?;
            Ok(MatchingNumber {
                nu: red.forced_edges.len() + core.size(),
                exact: true,
            })
        }
        MatchingMode::Heuristic => Ok(MatchingNumber {
            nu: karp_sipser_heuristic(g, seed).size(),
            exact: false,
        }),
    }
}

/// Full Karp-Sipser: leaves first, otherwise a uniformly random live edge.
pub fn karp_sipser_heuristic(g: &Graph, seed: u64) -> Matching {
    let n = g.n();
    let mut rng = keyed::stream(seed, 0x6b73);

    // edge ids in lexicographic order; slot_edge maps each CSR slot to its id
    let edges: Vec<(u32, u32)> = g.edges().collect();
    let mut slot_start = Vec::with_capacity(n + 1);
    let mut acc = 0usize;
    for v in 0..n as u32 {
        slot_start.push(acc);
        acc += g.degree(v);
    }
    let mut slot_edge = vec![0u32; acc];
    for (id, &(u, v)) in edges.iter().enumerate() {
        let su = g.neighbors(u).binary_search(&v).unwrap();
        let sv = g.neighbors(v).binary_search(&u).unwrap();
        slot_edge[slot_start[u as usize] + su] = id as u32;
        slot_edge[slot_start[v as usize] + sv] = id as u32;
    }

    let mut pool: Vec<u32> = (0..edges.len() as u32).collect();
    let mut pos: Vec<u32> = (0..edges.len() as u32).collect();
    let mut deg: Vec<usize> = (0..n as u32).map(|v| g.degree(v)).collect();
    let mut alive: Vec<bool> = deg.iter().map(|&d| d > 0).collect();
    let mut queue: VecDeque<u32> = (0..n as u32).filter(|&v| deg[v as usize] == 1).collect();
    let mut matched = Vec::new();

    let delete = |x: u32,
                      alive: &mut Vec<bool>,
                      deg: &mut Vec<usize>,
                      pool: &mut Vec<u32>,
                      pos: &mut Vec<u32>,
                      queue: &mut VecDeque<u32>| {
        alive[x as usize] = false;
        for (k, &y) in g.neighbors(x).iter().enumerate() {
            if !alive[y as usize] {
                continue;
            }
            let id = slot_edge[slot_start[x as usize] + k];
            let at = pos[id as usize] as usize;
            let last = *pool.last().unwrap();
            pool.swap_remove(at);
            if at < pool.len() {
                pos[last as usize] = at as u32;
            }
            deg[y as usize] -= 1;
            match deg[y as usize] {
                0 => alive[y as usize] = false,
                1 => queue.push_back(y),
                _ => {}
            }
        }
    };

    while !pool.is_empty() {
        let pair = loop {
            match queue.pop_front() {
                Some(v) if alive[v as usize] && deg[v as usize] == 1 => {
                    let w = *g.neighbors(v).iter().find(|&&w| alive[w as usize]).unwrap();
                    break (v, w);
                }
                Some(_) => continue,
                None => {
                    let id = pool[rng.random_range(0..pool.len())];
                    break edges[id as usize];
                }
            }
        };
        matched.push(pair);
        delete(pair.0, &mut alive, &mut deg, &mut pool, &mut pos, &mut queue);
        delete(pair.1, &mut alive, &mut deg, &mut pool, &mut pos, &mut queue);
    }
    Matching::from_edges(matched)
}
