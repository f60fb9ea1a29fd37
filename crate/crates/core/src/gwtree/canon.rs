//! Canonical codes for rooted graphs.
//!
//! Trees get the AHU encoding: a node's code is `(` followed by its
//! children's codes in sorted order followed by `)`. Rooted graphs with a
//! cycle get `G<n>:<hex>`, the hex being the lexicographically smallest
//! upper-triangular adjacency string over all root-first vertex orderings.
//! The minimum is found by individualization-refinement with automorphism
//! pruning, so it is exact for any size.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};

/// Finite connected graph rooted at vertex 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RootedGraph {
    adj: Vec<Vec<u32>>,
}

impl RootedGraph {
    pub fn single() -> Self {
        RootedGraph { adj: vec![Vec::new()] }
    }

    /// Graph on `0..n` rooted at 0. Loops and duplicate edges are rejected;
    /// connectivity is checked by [`canon_code`].
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("rooted graph needs at least one vertex".into()));
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u == v || u as usize >= n || v as usize >= n {
                return Err(Error::InvalidGraph(format!("bad edge ({u}, {v})")));
            }
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidGraph("duplicate edge".into()));
            }
        }
        Ok(RootedGraph { adj })
    }

    pub(crate) fn from_adjacency(adj: Vec<Vec<u32>>) -> Self {
        RootedGraph { adj }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn m(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adj[v as usize]
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.adj[u as usize].binary_search(&v).is_ok()
    }

    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.m());
        for (u, list) in self.adj.iter().enumerate() {
            out.extend(list.iter().filter(|&&v| v > u as u32).map(|&v| (u as u32, v)));
        }
        out
    }

    /// Same rooted graph with vertex `v` renamed `perm[v]`; `perm[0]` must be 0.
    pub fn relabel(&self, perm: &[u32]) -> Self {
        assert_eq!(perm[0], 0, "relabelling must keep the root");
        let mut adj = vec![Vec::new(); self.n()];
        for (u, list) in self.adj.iter().enumerate() {
            adj[perm[u] as usize] = list.iter().map(|&v| perm[v as usize]).collect();
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        RootedGraph { adj }
    }

    /// BFS depths from the root, `u32::MAX` for unreachable vertices.
    pub fn depths(&self) -> Vec<u32> {
        let mut depth = vec![u32::MAX; self.n()];
        depth[0] = 0;
        let mut queue = VecDeque::from([0u32]);
        while let Some(v) = queue.pop_front() {
            for &w in &self.adj[v as usize] {
                if depth[w as usize] == u32::MAX {
                    depth[w as usize] = depth[v as usize] + 1;
                    queue.push_back(w);
                }
            }
        }
        depth
    }
}

/// Canonical code of a rooted graph; equal codes iff rooted-isomorphic.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonCode {
    code: String,
    is_tree: bool,
}

impl CanonCode {
    pub(crate) fn tree(code: String) -> Self {
        CanonCode { code, is_tree: true }
    }

    /// Reconstruct from the string form (`(`-prefixed codes are trees).
    pub fn parse(s: &str) -> Result<Self> {
        let is_tree = s.starts_with('(');
        let ok = if is_tree {
            let mut depth = 0i64;
            let balanced = s.bytes().enumerate().all(|(i, b)| {
                depth += if b == b'(' { 1 } else if b == b')' { -1 } else { return false };
                depth > 0 || i + 1 == s.len()
            });
            balanced && depth == 0
        } else {
            s.starts_with('G') && s.contains(':')
        };
        if !ok {
            return Err(Error::Domain(format!("`{s}` is not a canonical code")));
        }
        Ok(CanonCode { code: s.to_string(), is_tree })
    }

    pub fn as_str(&self) -> &str {
        &self.code
    }

    pub fn is_tree(&self) -> bool {
        self.is_tree
    }
}

impl fmt::Display for CanonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

/// Canonical code of `ball`, rooted at vertex 0.
pub fn canon_code(ball: &RootedGraph) -> Result<CanonCode> {
    let depth = ball.depths();
    if depth.contains(&u32::MAX) {
        return Err(Error::Domain("rooted graph is disconnected".into()));
    }
    if ball.m() + 1 == ball.n() {
        Ok(CanonCode::tree(ahu_code(ball, &depth)))
    } else {
        Ok(CanonCode {
            code: Canonizer::new(ball, &depth).run(),
            is_tree: false,
        })
    }
}

fn ahu_code(tree: &RootedGraph, depth: &[u32]) -> String {
    let n = tree.n();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by_key(|&v| depth[v as usize]);
    let mut child_codes: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut root_code = String::new();
    for &v in order.iter().rev() {
        let mut kids = std::mem::take(&mut child_codes[v as usize]);
        kids.sort_unstable();
        let mut code = String::with_capacity(2 + kids.iter().map(String::len).sum::<usize>());
        code.push('(');
        for k in &kids {
            code.push_str(k);
        }
        code.push(')');
        if v == 0 {
            root_code = code;
        } else {
            let parent = tree.adj[v as usize]
                .iter()
                .copied()
                .find(|&w| depth[w as usize] + 1 == depth[v as usize])
                .unwrap();
            child_codes[parent as usize].push(code);
        }
    }
    root_code
}

/// Ordered partition of the vertex set.
#[derive(Clone, Debug)]
struct Partition {
    cells: Vec<Vec<u32>>,
}

impl Partition {
    fn colors(&self, n: usize) -> Vec<u32> {
        let mut color = vec![0u32; n];
        for (i, cell) in self.cells.iter().enumerate() {
            for &v in cell {
                color[v as usize] = i as u32;
            }
        }
        color
    }

    fn is_discrete(&self, n: usize) -> bool {
        self.cells.len() == n
    }

    fn individualize(&self, cell: usize, w: u32) -> Partition {
        let mut cells = Vec::with_capacity(self.cells.len() + 1);
        cells.extend_from_slice(&self.cells[..cell]);
        cells.push(vec![w]);
        cells.push(self.cells[cell].iter().copied().filter(|&x| x != w).collect());
        cells.extend_from_slice(&self.cells[cell + 1..]);
        Partition { cells }
    }
}

struct Leaf {
    order: Vec<u32>,
    cert: Vec<u8>,
    path: Vec<u32>,
}

enum Flow {
    Continue,
    Backjump(usize),
}

struct Canonizer<'a> {
    g: &'a RootedGraph,
    n: usize,
    initial: Partition,
    first: Option<Leaf>,
    best: Option<Leaf>,
    generators: Vec<Vec<u32>>,
}

impl<'a> Canonizer<'a> {
    fn new(g: &'a RootedGraph, depth: &[u32]) -> Self {
        let n = g.n();
        let layers = *depth.iter().max().unwrap() as usize + 1;
        let mut cells = vec![Vec::new(); layers];
        for v in 0..n as u32 {
            cells[depth[v as usize] as usize].push(v);
        }
        Canonizer {
            g,
            n,
            initial: Partition { cells },
            first: None,
            best: None,
            generators: Vec::new(),
        }
    }

    fn run(mut self) -> String {
        let start = self.initial.clone();
        let mut path = Vec::new();
        self.search(start, &mut path);
        let best = self.best.expect("search reaches at least one leaf");
        let mut out = format!("G{}:", self.n);
        for byte in best.cert {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// Split cells by (color, sorted neighbour colors) until stable.
    fn refine(&self, mut part: Partition) -> Partition {
        loop {
            let color = part.colors(self.n);
            let mut cells = Vec::with_capacity(part.cells.len());
            for cell in &part.cells {
                if cell.len() == 1 {
                    cells.push(cell.clone());
                    continue;
                }
                let mut keyed: Vec<(Vec<u32>, u32)> = cell
                    .iter()
                    .map(|&v| {
                        let mut sig: Vec<u32> =
                            self.g.adj[v as usize].iter().map(|&w| color[w as usize]).collect();
                        sig.sort_unstable();
                        (sig, v)
                    })
                    .collect();
                keyed.sort();
                let mut start = 0;
                for i in 1..=keyed.len() {
                    if i == keyed.len() || keyed[i].0 != keyed[start].0 {
                        cells.push(keyed[start..i].iter().map(|(_, v)| *v).collect());
                        start = i;
                    }
                }
            }
            let stable = cells.len() == part.cells.len();
            part = Partition { cells };
            if stable {
                return part;
            }
        }
    }

    fn certificate(&self, order: &[u32]) -> Vec<u8> {
        let n = self.n;
        let mut pos = vec![0usize; n];
        for (i, &v) in order.iter().enumerate() {
            pos[v as usize] = i;
        }
        let bits = n * (n - 1) / 2;
        let mut cert = vec![0u8; bits.div_ceil(8)];
        // row-major over i < j in position space
        let offset = |i: usize, j: usize| i * (2 * n - i - 1) / 2 + (j - i - 1);
        for (u, list) in self.g.adj.iter().enumerate() {
            for &v in list {
                let (a, b) = (pos[u], pos[v as usize]);
                if a < b {
                    let k = offset(a, b);
                    cert[k / 8] |= 0x80 >> (k % 8);
                }
            }
        }
        cert
    }

    fn automorphism(from: &Leaf, order: &[u32]) -> Vec<u32> {
        let mut gamma = vec![0u32; from.order.len()];
        for (a, b) in from.order.iter().zip(order) {
            gamma[*a as usize] = *b;
        }
        gamma
    }

    fn common_prefix(a: &[u32], b: &[u32]) -> usize {
        a.iter().zip(b).take_while(|(x, y)| x == y).count()
    }

    fn leaf(&mut self, part: Partition, path: &[u32]) -> Flow {
        let order: Vec<u32> = part.cells.iter().map(|c| c[0]).collect();
        let cert = self.certificate(&order);
        let matched = [&self.first, &self.best]
            .into_iter()
            .flatten()
            .find(|reference| reference.cert == cert)
            .map(|reference| {
                (
                    Self::automorphism(reference, &order),
                    Self::common_prefix(&reference.path, path),
                )
            });
        if let Some((gamma, level)) = matched {
            self.generators.push(gamma);
            return Flow::Backjump(level);
        }
        let leaf = Leaf {
            order,
            cert,
            path: path.to_vec(),
        };
        if self.first.is_none() {
            self.first = Some(Leaf {
                order: leaf.order.clone(),
                cert: leaf.cert.clone(),
                path: leaf.path.clone(),
            });
        }
        let better = match &self.best {
            None => true,
            Some(b) => leaf.cert.cmp(&b.cert) == Ordering::Less,
        };
        if better {
            self.best = Some(leaf);
        }
        Flow::Continue
    }

    /// Orbit representative of `x` under the stored automorphisms that fix
    /// every vertex of `prefix`.
    fn orbits(&self, prefix: &[u32]) -> Vec<u32> {
        let mut parent: Vec<u32> = (0..self.n as u32).collect();
        fn find(parent: &mut [u32], mut x: u32) -> u32 {
            while parent[x as usize] != x {
                parent[x as usize] = parent[parent[x as usize] as usize];
                x = parent[x as usize];
            }
            x
        }
        for gamma in &self.generators {
            if prefix.iter().all(|&v| gamma[v as usize] == v) {
                for (x, &y) in gamma.iter().enumerate() {
                    let (a, b) = (find(&mut parent, x as u32), find(&mut parent, y));
                    if a != b {
                        parent[a.max(b) as usize] = a.min(b);
                    }
                }
            }
        }
        (0..self.n as u32).map(|x| find(&mut parent, x)).collect()
    }

    fn search(&mut self, part: Partition, path: &mut Vec<u32>) -> Flow {
        let part = self.refine(part);
        if part.is_discrete(self.n) {
            return self.leaf(part, path);
        }
        let target = part
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.len() > 1)
            .min_by_key(|(i, c)| (c.len(), *i))
            .map(|(i, _)| i)
            .unwrap();
        let mut candidates = part.cells[target].clone();
        candidates.sort_unstable();
        let mut explored_reps: Vec<u32> = Vec::new();
        let mut known_generators = usize::MAX;
        let mut orbit = Vec::new();
        for w in candidates {
            if known_generators != self.generators.len() {
                orbit = self.orbits(path);
                known_generators = self.generators.len();
                for r in explored_reps.iter_mut() {
                    *r = orbit[*r as usize];
                }
            }
            if explored_reps.contains(&orbit[w as usize]) {
                continue;
            }
            explored_reps.push(orbit[w as usize]);
            let child = part.individualize(target, w);
            path.push(w);
            let flow = self.search(child, path);
            path.pop();
            if let Flow::Backjump(level) = flow {
                if level < path.len() {
                    return flow;
                }
            }
        }
        Flow::Continue
    }
}
