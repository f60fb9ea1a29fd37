use crate::error::{Error, Result};

/// Simple undirected graph in compressed sparse row form.
///
/// Neighbor lists are sorted ascending; the graph is loop-free and has no
/// parallel edges. This is the read-only "graph view" consumed by matching
/// and census code.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            offsets: vec![0; n + 1],
            targets: Vec::new(),
        }
    }

    /// Build from an edge list, rejecting loops, duplicates and
    /// out-of-range endpoints.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        for &(u, v) in edges {
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {u}")));
            }
            if u as usize >= n || v as usize >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) out of range for {n} vertices"
                )));
            }
        }
        let g = Self::build(n, edges);
        for v in 0..n as u32 {
            if let Some(w) = g.neighbors(v).windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({v}, {})",
                    w[0]
                )));
            }
        }
        Ok(g)
    }

    /// Build from edges already known to be simple and in range.
    pub(crate) fn build(n: usize, edges: &[(u32, u32)]) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for &(u, v) in edges {
            offsets[u as usize + 1] += 1;
            offsets[v as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; offsets[n]];
        for &(u, v) in edges {
            targets[fill[u as usize]] = v;
            fill[u as usize] += 1;
            targets[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        for i in 0..n {
            targets[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Graph { offsets, targets }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    #[inline]
    pub fn m(&self) -> usize {
        self.targets.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.targets[self.offsets[v as usize]..self.offsets[v as usize + 1]]
    }

    #[inline]
    pub fn degree(&self, v: u32) -> usize {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n() as u32).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        (u as usize) < self.n() && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n() as u32).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Copy with one extra edge; `None` if the edge is invalid or present.
    pub fn with_edge(&self, u: u32, v: u32) -> Option<Graph> {
        if u == v || self.has_edge(u, v) || u as usize >= self.n() || v as usize >= self.n() {
            return None;
        }
        let mut edges: Vec<_> = self.edges().collect();
        edges.push((u, v));
        Some(Self::build(self.n(), &edges))
    }

    /// Subgraph induced by `vertices`, relabelled by position in the slice.
    pub fn induced(&self, vertices: &[u32]) -> Graph {
        let mut index = std::collections::HashMap::with_capacity(vertices.len());
        for (i, &v) in vertices.iter().enumerate() {
            index.insert(v, i as u32);
        }
        let mut edges = Vec::new();
        for (i, &v) in vertices.iter().enumerate() {
            for w in self.neighbors(v) {
                if let Some(&j) = index.get(w) {
                    if (i as u32) < j {
                        edges.push((i as u32, j));
                    }
                }
            }
        }
        Self::build(vertices.len(), &edges)
    }
}
