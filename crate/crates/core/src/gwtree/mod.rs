//! Poisson(c) Galton-Watson trees truncated at depth `r`.
//!
//! `μ_r` is the law of the depth-`r` ball around the root. A node at depth
//! `< r` with `D` children falling into isomorphism classes `t_1^{m_1} ...
//! t_k^{m_k}` contributes `e^{-c} c^D / Π m_i!` times the class probabilities;
//! nodes at depth `r` contribute 1 because the ball does not see their
//! offspring.

mod canon;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

pub use canon::{canon_code, CanonCode, RootedGraph};

use crate::error::{Error, Result};
use crate::keyed;

/// Node guard for [`sample_gw_truncated`].
pub const MAX_SAMPLE_NODES: usize = 10_000_000;
/// Class-count guard for [`enumerate_gw_measure`].
pub const MAX_ENUMERATED_CLASSES: u128 = 10_000_000;

/// Finite rooted tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootedTree {
    children: Vec<Vec<u32>>,
}

impl RootedTree {
    pub fn bare() -> Self {
        RootedTree { children: vec![Vec::new()] }
    }

    /// Root with `j` leaf children (the star `K_{1,j}` rooted at its centre).
    pub fn star(j: usize) -> Self {
        let mut children = vec![(1..=j as u32).collect::<Vec<_>>()];
        children.extend(std::iter::repeat_n(Vec::new(), j));
        RootedTree { children }
    }

    /// Children lists indexed by node; every non-root node must have
    /// exactly one parent and be reachable from node 0.
    pub fn from_children(children: Vec<Vec<u32>>) -> Result<Self> {
        let n = children.len();
        if n == 0 {
            return Err(Error::Domain("tree needs a root".into()));
        }
        let mut has_parent = vec![false; n];
        for list in &children {
            for &c in list {
                if c == 0 || c as usize >= n || has_parent[c as usize] {
                    return Err(Error::InvalidGraph(format!("node {c} has a bad parent link")));
                }
                has_parent[c as usize] = true;
            }
        }
        let tree = RootedTree { children };
        if tree.depths().contains(&usize::MAX) {
            return Err(Error::InvalidGraph("tree is not connected".into()));
        }
        Ok(tree)
    }

    /// Parse an AHU code back into a tree.
    pub fn from_code(code: &CanonCode) -> Result<Self> {
        if !code.is_tree() {
            return Err(Error::Domain(format!("{code} is not a tree code")));
        }
        let mut children: Vec<Vec<u32>> = Vec::new();
        let mut stack: Vec<u32> = Vec::new();
        for b in code.as_str().bytes() {
            if b == b'(' {
                let id = children.len() as u32;
                children.push(Vec::new());
                if let Some(&parent) = stack.last() {
                    children[parent as usize].push(id);
                }
                stack.push(id);
            } else {
                stack.pop();
            }
        }
        Ok(RootedTree { children })
    }

    pub fn size(&self) -> usize {
        self.children.len()
    }

    pub fn children(&self, v: u32) -> &[u32] {
        &self.children[v as usize]
    }

    fn depths(&self) -> Vec<usize> {
        let mut depth = vec![usize::MAX; self.size()];
        depth[0] = 0;
        let mut queue = VecDeque::from([0u32]);
        while let Some(v) = queue.pop_front() {
            for &c in &self.children[v as usize] {
                if depth[c as usize] == usize::MAX {
                    depth[c as usize] = depth[v as usize] + 1;
                    queue.push_back(c);
                }
            }
        }
        depth
    }

    /// Largest root-to-leaf depth.
    pub fn height(&self) -> usize {
        self.depths().into_iter().max().unwrap_or(0)
    }

    /// Maximum degree as a graph (children plus the parent edge).
    pub fn max_degree(&self) -> usize {
        self.children
            .iter()
            .enumerate()
            .map(|(v, c)| c.len() + usize::from(v != 0))
            .max()
            .unwrap_or(0)
    }

    pub fn to_rooted_graph(&self) -> RootedGraph {
        let mut adj = vec![Vec::new(); self.size()];
        for (v, list) in self.children.iter().enumerate() {
            for &c in list {
                adj[v].push(c);
                adj[c as usize].push(v as u32);
            }
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        RootedGraph::from_adjacency(adj)
    }

    /// AHU code of this tree (and of every subtree, indexed by node).
    fn subtree_codes(&self) -> Vec<String> {
        let depth = self.depths();
        let mut order: Vec<usize> = (0..self.size()).collect();
        order.sort_by_key(|&v| std::cmp::Reverse(depth[v]));
        let mut codes = vec![String::new(); self.size()];
        for v in order {
            let mut kids: Vec<&str> = self.children[v].iter().map(|&c| codes[c as usize].as_str()).collect();
            kids.sort_unstable();
            let code = format!("({})", kids.concat());
            codes[v] = code;
        }
        codes
    }

    pub fn canon_code(&self) -> CanonCode {
        CanonCode::tree(self.subtree_codes().swap_remove(0))
    }
}

/// Sample `GW^r_c` with a stream keyed by `seed`.
pub fn sample_gw_truncated(c: f64, r: usize, seed: u64) -> Result<RootedTree> {
    let mut rng = keyed::stream(seed, 0x6777);
    sample_gw_truncated_with(c, r, &mut rng)
}

/// Breadth-first generation: nodes at depth `< r` get `Po(c)` children,
/// depth-`r` nodes get none. `c = 0` is accepted and yields a bare root.
pub fn sample_gw_truncated_with<R: Rng>(c: f64, r: usize, rng: &mut R) -> Result<RootedTree> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("offspring mean {c} must be finite and >= 0")));
    }
    let poisson = if c > 0.0 { Some(Poisson::new(c).map_err(|e| Error::Domain(e.to_string()))?) } else { None };
    let mut children: Vec<Vec<u32>> = vec![Vec::new()];
    let mut depth = vec![0usize];
    let mut head = 0;
    while head < children.len() {
        if depth[head] < r {
            let k = poisson.as_ref().map_or(0, |p| p.sample(rng) as usize);
            if children.len() + k > MAX_SAMPLE_NODES {
                return Err(Error::Size(format!(
                    "Galton-Watson sample exceeded {MAX_SAMPLE_NODES} nodes"
                )));
            }
            for _ in 0..k {
                let id = children.len() as u32;
                children.push(Vec::new());
                depth.push(depth[head] + 1);
                children[head].push(id);
            }
        }
        head += 1;
    }
    Ok(RootedTree { children })
}

/// `P(Po(c) = k) / Π m_i!` without the `1/k!`, i.e. `e^{-c} c^k`, in logs.
fn ln_poisson_weight(c: f64, k: usize) -> f64 {
    if k == 0 {
        -c
    } else if c == 0.0 {
        f64::NEG_INFINITY
    } else {
        -c + k as f64 * c.ln()
    }
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|j| (j as f64).ln()).sum()
}

/// Exact `μ_r` probability of the isomorphism class of `t`.
pub fn gw_ball_prob(t: &RootedTree, r: usize, c: f64) -> Result<f64> {
    let depth = t.depths();
    let height = depth.iter().copied().max().unwrap_or(0);
    if height > r {
        return Err(Error::Domain(format!("tree height {height} exceeds radius {r}")));
    }
    let codes = t.subtree_codes();
    let mut order: Vec<usize> = (0..t.size()).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(depth[v]));
    let mut ln_prob = vec![0.0f64; t.size()];
    for v in order {
        if depth[v] == r {
            continue;
        }
        let kids = &t.children[v];
        let mut multiplicity: HashMap<&str, usize> = HashMap::new();
        let mut acc = ln_poisson_weight(c, kids.len());
        for &k in kids {
            *multiplicity.entry(codes[k as usize].as_str()).or_default() += 1;
            acc += ln_prob[k as usize];
        }
        acc -= multiplicity.values().map(|&m| ln_factorial(m)).sum::<f64>();
        ln_prob[v] = acc;
    }
    Ok(ln_prob[0].exp())
}

/// Truncated `μ_r` over all classes whose nodes have at most `delta_cap`
/// children; the rest of the mass is `tail_mass`.
#[derive(Clone, Debug, PartialEq)]
pub struct GwMeasure {
    pub r: usize,
    pub c: f64,
    pub delta_cap: usize,
    pub mass: BTreeMap<CanonCode, f64>,
    pub tail_mass: f64,
}

impl GwMeasure {
    pub fn prob(&self, code: &CanonCode) -> f64 {
        self.mass.get(code).copied().unwrap_or(0.0)
    }

    pub fn enumerated_mass(&self) -> f64 {
        crate::analytic::sum_smallest_first(self.mass.values().copied().collect())
    }

    /// CSV with columns `canon_code,probability` and a `tail_mass` footer row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "canon_code,probability")?;
        for (code, p) in &self.mass {
            writeln!(w, "{code},{p}")?;
        }
        writeln!(w, "tail_mass,{}", self.tail_mass)
    }
}

fn multiset_count(types: u128, max_size: usize) -> u128 {
    // number of multisets of size <= max_size from `types` kinds: C(types + max_size, max_size)
    let mut acc: u128 = 1;
    for i in 1..=max_size as u128 {
        acc = acc.saturating_mul(types + i) / i;
        if acc > MAX_ENUMERATED_CLASSES * 1000 {
            return u128::MAX;
        }
    }
    acc
}

/// Number of classes [`enumerate_gw_measure`] would produce, saturating.
pub fn enumeration_size(r: usize, delta_cap: usize) -> u128 {
    let mut t: u128 = 1;
    for _ in 0..r {
        t = multiset_count(t, delta_cap);
        if t == u128::MAX {
            break;
        }
    }
    t
}

/// Enumerate every rooted tree of height `<= r` whose nodes have at most
/// `delta_cap` children, with its `μ_r` probability.
///
/// Classes are built level by level from the bottom: a class with budget `h`
/// is a multiset of classes with budget `h-1`, generated as non-decreasing
/// index sequences over the code-sorted list, so each class appears once.
pub fn enumerate_gw_measure(c: f64, r: usize, delta_cap: usize) -> Result<GwMeasure> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("offspring mean {c} must be finite and >= 0")));
    }
    let count = enumeration_size(r, delta_cap);
    if count > MAX_ENUMERATED_CLASSES {
        return Err(Error::Size(format!(
            "enumerating radius {r} with delta_cap {delta_cap} needs more than \
             {MAX_ENUMERATED_CLASSES} classes; use Monte-Carlo sampling instead"
        )));
    }
    let ln_fact: Vec<f64> = (0..=delta_cap).map(ln_factorial).collect();
    // (code, ln probability), sorted by code
    let mut level: Vec<(String, f64)> = vec![("()".to_string(), 0.0)];
    for _ in 0..r {
        let mut next = Vec::new();
        let mut chosen: Vec<usize> = Vec::with_capacity(delta_cap);
        extend_multisets(&level, delta_cap, c, &ln_fact, 0, &mut chosen, &mut next);
        next.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        level = next;
    }
    let mass: BTreeMap<CanonCode, f64> = level
        .into_iter()
        .map(|(code, lp)| (CanonCode::tree(code), lp.exp()))
        .collect();
    let total = crate::analytic::sum_smallest_first(mass.values().copied().collect());
    Ok(GwMeasure {
        r,
        c,
        delta_cap,
        mass,
        tail_mass: (1.0 - total).max(0.0),
    })
}

fn extend_multisets(
    types: &[(String, f64)],
    cap: usize,
    c: f64,
    ln_fact: &[f64],
    from: usize,
    chosen: &mut Vec<usize>,
    out: &mut Vec<(String, f64)>,
) {
    // record the current multiset
    let mut code = String::from("(");
    let mut lp = ln_poisson_weight(c, chosen.len());
    let mut run = 0usize;
    for (i, &t) in chosen.iter().enumerate() {
        code.push_str(&types[t].0);
        lp += types[t].1;
        run += 1;
        if i + 1 == chosen.len() || chosen[i + 1] != t {
            lp -= ln_fact[run];
            run = 0;
        }
    }
    code.push(')');
    out.push((code, lp));
    if chosen.len() == cap {
        return;
    }
    for t in from..types.len() {
        chosen.push(t);
        extend_multisets(types, cap, c, ln_fact, t, chosen, out);
        chosen.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_root_and_degenerate_sampling() {
        assert_eq!(sample_gw_truncated(2.0, 0, 1).unwrap(), RootedTree::bare());
        for r in 0..5 {
            assert_eq!(sample_gw_truncated(0.0, r, 9).unwrap(), RootedTree::bare());
        }
        assert!(sample_gw_truncated(-1.0, 2, 1).is_err());
    }

    #[test]
    fn sampled_heights_respect_radius() {
        for seed in 0..200 {
            let t = sample_gw_truncated(2.5, 3, seed).unwrap();
            assert!(t.height() <= 3);
        }
    }

    #[test]
    fn root_offspring_mean() {
        let mut rng = keyed::stream(5, 5);
        let n = 100_000;
        let total: usize = (0..n)
            .map(|_| sample_gw_truncated_with(2.0, 2, &mut rng).unwrap().children(0).len())
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 2.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn simple_ball_probabilities() {
        let c: f64 = 1.7;
        let e = (-c).exp();
        assert!((gw_ball_prob(&RootedTree::bare(), 1, c).unwrap() - e).abs() < 1e-15);
        assert!((gw_ball_prob(&RootedTree::bare(), 0, c).unwrap() - 1.0).abs() < 1e-15);
        assert!((gw_ball_prob(&RootedTree::star(1), 1, c).unwrap() - c * e).abs() < 1e-15);
        let two = gw_ball_prob(&RootedTree::star(2), 2, c).unwrap();
        assert!((two - e * c * c / 2.0 * e * e).abs() < 1e-15);
        assert!(gw_ball_prob(&RootedTree::star(2), 0, c).is_err());
    }

    #[test]
    fn ball_prob_groups_identical_children_only() {
        // root with children A (one leaf child) and B (no children), r = 2:
        // e^{-c} c^2 (no 1/2! since the classes differ) * c e^{-c} * e^{-c}
        let c: f64 = 0.8;
        let t = RootedTree::from_children(vec![vec![1, 2], vec![3], vec![], vec![]]).unwrap();
        let e = (-c).exp();
        let expected = e * c * c * (c * e) * e;
        assert!((gw_ball_prob(&t, 2, c).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn radius_one_is_poisson() {
        let c: f64 = 1.3;
        let m = enumerate_gw_measure(c, 1, 7).unwrap();
        assert_eq!(m.mass.len(), 8);
        let mut pmf = (-c).exp();
        for j in 0..=7usize {
            let p = m.prob(&RootedTree::star(j).canon_code());
            assert!((p - pmf).abs() < 1e-15 * pmf.max(1.0), "j={j}");
            pmf *= c / (j + 1) as f64;
        }
        let tail = crate::analytic::poisson_tail_ge(c, 8.0);
        assert!((m.tail_mass - tail).abs() < 1e-13);
    }

    #[test]
    fn radius_zero_is_a_point_mass() {
        let m = enumerate_gw_measure(3.0, 0, 5).unwrap();
        assert_eq!(m.mass.len(), 1);
        assert_eq!(m.prob(&RootedTree::bare().canon_code()), 1.0);
        assert_eq!(m.tail_mass, 0.0);
    }

    #[test]
    fn enumeration_matches_ball_prob() {
        let m = enumerate_gw_measure(1.0, 2, 4).unwrap();
        assert_eq!(m.mass.len() as u128, enumeration_size(2, 4));
        for (code, &p) in &m.mass {
            let t = RootedTree::from_code(code).unwrap();
            assert_eq!(&t.canon_code(), code);
            let direct = gw_ball_prob(&t, 2, 1.0).unwrap();
            assert!((direct - p).abs() < 1e-14, "{code}");
        }
        assert!((m.enumerated_mass() + m.tail_mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn enumeration_guard() {
        assert!(matches!(enumerate_gw_measure(1.0, 3, 6), Err(Error::Size(_))));
    }

    #[test]
    fn tree_shape_queries() {
        let t = RootedTree::from_children(vec![vec![1, 2, 3], vec![4, 5], vec![], vec![], vec![], vec![]]).unwrap();
        assert_eq!(t.height(), 2);
        assert_eq!(t.max_degree(), 3);
        assert!(RootedTree::from_children(vec![vec![1], vec![0]]).is_err());
        assert!(RootedTree::from_children(vec![vec![], vec![]]).is_err());
        assert_eq!(canon_code(&t.to_rooted_graph()).unwrap(), t.canon_code());
    }

    #[test]
    fn measure_csv_has_footer() {
        let m = enumerate_gw_measure(1.0, 1, 2).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("canon_code,probability\n"));
        assert!(text.trim_end().lines().last().unwrap().starts_with("tail_mass,"));
        assert_eq!(text.lines().count(), 5);
    }
}
