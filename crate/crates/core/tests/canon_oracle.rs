use perc_core::gwtree::canon_code;
use perc_core::{RootedGraph, RootedTree};
use proptest::prelude::*;

/// Rooted isomorphism by trying every root-fixing bijection.
fn brute_isomorphic(a: &RootedGraph, b: &RootedGraph) -> bool {
    let n = a.n();
    if n != b.n() || a.m() != b.m() {
        return false;
    }
    let mut image = vec![u32::MAX; n];
    let mut used = vec![false; n];
    image[0] = 0;
    used[0] = true;
    fn extend(a: &RootedGraph, b: &RootedGraph, v: usize, image: &mut [u32], used: &mut [bool]) -> bool {
        if v == a.n() {
            return true;
        }
        for w in 1..a.n() {
            if used[w] {
                continue;
            }
            let consistent = (0..v).all(|u| a.has_edge(u as u32, v as u32) == b.has_edge(image[u], w as u32));
            if !consistent {
                continue;
            }
            image[v] = w as u32;
            used[w] = true;
            if extend(a, b, v + 1, image, used) {
                return true;
            }
            used[w] = false;
        }
        false
    }
    extend(a, b, 1, &mut image, &mut used)
}

/// Node `i > 0` hangs below `parents[i - 1] % i`.
fn tree_from_parents(parents: &[u32]) -> RootedTree {
    let n = parents.len() + 1;
    let mut children = vec![Vec::new(); n];
    for (i, &p) in parents.iter().enumerate() {
        let child = i as u32 + 1;
        children[(p % child) as usize].push(child);
    }
    RootedTree::from_children(children).unwrap()
}

fn shuffle_labels(g: &RootedGraph, keys: &[u64]) -> RootedGraph {
    let mut rest: Vec<u32> = (1..g.n() as u32).collect();
    rest.sort_by_key(|&v| keys[v as usize % keys.len()].wrapping_mul(v as u64 + 1));
    let mut perm = vec![0u32; g.n()];
    for (i, &v) in rest.iter().enumerate() {
        perm[v as usize] = i as u32 + 1;
    }
    g.relabel(&perm)
}

fn connected_graph(n: usize, spanning: &[u32], extra: &[(u32, u32)]) -> RootedGraph {
    let mut edges: Vec<(u32, u32)> = spanning.iter().enumerate().map(|(i, &p)| (p % (i as u32 + 1), i as u32 + 1)).collect();
    for &(a, b) in extra {
        let (a, b) = (a % n as u32, b % n as u32);
        if a != b && !edges.iter().any(|&(x, y)| (x, y) == (a.min(b), a.max(b)) || (y, x) == (a.min(b), a.max(b))) {
            edges.push((a.min(b), a.max(b)));
        }
    }
    RootedGraph::from_edges(n, &edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn tree_codes_are_relabeling_invariant(parents in proptest::collection::vec(any::<u32>(), 0..12), keys in proptest::collection::vec(any::<u64>(), 1..8)) {
        let t = tree_from_parents(&parents);
        let g = t.to_rooted_graph();
        let code = canon_code(&g).unwrap();
        prop_assert!(code.is_tree());
        prop_assert_eq!(&code, &t.canon_code());
        prop_assert_eq!(canon_code(&shuffle_labels(&g, &keys)).unwrap(), code.clone());
        prop_assert_eq!(RootedTree::from_code(&code).unwrap().canon_code(), code);
    }

    #[test]
    fn tree_codes_match_brute_force_isomorphism(a in proptest::collection::vec(any::<u32>(), 0..8), b in proptest::collection::vec(any::<u32>(), 0..8)) {
        let (ta, tb) = (tree_from_parents(&a), tree_from_parents(&b));
        let same = brute_isomorphic(&ta.to_rooted_graph(), &tb.to_rooted_graph());
        prop_assert_eq!(ta.canon_code() == tb.canon_code(), same);
    }

    #[test]
    fn leaf_moves_are_detected(parents in proptest::collection::vec(any::<u32>(), 2..8), leaf_pick in any::<u32>(), target in any::<u32>()) {
        let t = tree_from_parents(&parents);
        let g = t.to_rooted_graph();
        let leaves: Vec<u32> = (1..g.n() as u32).filter(|&v| g.neighbors(v).len() == 1).collect();
        let leaf = leaves[leaf_pick as usize % leaves.len()];
        let new_parent = (0..g.n() as u32).filter(|&v| v != leaf).nth(target as usize % (g.n() - 1)).unwrap();
        let mut edges: Vec<(u32, u32)> = g.edges().into_iter().filter(|&(x, y)| x != leaf && y != leaf).collect();
        edges.push((new_parent.min(leaf), new_parent.max(leaf)));
        let moved = RootedGraph::from_edges(g.n(), &edges).unwrap();
        let same = brute_isomorphic(&g, &moved);
        prop_assert_eq!(canon_code(&g).unwrap() == canon_code(&moved).unwrap(), same);
    }

    #[test]
    fn cyclic_codes_match_brute_force_isomorphism(
        n in 3usize..8,
        sa in proptest::collection::vec(any::<u32>(), 7),
        sb in proptest::collection::vec(any::<u32>(), 7),
        ea in proptest::collection::vec((any::<u32>(), any::<u32>()), 1..6),
        eb in proptest::collection::vec((any::<u32>(), any::<u32>()), 1..6),
        keys in proptest::collection::vec(any::<u64>(), 1..8),
    ) {
        let a = connected_graph(n, &sa[..n - 1], &ea);
        let b = connected_graph(n, &sb[..n - 1], &eb);
        let (ca, cb) = (canon_code(&a).unwrap(), canon_code(&b).unwrap());
        prop_assert_eq!(ca == cb, brute_isomorphic(&a, &b));
        prop_assert_eq!(canon_code(&shuffle_labels(&a, &keys)).unwrap(), ca);
    }
}
