use perc_core::keyed;
use perc_core::matching::{
    karp_sipser_heuristic, karp_sipser_reduce, matching_number, max_matching_blossom, maximum_matching,
    verify_matching,
};
use perc_core::{Graph, MatchingMode};
use proptest::prelude::*;
use rand::Rng;

/// Exhaustive ν by memoized search over the set of still-available vertices.
fn brute_force_nu(g: &Graph) -> usize {
    let n = g.n();
    assert!(n <= 16);
    let mut memo = vec![usize::MAX; 1 << n];
    fn go(g: &Graph, mask: usize, memo: &mut [usize]) -> usize {
        if mask == 0 {
            return 0;
        }
        if memo[mask] != usize::MAX {
            return memo[mask];
        }
        let v = mask.trailing_zeros();
        let rest = mask & !(1 << v);
        let mut best = go(g, rest, memo);
        for &w in g.neighbors(v) {
            if rest & (1 << w) != 0 {
                best = best.max(1 + go(g, rest & !(1 << w), memo));
            }
        }
        memo[mask] = best;
        best
    }
    go(g, (1 << n) - 1, &mut memo)
}

fn all_pairs(n: u32) -> Vec<(u32, u32)> {
    (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect()
}

fn random_graph<R: Rng>(rng: &mut R, n: u32, p: f64) -> Graph {
    let edges: Vec<_> = all_pairs(n).into_iter().filter(|_| rng.random::<f64>() < p).collect();
    Graph::from_edges(n as usize, &edges).unwrap()
}

fn is_connected(g: &Graph) -> bool {
    let mut seen = vec![false; g.n()];
    let mut stack = vec![0u32];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in g.neighbors(v) {
            if !seen[w as usize] {
                seen[w as usize] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[test]
fn blossom_matches_exhaustive_search_on_all_small_graphs() {
    let mut connected = 0;
    for n in 1..=6u32 {
        let pairs = all_pairs(n);
        for bits in 0u32..(1 << pairs.len()) {
            let edges: Vec<_> = pairs.iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, &e)| e).collect();
            let g = Graph::from_edges(n as usize, &edges).unwrap();
            let m = max_matching_blossom(&g).unwrap();
            assert!(verify_matching(&g, &m));
            assert_eq!(m.size(), brute_force_nu(&g), "n={n} edges={edges:?}");
            connected += usize::from(is_connected(&g));
        }
    }
    // labelled connected graphs on 1..=6 vertices
    assert_eq!(connected, 1 + 1 + 4 + 38 + 728 + 26704);
}

#[test]
fn blossom_matches_exhaustive_search_on_random_graphs() {
    let mut rng = keyed::stream(2024, 1);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=8u32);
        let p = rng.random::<f64>();
        let g = random_graph(&mut rng, n, p);
        let m = max_matching_blossom(&g).unwrap();
        assert!(verify_matching(&g, &m));
        assert_eq!(m.size(), brute_force_nu(&g));
        assert_eq!(maximum_matching(&g).unwrap().size(), m.size());
    }
}

#[test]
fn karp_sipser_reduction_is_exact() {
    let mut rng = keyed::stream(77, 2);
    for _ in 0..1000 {
        let n = rng.random_range(1..=60u32);
        let c = rng.random_range(0.2..4.0);
        let g = random_graph(&mut rng, n, (c / n as f64).min(1.0));
        let red = karp_sipser_reduce(&g);
        let core_nu = max_matching_blossom(&red.core).unwrap().size();
        let whole = max_matching_blossom(&g).unwrap().size();
        assert_eq!(red.forced_edges.len() + core_nu, whole);
        for &(u, v) in &red.forced_edges {
            assert!(g.has_edge(u, v));
            assert!(!red.core_vertices.contains(&u) && !red.core_vertices.contains(&v));
        }
        for v in 0..red.core.n() as u32 {
            assert!(red.core.degree(v) >= 2);
        }
    }
}

fn arb_graph(max_n: u32) -> impl Strategy<Value = Graph> {
    (2..=max_n).prop_flat_map(|n| {
        let pairs = all_pairs(n);
        let len = pairs.len();
        proptest::collection::vec(any::<bool>(), len).prop_map(move |keep| {
            let edges: Vec<_> = pairs.iter().zip(&keep).filter(|(_, &k)| k).map(|(&e, _)| e).collect();
            Graph::from_edges(n as usize, &edges).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn adding_an_edge_never_decreases_nu(g in arb_graph(12), a in 0u32..12, b in 0u32..12) {
        let (a, b) = (a % g.n() as u32, b % g.n() as u32);
        prop_assume!(a != b && !g.has_edge(a, b));
        let bigger = g.with_edge(a, b).unwrap();
        let before = max_matching_blossom(&g).unwrap().size();
        let after = max_matching_blossom(&bigger).unwrap().size();
        prop_assert!(after == before || after == before + 1);
    }

    #[test]
    fn heuristic_is_a_matching_bounded_by_exact(g in arb_graph(14), seed in any::<u64>()) {
        let h = karp_sipser_heuristic(&g, seed);
        prop_assert!(verify_matching(&g, &h));
        let exact = matching_number(&g, MatchingMode::Exact, seed).unwrap();
        let heur = matching_number(&g, MatchingMode::Heuristic, seed).unwrap();
        prop_assert!(exact.exact && !heur.exact);
        prop_assert!(heur.nu <= exact.nu);
        prop_assert_eq!(exact.nu, brute_force_nu(&g));
    }
}
