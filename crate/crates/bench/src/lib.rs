//! Shared fixtures for the benchmarks.

use perc_core::graphgen::{make_hypercube, make_random_regular, percolate};
use perc_core::{Graph, HostGraph};

pub const FIXTURE_SEED: u64 = 0x5eed;

pub fn random_regular_host(n: usize, d: usize) -> HostGraph {
    make_random_regular(n, d, FIXTURE_SEED).expect("random regular host")
}

pub fn hypercube_host(d: usize) -> HostGraph {
    make_hypercube(d).expect("hypercube host")
}

/// The host percolated at `p = c / d`, detached from the host.
pub fn percolated(host: &HostGraph, c: f64) -> Graph {
    percolate(host, c / host.d() as f64, FIXTURE_SEED).expect("percolation").graph().clone()
}
