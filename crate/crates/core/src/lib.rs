//! Percolation-and-matching laboratory.
//!
//! The crate generates regular host graphs, percolates them with a keyed
//! per-edge generator, computes exact matching numbers (Karp-Sipser leaf
//! removal followed by Edmonds' blossom algorithm on the core), and measures
//! how closely the radius-`r` neighbourhoods of a percolated graph follow the
//! Poisson Galton-Watson tree.
//!
//! Module map:
//!
//! * [`graphgen`]: host families and edge percolation.
//! * [`matching`]: Karp-Sipser reduction, blossom matching, heuristic mode.
//! * [`analytic`]: the fixed point `y(c)`, the matching constant `F(c)`,
//!   exact binomial/Poisson distances and tail checks.
//! * [`gwtree`]: Galton-Watson sampling, exact ball probabilities,
//!   enumeration of the truncated measure, canonical codes.
//! * [`census`]: ball extraction, empirical neighbourhood measures, total
//!   variation to the Galton-Watson measure, coupled exploration.

pub mod analytic;
pub mod census;
pub mod error;
pub mod graph;
pub mod graphgen;
pub mod gwtree;
pub mod keyed;
pub mod matching;

pub use census::{CouplingOutcome, CouplingReport, NeighborhoodMeasure};
pub use error::{Error, Result};
pub use graph::Graph;
pub use graphgen::{Family, HostGraph, PercolatedGraph};
pub use gwtree::{CanonCode, GwMeasure, RootedGraph, RootedTree};
pub use matching::{KsReduction, Matching, MatchingMode, MatchingNumber};
