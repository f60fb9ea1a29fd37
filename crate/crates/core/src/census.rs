//! Local statistics of percolated graphs.
//!
//! [`census`] canonicalizes the radius-`r` ball around every vertex and
//! counts classes; [`tv_distance`] compares the result with a Galton-Watson
//! measure. [`coupled_bfe`] runs two breadth-first explorations in lockstep,
//! one over lazily revealed host edges and one over a Poisson tree, and
//! reports whether the depth-`r` balls came out isomorphic.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::analytic;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::graphgen::LocalHost;
use crate::gwtree::{canon_code, CanonCode, GwMeasure, RootedGraph, RootedTree};
use crate::keyed;

const CENSUS_CHUNK: usize = 2048;

/// Ball around `v` in `g`: BFS to depth `r`, induced subgraph, `v` relabeled 0.
pub fn ball(g: &Graph, v: u32, r: usize) -> RootedGraph {
    ball_with(g, v, r, &mut HashMap::new())
}

/// Vertex to local-index map used while extracting one ball.
trait Slots {
    fn get(&self, x: u32) -> Option<u32>;
    fn set(&mut self, x: u32, i: u32);
}

impl Slots for HashMap<u32, u32> {
    fn get(&self, x: u32) -> Option<u32> {
        HashMap::get(self, &x).copied()
    }

    fn set(&mut self, x: u32, i: u32) {
        self.insert(x, i);
    }
}

/// Dense map over all vertices, reset after each ball through `touched`.
struct DenseSlots {
    slot: Vec<u32>,
    touched: Vec<u32>,
}

impl DenseSlots {
    fn new(n: usize) -> Self {
        DenseSlots { slot: vec![u32::MAX; n], touched: Vec::new() }
    }

    fn reset(&mut self) {
        for x in self.touched.drain(..) {
            self.slot[x as usize] = u32::MAX;
        }
    }
}

impl Slots for DenseSlots {
    fn get(&self, x: u32) -> Option<u32> {
        let s = self.slot[x as usize];
        (s != u32::MAX).then_some(s)
    }

    fn set(&mut self, x: u32, i: u32) {
        self.slot[x as usize] = i;
        self.touched.push(x);
    }
}

fn ball_with(g: &Graph, v: u32, r: usize, slots: &mut impl Slots) -> RootedGraph {
    let mut order = vec![v];
    slots.set(v, 0);
    let mut frontier = 0..1;
    for _ in 0..r {
        let end = order.len();
        for i in frontier.clone() {
            for &w in g.neighbors(order[i]) {
                if slots.get(w).is_none() {
                    slots.set(w, order.len() as u32);
                    order.push(w);
                }
            }
        }
        if order.len() == end {
            break;
        }
        frontier = end..order.len();
    }
    let adj = order
        .iter()
        .map(|&x| {
            let mut list: Vec<u32> = g.neighbors(x).iter().filter_map(|&w| slots.get(w)).collect();
            list.sort_unstable();
            list
        })
        .collect();
    RootedGraph::from_adjacency(adj)
}

/// Ball around `u` in the percolation of `host` with edges revealed on
/// demand from the keyed bits `(seed, edge_key)`.
pub fn lazy_ball<H: LocalHost>(host: &H, u: &H::Vertex, r: usize, p: f64, seed: u64) -> RootedGraph {
    let mut index: HashMap<H::Vertex, u32> = HashMap::new();
    let mut order = vec![u.clone()];
    index.insert(u.clone(), 0);
    let mut retained: Vec<Vec<u32>> = vec![Vec::new()];
    let mut frontier = 0..1;
    for _ in 0..r {
        let end = order.len();
        for i in frontier.clone() {
            let x = order[i].clone();
            for w in host.neighbors(&x) {
                if index.contains_key(&w) || !host.is_retained(&x, &w, p, seed) {
                    continue;
                }
                index.insert(w.clone(), order.len() as u32);
                order.push(w);
                retained.push(Vec::new());
            }
        }
        if order.len() == end {
            break;
        }
        frontier = end..order.len();
    }
    for (i, x) in order.iter().enumerate() {
        for w in host.neighbors(x) {
            if let Some(&j) = index.get(&w) {
                if host.is_retained(x, &w, p, seed) {
                    retained[i].push(j);
                }
            }
        }
        retained[i].sort_unstable();
    }
    RootedGraph::from_adjacency(retained)
}

/// Empirical law of the radius-`r` ball class of a uniform vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborhoodMeasure {
    pub r: usize,
    pub counts: BTreeMap<CanonCode, u64>,
    pub n: u64,
    /// Vertices whose ball contains a cycle.
    pub non_tree: u64,
}

impl NeighborhoodMeasure {
    pub fn count(&self, code: &CanonCode) -> u64 {
        self.counts.get(code).copied().unwrap_or(0)
    }

    pub fn prob(&self, code: &CanonCode) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.count(code) as f64 / self.n as f64
        }
    }

    pub fn non_tree_mass(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.non_tree as f64 / self.n as f64
        }
    }

    /// CSV with columns `canon_code,is_tree,count,probability`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "canon_code,is_tree,count,probability")?;
        for (code, &k) in &self.counts {
            writeln!(w, "{code},{},{k},{}", code.is_tree(), self.prob(code))?;
        }
        Ok(())
    }
}

/// Count the ball class of every vertex of `g`. Work is split into fixed
/// vertex ranges and merged in range order, so the result does not depend
/// on the thread count.
pub fn census(g: &Graph, r: usize) -> NeighborhoodMeasure {
    let n = g.n();
    let chunks: Vec<BTreeMap<CanonCode, u64>> = (0..n.div_ceil(CENSUS_CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut slots = DenseSlots::new(n);
            let mut counts = BTreeMap::new();
            let mut cache: HashMap<RootedGraph, CanonCode> = HashMap::new();
            let lo = chunk * CENSUS_CHUNK;
            for v in lo..(lo + CENSUS_CHUNK).min(n) {
                let b = ball_with(g, v as u32, r, &mut slots);
                slots.reset();
                let code = match cache.get(&b) {
                    Some(code) => code.clone(),
                    None => {
                        let code = canon_code(&b).expect("balls are connected");
                        if cache.len() < 1 << 16 {
                            cache.insert(b, code.clone());
                        }
                        code
                    }
                };
                *counts.entry(code).or_insert(0u64) += 1;
            }
            counts
        })
        .collect();
    let mut counts: BTreeMap<CanonCode, u64> = BTreeMap::new();
    for part in chunks {
        for (code, k) in part {
            *counts.entry(code).or_insert(0) += k;
        }
    }
    let non_tree = counts.iter().filter(|(c, _)| !c.is_tree()).map(|(_, k)| k).sum();
    NeighborhoodMeasure { r, counts, n: n as u64, non_tree }
}

/// Number of vertices of `g` whose radius-`r` ball is isomorphic to `t`.
pub fn count_tree(g: &Graph, t: &RootedTree, r: usize) -> Result<u64> {
    if t.height() > r {
        return Err(Error::Domain(format!("tree height {} exceeds radius {r}", t.height())));
    }
    Ok(census(g, r).count(&t.canon_code()))
}

/// Total variation estimate between an empirical measure and an enumerated
/// Galton-Watson measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvEstimate {
    /// Upper bound on the distance, the unenumerated tail counted as unmatched.
    pub tv: f64,
    /// Width of the uncertainty band below `tv`; equals the tail mass.
    pub tail_band: f64,
}

/// Half the L1 distance over the union of observed and enumerated classes.
/// Non-tree and non-enumerated classes carry their full empirical mass; the
/// Galton-Watson tail is added as mass no census class can match. The true
/// distance lies in `[tv - tail_band, tv]`.
pub fn tv_distance(emp: &NeighborhoodMeasure, gw: &GwMeasure) -> Result<TvEstimate> {
    if emp.r != gw.r {
        return Err(Error::Domain(format!(
            "radius mismatch: census r = {}, measure r = {}",
            emp.r, gw.r
        )));
    }
    let mut terms = Vec::with_capacity(emp.counts.len() + gw.mass.len() + 1);
    for (code, _) in &emp.counts {
        terms.push((emp.prob(code) - gw.prob(code)).abs());
    }
    for (code, &p) in &gw.mass {
        if !emp.counts.contains_key(code) {
            terms.push(p);
        }
    }
    terms.push(gw.tail_mass);
    let tv = (0.5 * analytic::sum_smallest_first(terms)).clamp(0.0, 1.0);
    Ok(TvEstimate { tv, tail_band: gw.tail_mass })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CouplingOutcome {
    Success,
    AbortDegreeDeficit,
    AbortOffspringMismatch,
    AbortDegreeOverflow,
    AbortCrossEdge,
}

impl fmt::Display for CouplingOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CouplingOutcome::Success => "success",
            CouplingOutcome::AbortDegreeDeficit => "abort_degree_deficit",
            CouplingOutcome::AbortOffspringMismatch => "abort_offspring_mismatch",
            CouplingOutcome::AbortDegreeOverflow => "abort_degree_overflow",
            CouplingOutcome::AbortCrossEdge => "abort_cross_edge",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CouplingReport<V> {
    pub root: V,
    /// Graph-side vertices processed without an abort.
    pub steps_completed: usize,
    pub outcome: CouplingOutcome,
    /// `true` iff the run succeeded and `mapping` was verified to be a
    /// rooted isomorphism from `gw_tree` onto the revealed ball.
    pub ball_isomorphic: bool,
    /// The Galton-Watson side, on success.
    pub gw_tree: Option<RootedTree>,
    /// `mapping[i]` is the host vertex paired with tree node `i`.
    pub mapping: Vec<V>,
    /// Retention probability `c / d` used for the host edges.
    pub p: f64,
}

/// Maximal coupling of `Bin(d', p)` with `Po(c)`: given the binomial value
/// `l`, keep `l` with probability `min(b, q)(l) / b(l)`, otherwise draw from
/// the normalized excess `(q - b)^+`. Mismatches then occur with probability
/// exactly `d_TV(b, q)`.
struct OffspringKernel {
    stay: Vec<f64>,
    excess_cdf: Vec<f64>,
}

impl OffspringKernel {
    fn new(d_prime: u64, p: f64, c: f64, kmax: u64) -> Self {
        let b: Vec<f64> = analytic::binomial_ln_pmf(d_prime, p, kmax).into_iter().map(f64::exp).collect();
        let q: Vec<f64> = analytic::poisson_ln_pmf(c, kmax).into_iter().map(f64::exp).collect();
        let stay = b.iter().zip(&q).map(|(&b, &q)| if b > 0.0 { (q / b).min(1.0) } else { 1.0 }).collect();
        let mut acc = 0.0;
        let excess_cdf = b
            .iter()
            .zip(&q)
            .map(|(&b, &q)| {
                acc += (q - b).max(0.0);
                acc
            })
            .collect();
        OffspringKernel { stay, excess_cdf }
    }

    fn draw<R: Rng>(&self, l: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        if u < self.stay[l] {
            return l;
        }
        let total = *self.excess_cdf.last().unwrap();
        if total <= 0.0 {
            return l;
        }
        let target = rng.random::<f64>() * total;
        self.excess_cdf.partition_point(|&x| x <= target).min(self.excess_cdf.len() - 1)
    }
}

/// Parallel breadth-first explorations of the percolated host around `u`
/// (retention probability `c / d`, edge bits keyed by `seed`) and of a
/// Poisson(`c`) Galton-Watson tree, truncated at depth `r`.
///
/// Each step takes the first active vertex `v` at depth `< r`, reveals its
/// edges to unexplored host vertices, and draws the tree offspring from the
/// maximal coupling given the revealed count. The run aborts if fewer than
/// `d - d^{1/4}` unexplored neighbours remain, if the counts differ, or if
/// the count reaches `4 ln d`. Edges from `v` to active vertices are not
/// revealed during the steps; afterwards, any such retained edge, or one
/// among the final active set, gives [`CouplingOutcome::AbortCrossEdge`].
pub fn coupled_bfe<H: LocalHost>(host: &H, u: &H::Vertex, c: f64, r: usize, seed: u64) -> CouplingReport<H::Vertex> {
    let d = host.degree();
    let p = if d == 0 { 0.0 } else { (c / d as f64).min(1.0) };
    let mut rng = keyed::stream(keyed::derive_seed(seed, &[0x6277_6665]), 0);
    let deficit = d as f64 - (d as f64).powf(0.25);
    let overflow = 4.0 * (d.max(1) as f64).ln();
    let mut kernels: HashMap<u64, OffspringKernel> = HashMap::new();

    let mut index: HashMap<H::Vertex, usize> = HashMap::from([(u.clone(), 0)]);
    let mut mapping = vec![u.clone()];
    let mut depth = vec![0usize];
    let mut children: Vec<Vec<u32>> = vec![Vec::new()];
    let mut cross = false;
    let mut head = 0;

    let abort = |outcome, steps, mapping| CouplingReport {
        root: u.clone(),
        steps_completed: steps,
        outcome,
        ball_isomorphic: false,
        gw_tree: None,
        mapping,
        p,
    };

    while head < mapping.len() && depth[head] < r {
        let v = mapping[head].clone();
        let mut available = Vec::new();
        for w in host.neighbors(&v) {
            match index.get(&w) {
                None => available.push(w),
                Some(&id) if id > head => cross |= host.is_retained(&v, &w, p, seed),
                Some(_) => {}
            }
        }
        if (available.len() as f64) < deficit {
            return abort(CouplingOutcome::AbortDegreeDeficit, head, mapping);
        }
        let d_prime = available.len() as u64;
        let revealed: Vec<H::Vertex> =
            available.into_iter().filter(|w| host.is_retained(&v, w, p, seed)).collect();
        let l = revealed.len();
        let kernel = kernels.entry(d_prime).or_insert_with(|| {
            let kmax = analytic::truncation_point(d_prime, p, c).max(d_prime);
            OffspringKernel::new(d_prime, p, c, kmax)
        });
        let y = kernel.draw(l, &mut rng);
        if y != l {
            return abort(CouplingOutcome::AbortOffspringMismatch, head, mapping);
        }
        if l as f64 >= overflow {
            return abort(CouplingOutcome::AbortDegreeOverflow, head, mapping);
        }
        for w in revealed {
            let id = mapping.len();
            index.insert(w.clone(), id);
            mapping.push(w);
            depth.push(depth[head] + 1);
            children.push(Vec::new());
            children[head].push(id as u32);
        }
        head += 1;
    }
    let steps = head;
    for a in head..mapping.len() {
        for w in host.neighbors(&mapping[a]) {
            if let Some(&b) = index.get(&w) {
                if b > a && host.is_retained(&mapping[a], &w, p, seed) {
                    cross = true;
                }
            }
        }
    }
    if cross {
        return abort(CouplingOutcome::AbortCrossEdge, steps, mapping);
    }
    let tree = RootedTree::from_children(children).expect("exploration builds a tree");
    let ball_isomorphic = verify_isomorphism(host, &tree, &mapping, r, p, seed);
    CouplingReport {
        root: u.clone(),
        steps_completed: steps,
        outcome: CouplingOutcome::Success,
        ball_isomorphic,
        gw_tree: Some(tree),
        mapping,
        p,
    }
}

/// Check that `mapping` sends `tree` bijectively onto the revealed ball:
/// every tree edge is a retained host edge, the images are distinct, and the
/// ball has no further vertices or edges.
fn verify_isomorphism<H: LocalHost>(
    host: &H,
    tree: &RootedTree,
    mapping: &[H::Vertex],
    r: usize,
    p: f64,
    seed: u64,
) -> bool {
    let mut image: HashMap<&H::Vertex, u32> = HashMap::new();
    for (i, v) in mapping.iter().enumerate() {
        if image.insert(v, i as u32).is_some() {
            return false;
        }
    }
    for i in 0..tree.size() as u32 {
        for &ch in tree.children(i) {
            let (a, b) = (&mapping[i as usize], &mapping[ch as usize]);
            if !host.is_adjacent(a, b) || !host.is_retained(a, b, p, seed) {
                return false;
            }
        }
    }
    let ball = lazy_ball(host, &mapping[0], r, p, seed);
    ball.n() == tree.size() && ball.m() + 1 == tree.size()
}

/// Aggregated outcomes of many coupling trials at one parameter point.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CouplingTally {
    pub trials: u64,
    pub success: u64,
    pub abort_degree_deficit: u64,
    pub abort_offspring_mismatch: u64,
    pub abort_degree_overflow: u64,
    pub abort_cross_edge: u64,
    /// Successes whose independently extracted ball did not match the tree.
    pub recheck_failures: u64,
}

impl CouplingTally {
    pub fn add(&mut self, outcome: CouplingOutcome, recheck_ok: bool) {
        self.trials += 1;
        match outcome {
            CouplingOutcome::Success => {
                self.success += 1;
                if !recheck_ok {
                    self.recheck_failures += 1;
                }
            }
            CouplingOutcome::AbortDegreeDeficit => self.abort_degree_deficit += 1,
            CouplingOutcome::AbortOffspringMismatch => self.abort_offspring_mismatch += 1,
            CouplingOutcome::AbortDegreeOverflow => self.abort_degree_overflow += 1,
            CouplingOutcome::AbortCrossEdge => self.abort_cross_edge += 1,
        }
    }

    pub fn merge(&mut self, other: &CouplingTally) {
        self.trials += other.trials;
        self.success += other.success;
        self.abort_degree_deficit += other.abort_degree_deficit;
        self.abort_offspring_mismatch += other.abort_offspring_mismatch;
        self.abort_degree_overflow += other.abort_degree_overflow;
        self.abort_cross_edge += other.abort_cross_edge;
        self.recheck_failures += other.recheck_failures;
    }

    pub fn failure_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            (self.trials - self.success) as f64 / self.trials as f64
        }
    }

    pub const CSV_HEADER: &'static str =
        "d,c,r,trials,success,abort_degree_deficit,abort_offspring_mismatch,abort_degree_overflow,abort_cross_edge";

    pub fn write_csv_row<W: Write>(&self, mut w: W, d: usize, c: f64, r: usize) -> std::io::Result<()> {
        writeln!(
            w,
            "{d},{c},{r},{},{},{},{},{},{}",
            self.trials,
            self.success,
            self.abort_degree_deficit,
            self.abort_offspring_mismatch,
            self.abort_degree_overflow,
            self.abort_cross_edge
        )
    }
}

/// Canonical code of the independently extracted ball equals the code of
/// the coupled tree.
pub fn recheck_success<H: LocalHost>(host: &H, report: &CouplingReport<H::Vertex>, r: usize, seed: u64) -> bool {
    let Some(tree) = &report.gw_tree else {
        return false;
    };
    let ball = lazy_ball(host, &report.root, r, report.p, seed);
    canon_code(&ball).is_ok_and(|code| code == tree.canon_code())
}

/// `trials` independent couplings from uniformly random roots; trial `i`
/// uses the seed `derive_seed(seed, [i])` for its root, edges and tree.
pub fn coupling_batch<H: LocalHost>(host: &H, c: f64, r: usize, trials: u64, seed: u64) -> CouplingTally {
    let parts: Vec<CouplingTally> = (0..trials)
        .into_par_iter()
        .fold(CouplingTally::default, |mut tally, i| {
            let trial_seed = keyed::derive_seed(seed, &[i]);
            let mut rng = keyed::stream(trial_seed, 0x726f_6f74);
            let u = host.random_vertex(&mut rng);
            let report = coupled_bfe(host, &u, c, r, trial_seed);
            let ok = report.outcome != CouplingOutcome::Success
                || (report.ball_isomorphic && recheck_success(host, &report, r, trial_seed));
            tally.add(report.outcome, ok);
            tally
        })
        .collect();
    let mut total = CouplingTally::default();
    for part in &parts {
        total.merge(part);
    }
    total
}
