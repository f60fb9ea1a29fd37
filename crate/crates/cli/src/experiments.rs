//! Experiment drivers. Each turns a validated config into result tables;
//! cells run in parallel and rows come out in grid order.

use std::collections::{BTreeMap, BTreeSet};

use perc_core::analytic::{self, eval_f, fixed_point_y, matching_fraction};
use perc_core::census::{census, coupling_batch, tv_distance, CouplingTally};
use perc_core::graphgen::{percolate, ImplicitHypercube, LocalHost};
use perc_core::gwtree::{enumerate_gw_measure, enumeration_size, MAX_ENUMERATED_CLASSES};
use perc_core::matching::matching_number;
use perc_core::{CanonCode, Family, HostGraph, MatchingMode};
use rayon::prelude::*;

use crate::config::{cell_seed, Experiment, ExperimentConfig, HostPoint, Mode, DEFAULT_TAIL_TARGET};
use crate::error::CliError;
use crate::output::{fmt_f, ColType, Output, Table};

use ColType::{Bool, Float, Int, Str};

/// Damped-iteration budget for the theory cross-check.
const ITERATION_STEPS: usize = 50_000_000;
/// Maximum offspring cap tried when choosing one automatically.
const AUTO_DELTA_CAP_LIMIT: usize = 64;

pub fn run(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Theory => run_theory(cfg),
        Experiment::MatchingConvergence => run_matching_convergence(cfg),
        Experiment::LocalLimit => run_local_limit(cfg),
        Experiment::BinpoRate => run_binpo_rate(cfg),
        Experiment::CouplingRate => run_coupling_rate(cfg),
        Experiment::Concentration => run_concentration(cfg),
        Experiment::Census => run_census(cfg),
        Experiment::Percolate => run_percolate(cfg),
    }
}

/// `exp(-(ln d)^{1/(2r)} / 4)`, the level in the local-limit tail bound.
pub fn paper_bound(d: usize, r: usize) -> f64 {
    (-0.25 * (d as f64).ln().powf(1.0 / (2.0 * r as f64))).exp()
}

/// `(ln d)^r / sqrt(d)`, the coupling and local-limit rate.
pub fn rate(d: usize, r: usize) -> f64 {
    (d as f64).ln().powi(r as i32) / (d as f64).sqrt()
}

fn mean(xs: &[f64]) -> f64 {
    analytic::sum_smallest_first(xs.to_vec()) / xs.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
fn stddev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss = analytic::sum_smallest_first(xs.iter().map(|x| (x - m) * (x - m)).collect());
    (ss / (xs.len() - 1) as f64).sqrt()
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn host_d(host: &HostGraph) -> usize {
    host.d()
}

/// Retention probability `c / d`, checked to be a probability.
fn retention(c: f64, d: usize) -> Result<f64, CliError> {
    if d == 0 {
        return Err(CliError::Config("host degree is 0".into()));
    }
    let p = c / d as f64;
    if p > 1.0 {
        return Err(CliError::Config(format!("c = {c} exceeds the host degree {d}")));
    }
    Ok(p)
}

fn host_seed(cfg: &ExperimentConfig, point: &HostPoint) -> u64 {
    cell_seed(cfg.base_seed, &format!("host|{}", point.key()), 0)
}

pub fn run_theory(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let mut table = Table::new(&[
        ("c", Float),
        ("y", Float),
        ("F", Float),
        ("residual", Float),
        ("near_boundary", Bool),
        ("F_iteration", Float),
        ("solver_gap", Float),
    ]);
    let rows: Vec<Vec<String>> = cfg
        .params
        .c
        .0
        .par_iter()
        .map(|&c| {
            let k = eval_f(c);
            let f_iter = matching_fraction(c, fixed_point_y(c, 1.0, ITERATION_STEPS));
            vec![
                fmt_f(c),
                fmt_f(k.y),
                fmt_f(k.f),
                fmt_f(k.residual),
                k.near_boundary.to_string(),
                fmt_f(f_iter),
                fmt_f((k.f - f_iter).abs()),
            ]
        })
        .collect();
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Output { main: table, summary: None })
}

pub fn run_matching_convergence(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let mut table = Table::new(&[
        ("family", Str),
        ("d", Int),
        ("n", Int),
        ("c", Float),
        ("seed_index", Int),
        ("seed", Int),
        ("nu", Int),
        ("n_vertices", Int),
        ("ratio", Float),
        ("exact", Bool),
    ]);
    let mut summary = Table::new(&[
        ("family", Str),
        ("d", Int),
        ("n", Int),
        ("c", Float),
        ("seeds", Int),
        ("mean_ratio", Float),
        ("stddev_ratio", Float),
        ("F", Float),
        ("abs_error", Float),
    ]);
    let mode = match cfg.params.mode {
        Mode::Exact => MatchingMode::Exact,
        Mode::Heuristic => MatchingMode::Heuristic,
    };
    for point in cfg.host_points()? {
        let host = point.build(host_seed(cfg, &point))?;
        let (d, n) = (host_d(&host), host.n());
        for &c in &cfg.params.c.0 {
            let p = retention(c, d)?;
            let key = format!("match|{}|c={c}|mode={:?}", point.key(), cfg.params.mode);
            let cells: Vec<(u64, usize)> = (0..cfg.seeds)
                .into_par_iter()
                .map(|i| {
                    let seed = cell_seed(cfg.base_seed, &key, i);
                    let g = percolate(&host, p, seed)?;
                    let nu = matching_number(g.graph(), mode, seed)?;
                    Ok((seed, nu.nu))
                })
                .collect::<Result<_, CliError>>()?;
            let mut ratios = Vec::new();
            for (i, (seed, nu)) in cells.into_iter().enumerate() {
                let ratio = nu as f64 / n as f64;
                ratios.push(ratio);
                table.push(vec![
                    host.family().to_string(),
                    d.to_string(),
                    n.to_string(),
                    fmt_f(c),
                    i.to_string(),
                    seed.to_string(),
                    nu.to_string(),
                    n.to_string(),
                    fmt_f(ratio),
                    (mode == MatchingMode::Exact).to_string(),
                ]);
            }
            let f = if c > 0.0 { eval_f(c).f } else { 0.0 };
            let m = mean(&ratios);
            summary.push(vec![
                host.family().to_string(),
                d.to_string(),
                n.to_string(),
                fmt_f(c),
                cfg.seeds.to_string(),
                fmt_f(m),
                fmt_f(stddev(&ratios)),
                fmt_f(f),
                fmt_f((m - f).abs()),
            ]);
        }
    }
    Ok(Output { main: table, summary: Some(summary) })
}

/// Offspring cap for enumerating `μ_r`: the configured one, or the smallest
/// `D` with `P(Po(c) > D) * Σ_{i<r} c^i <= tail_target`. The sum is the
/// expected number of nodes that can have children, so the unenumerated
/// mass is at most the product by a union bound.
pub fn choose_delta_cap(cfg: &ExperimentConfig, c: f64, r: usize) -> Result<usize, CliError> {
    if let Some(cap) = cfg.params.delta_cap {
        return Ok(cap);
    }
    let target = cfg.params.tail_target.unwrap_or(DEFAULT_TAIL_TARGET);
    let internal: f64 = (0..r).map(|i| c.powi(i as i32)).sum();
    for cap in 0..=AUTO_DELTA_CAP_LIMIT {
        if analytic::poisson_tail_ge(c, cap as f64 + 1.0) * internal <= target {
            if enumeration_size(r, cap) > MAX_ENUMERATED_CLASSES {
                break;
            }
            return Ok(cap);
        }
    }
    Err(CliError::Core(perc_core::Error::Size(format!(
        "no offspring cap reaches tail {target} for c = {c}, r = {r} within \
         {MAX_ENUMERATED_CLASSES} classes; set params.delta_cap explicitly"
    ))))
}

pub fn run_local_limit(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let mut table = Table::new(&[
        ("family", Str),
        ("d", Int),
        ("n", Int),
        ("c", Float),
        ("r", Int),
        ("seed_index", Int),
        ("seed", Int),
        ("tv", Float),
        ("tv_tail_band", Float),
        ("non_tree_mass", Float),
        ("paper_bound", Float),
    ]);
    let mut summary = Table::new(&[
        ("family", Str),
        ("d", Int),
        ("n", Int),
        ("c", Float),
        ("r", Int),
        ("seeds", Int),
        ("delta_cap", Int),
        ("median_tv", Float),
        ("mean_tv", Float),
        ("exceed_fraction", Float),
        ("paper_bound", Float),
        ("median_tv_over_rate", Float),
    ]);
    for point in cfg.host_points()? {
        let host = point.build(host_seed(cfg, &point))?;
        let (d, n) = (host_d(&host), host.n());
        for &c in &cfg.params.c.0 {
            let p = retention(c, d)?;
            for &r in &cfg.params.r.0 {
                let cap = choose_delta_cap(cfg, c, r)?;
                let gw = enumerate_gw_measure(c, r, cap)?;
                let bound = paper_bound(d, r);
                let key = format!("local|{}|c={c}|r={r}", point.key());
                let cells: Vec<_> = (0..cfg.seeds)
                    .into_par_iter()
                    .map(|i| {
                        let seed = cell_seed(cfg.base_seed, &key, i);
                        let g = percolate(&host, p, seed)?;
                        let emp = census(g.graph(), r);
                        let tv = tv_distance(&emp, &gw)?;
                        Ok((seed, tv, emp.non_tree_mass()))
                    })
                    .collect::<Result<_, CliError>>()?;
                let mut tvs = Vec::new();
                for (i, (seed, tv, non_tree)) in cells.into_iter().enumerate() {
                    tvs.push(tv.tv);
                    table.push(vec![
                        host.family().to_string(),
                        d.to_string(),
                        n.to_string(),
                        fmt_f(c),
                        r.to_string(),
                        i.to_string(),
                        seed.to_string(),
                        fmt_f(tv.tv),
                        fmt_f(tv.tail_band),
                        fmt_f(non_tree),
                        fmt_f(bound),
                    ]);
                }
                let exceed = tvs.iter().filter(|&&t| t >= bound).count() as f64 / tvs.len() as f64;
                let med = median(&tvs);
                summary.push(vec![
                    host.family().to_string(),
                    d.to_string(),
                    n.to_string(),
                    fmt_f(c),
                    r.to_string(),
                    cfg.seeds.to_string(),
                    cap.to_string(),
                    fmt_f(med),
                    fmt_f(mean(&tvs)),
                    fmt_f(exceed),
                    fmt_f(bound),
                    fmt_f(med / rate(d, r)),
                ]);
            }
        }
    }
    Ok(Output { main: table, summary: Some(summary) })
}

/// Thresholds at which the binomial and Poisson tails are checked.
const CHERNOFF_MULTIPLES: [f64; 3] = [10.0, 15.0, 20.0];

pub fn run_binpo_rate(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let mut table = Table::new(&[
        ("d", Int),
        ("d_prime", Int),
        ("c", Float),
        ("tv", Float),
        ("tv_times_sqrt_d", Float),
    ]);
    let mut summary = Table::new(&[
        ("c", Float),
        ("d_min", Int),
        ("d_max", Int),
        ("min_tv_times_sqrt_d", Float),
        ("max_tv_times_sqrt_d", Float),
        ("band_ratio", Float),
        ("chernoff_points", Int),
        ("chernoff_all_hold", Bool),
    ]);
    for &c in &cfg.params.c.0 {
        let mut scaled = Vec::new();
        let mut checks = Vec::new();
        for &d in &cfg.host.d.0 {
            let p = retention(c, d)?;
            let shrink = (d as f64).powf(0.25).ceil() as usize;
            let mut primes = vec![d];
            if shrink < d {
                primes.push(d - shrink);
            }
            for &dp in &primes {
                let tv = analytic::tv_bin_po(dp as u64, p, c);
                let s = tv * (d as f64).sqrt();
                if dp == d {
                    scaled.push(s);
                }
                table.push(vec![d.to_string(), dp.to_string(), fmt_f(c), fmt_f(tv), fmt_f(s)]);
                for m in CHERNOFF_MULTIPLES {
                    let t = m * c;
                    if t > 0.0 {
                        checks.push(analytic::chernoff_check(dp as u64, p, c, t));
                    }
                }
            }
        }
        let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scaled.iter().copied().fold(0.0, f64::max);
        let ratio = if lo > 0.0 { hi / lo } else if hi == 0.0 { 1.0 } else { f64::INFINITY };
        summary.push(vec![
            fmt_f(c),
            cfg.host.d.0.iter().min().unwrap().to_string(),
            cfg.host.d.0.iter().max().unwrap().to_string(),
            fmt_f(lo),
            fmt_f(hi),
            fmt_f(ratio),
            checks.len().to_string(),
            checks.iter().all(|k| k.holds == Some(true)).to_string(),
        ]);
    }
    Ok(Output { main: table, summary: Some(summary) })
}

fn coupling_tally<H: LocalHost>(host: &H, c: f64, r: usize, trials: u64, seed: u64) -> CouplingTally {
    coupling_batch(host, c, r, trials, seed)
}

pub fn run_coupling_rate(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let mut table = Table::new(&[
        ("family", Str),
        ("d", Int),
        ("c", Float),
        ("r", Int),
        ("seed_index", Int),
        ("seed", Int),
        ("trials", Int),
        ("success", Int),
        ("abort_degree_deficit", Int),
        ("abort_offspring_mismatch", Int),
        ("abort_degree_overflow", Int),
        ("abort_cross_edge", Int),
        ("recheck_failures", Int),
        ("failure_rate", Float),
        ("rate_bound", Float),
        ("normalized", Float),
    ]);
    let mut summary = Table::new(&[
        ("family", Str),
        ("d", Int),
        ("c", Float),
        ("r", Int),
        ("trials", Int),
        ("failure_rate", Float),
        ("rate_bound", Float),
        ("normalized", Float),
        ("recheck_failures", Int),
    ]);
    let trials = cfg.params.trials.unwrap();
    for point in cfg.host_points()? {
        // the hypercube is explored implicitly so any dimension works
        let implicit = match point.family {
            Family::Hypercube => Some(ImplicitHypercube::new(point.d.unwrap())?),
            _ => None,
        };
        let explicit = match implicit {
            None => Some(point.build(host_seed(cfg, &point))?),
            Some(_) => None,
        };
        let d = implicit.as_ref().map_or_else(|| explicit.as_ref().unwrap().d(), |h| h.degree());
        for &c in &cfg.params.c.0 {
            retention(c, d)?;
            for &r in &cfg.params.r.0 {
                let key = format!("coupling|{}|c={c}|r={r}|trials={trials}", point.key());
                let bound = rate(d, r);
                let mut pooled = CouplingTally::default();
                for i in 0..cfg.seeds {
                    let seed = cell_seed(cfg.base_seed, &key, i);
                    let tally = match (&implicit, &explicit) {
                        (Some(h), _) => coupling_tally(h, c, r, trials, seed),
                        (None, Some(h)) => coupling_tally(h, c, r, trials, seed),
                        _ => unreachable!(),
                    };
                    pooled.merge(&tally);
                    let f = tally.failure_rate();
                    table.push(vec![
                        point.family.to_string(),
                        d.to_string(),
                        fmt_f(c),
                        r.to_string(),
                        i.to_string(),
                        seed.to_string(),
                        tally.trials.to_string(),
                        tally.success.to_string(),
                        tally.abort_degree_deficit.to_string(),
                        tally.abort_offspring_mismatch.to_string(),
                        tally.abort_degree_overflow.to_string(),
                        tally.abort_cross_edge.to_string(),
                        tally.recheck_failures.to_string(),
                        fmt_f(f),
                        fmt_f(bound),
                        fmt_f(f / bound),
                    ]);
                }
                let f = pooled.failure_rate();
                summary.push(vec![
                    point.family.to_string(),
                    d.to_string(),
                    fmt_f(c),
                    r.to_string(),
                    pooled.trials.to_string(),
                    fmt_f(f),
                    fmt_f(bound),
                    fmt_f(f / bound),
                    pooled.recheck_failures.to_string(),
                ]);
            }
        }
    }
    Ok(Output { main: table, summary: Some(summary) })
}

/// Tree classes reported in the concentration summary need at least this
/// mean count.
pub const CONCENTRATION_MIN_MEAN: f64 = 50.0;

pub fn run_concentration(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let mut table = Table::new(&[
        ("family", Str),
        ("d", Int),
        ("c", Float),
        ("r", Int),
        ("seed_index", Int),
        ("seed", Int),
        ("tree_code", Str),
        ("count", Int),
    ]);
    let mut summary = Table::new(&[
        ("family", Str),
        ("d", Int),
        ("c", Float),
        ("r", Int),
        ("tree_code", Str),
        ("seeds", Int),
        ("mean_count", Float),
        ("stddev", Float),
        ("mean_pow_23", Float),
        ("deviation_fraction", Float),
    ]);
    for point in cfg.host_points()? {
        let host = point.build(host_seed(cfg, &point))?;
        let d = host_d(&host);
        for &c in &cfg.params.c.0 {
            let p = retention(c, d)?;
            for &r in &cfg.params.r.0 {
                let key = format!("concentration|{}|c={c}|r={r}", point.key());
                let cells: Vec<(u64, BTreeMap<CanonCode, u64>)> = (0..cfg.seeds)
                    .into_par_iter()
                    .map(|i| {
                        let seed = cell_seed(cfg.base_seed, &key, i);
                        let g = percolate(&host, p, seed)?;
                        let mut counts = census(g.graph(), r).counts;
                        counts.retain(|code, _| code.is_tree());
                        Ok((seed, counts))
                    })
                    .collect::<Result<_, CliError>>()?;
                let codes: BTreeSet<&CanonCode> = cells.iter().flat_map(|(_, m)| m.keys()).collect();
                let mut per_code: BTreeMap<&CanonCode, Vec<f64>> = BTreeMap::new();
                for (i, (seed, counts)) in cells.iter().enumerate() {
                    for &code in &codes {
                        let k = counts.get(code).copied().unwrap_or(0);
                        per_code.entry(code).or_default().push(k as f64);
                        table.push(vec![
                            host.family().to_string(),
                            d.to_string(),
                            fmt_f(c),
                            r.to_string(),
                            i.to_string(),
                            seed.to_string(),
                            code.to_string(),
                            k.to_string(),
                        ]);
                    }
                }
                for (code, xs) in per_code {
                    let m = mean(&xs);
                    if m < CONCENTRATION_MIN_MEAN {
                        continue;
                    }
                    let dev = m.powf(2.0 / 3.0);
                    let frac = xs.iter().filter(|&&x| (x - m).abs() >= dev).count() as f64 / xs.len() as f64;
                    summary.push(vec![
                        host.family().to_string(),
                        d.to_string(),
                        fmt_f(c),
                        r.to_string(),
                        code.to_string(),
                        cfg.seeds.to_string(),
                        fmt_f(m),
                        fmt_f(stddev(&xs)),
                        fmt_f(dev),
                        fmt_f(frac),
                    ]);
                }
            }
        }
    }
    Ok(Output { main: table, summary: Some(summary) })
}

/// Census of one percolated host at the first grid point and seed index 0.
pub fn run_census(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let point = cfg.host_points()?.remove(0);
    let host = point.build(host_seed(cfg, &point))?;
    let c = cfg.params.c.0[0];
    let r = cfg.params.r.0[0];
    let p = retention(c, host.d())?;
    let seed = cell_seed(cfg.base_seed, &format!("census|{}|c={c}", point.key()), 0);
    let g = percolate(&host, p, seed)?;
    let m = census(g.graph(), r);
    let mut table = Table::new(&[("canon_code", Str), ("is_tree", Bool), ("count", Int), ("probability", Float)]);
    for (code, &k) in &m.counts {
        table.push(vec![code.to_string(), code.is_tree().to_string(), k.to_string(), fmt_f(m.prob(code))]);
    }
    Ok(Output { main: table, summary: None })
}

/// Edge list of one percolation of the first grid host. Without a `c`
/// grid every edge is kept.
pub fn run_percolate(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let point = cfg.host_points()?.remove(0);
    let host = point.build(host_seed(cfg, &point))?;
    let c = cfg.params.c.0.first().copied();
    let p = match c {
        Some(c) => retention(c, host.d())?,
        None => 1.0,
    };
    let seed = cell_seed(cfg.base_seed, &format!("percolate|{}|p={p}", point.key()), 0);
    let g = percolate(&host, p, seed)?;
    let mut table = Table::new(&[("u", Int), ("v", Int)]);
    for (u, v) in g.graph().edges() {
        table.push(vec![u.to_string(), v.to_string()]);
    }
    Ok(Output { main: table, summary: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(stddev(&[5.0]), 0.0);
        assert!((stddev(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn automatic_cap_meets_the_target() {
        let mut cfg = ExperimentConfig::new(Experiment::LocalLimit);
        let cap = choose_delta_cap(&cfg, 1.0, 2).unwrap();
        let gw = enumerate_gw_measure(1.0, 2, cap).unwrap();
        assert!(gw.tail_mass <= DEFAULT_TAIL_TARGET);
        cfg.params.delta_cap = Some(3);
        assert_eq!(choose_delta_cap(&cfg, 1.0, 2).unwrap(), 3);
    }

    #[test]
    fn bound_helpers() {
        assert!((rate(64, 2) - (64f64.ln().powi(2) / 8.0)).abs() < 1e-15);
        assert!(paper_bound(100, 1) < 1.0 && paper_bound(100, 1) > paper_bound(10_000, 1));
    }
}
