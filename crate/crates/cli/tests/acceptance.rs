//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::collections::HashMap;
use std::path::Path;
use std::time::{Duration, Instant};

use perc_cli::app::{main_with_args, run_config};
use perc_cli::experiments::rate;
use perc_cli::output::{write_output, WALL_TIME_PREFIX};
use perc_cli::{Experiment, ExperimentConfig, Grid, Output, Table};
use perc_core::analytic::{eval_f, fixed_point_y, matching_fraction};
use perc_core::gwtree::{enumerate_gw_measure, sample_gw_truncated_with};
use perc_core::matching::{karp_sipser_reduce, max_matching_blossom};
use perc_core::{keyed, CanonCode, Graph, RootedTree};
use rand::Rng;

// criterion 1
const THEORY_RESIDUAL: f64 = 1e-12;
const THEORY_SOLVER_AGREEMENT: f64 = 1e-10;
const THEORY_GRID_POINTS: usize = 200;
const THEORY_F50_FLOOR: f64 = 0.49;
const THEORY_RUNTIME: Duration = Duration::from_secs(1);
// criterion 2
const MATCH_SEEDS: u64 = 10;
const MATCH_TOL_COMPLETE: f64 = 0.005;
const MATCH_TOL_HYPERCUBE: f64 = 0.02;
const MATCH_TOL_CLIQUE_UNION: f64 = 0.01;
// criterion 3
const ORACLE_RANDOM_GRAPHS: usize = 10_000;
const ORACLE_KS_INSTANCES: usize = 1000;
const ORACLE_RUNTIME: Duration = Duration::from_secs(300);
// criterion 4
const BINPO_BAND: f64 = 2.0;
const BINPO_RUNTIME: Duration = Duration::from_secs(10);
// criterion 5
const GW_SAMPLES: usize = 1_000_000;
const GW_SIGMAS: f64 = 4.0;
const GW_MIN_PROB: f64 = 1e-3;
const GW_NORMALIZATION: f64 = 1e-10;
const GW_POISSON_REL: f64 = 1e-14;
const GW_RUNTIME: Duration = Duration::from_secs(120);
// criterion 6
const LOCAL_CUBE_SEEDS: u64 = 20;
const LOCAL_RR_SEEDS: u64 = 10;
const LOCAL_RR_N: usize = 100_000;
const LOCAL_RATE_BAND: f64 = 4.0;
// criterion 7
const COUPLING_TRIALS: u64 = 10_000;
const COUPLING_K: f64 = 1.0;
// criterion 8
const CONC_SEEDS: u64 = 200;
const CONC_MAX_FRACTION: f64 = 0.05;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn config(exp: Experiment, family: Option<&str>, seeds: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(exp);
    cfg.host.family = family.map(str::to_string);
    cfg.seeds = seeds;
    cfg.base_seed = 20240601;
    cfg
}

fn run(cfg: &ExperimentConfig) -> Output {
    run_config(cfg).unwrap_or_else(|e| panic!("{} failed: {e}", cfg.experiment))
}

fn summary(out: &Output) -> &Table {
    out.summary.as_ref().expect("summary table")
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut worst_residual = 0.0f64;
    let mut worst_gap = 0.0f64;
    for i in 0..THEORY_GRID_POINTS {
        let c = 0.01 * 10f64.powf(4.0 * i as f64 / (THEORY_GRID_POINTS - 1) as f64);
        let k = eval_f(c);
        let iterated = matching_fraction(c, fixed_point_y(c, 1.0, 50_000_000));
        worst_residual = worst_residual.max(k.residual);
        worst_gap = worst_gap.max((k.f - iterated).abs());
    }
    let f50 = eval_f(50.0).f;
    let elapsed = start.elapsed();
    verdict(
        worst_residual < THEORY_RESIDUAL
            && worst_gap < THEORY_SOLVER_AGREEMENT
            && f50 > THEORY_F50_FLOOR
            && elapsed < THEORY_RUNTIME,
        format!(
            "max residual {worst_residual:.2e}, max solver gap {worst_gap:.2e}, F(50) = {f50:.6}, {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    let cases: [(&str, fn(&mut ExperimentConfig), f64, f64); 3] = [
        ("complete", |cfg| cfg.host.n = Grid(vec![100_000]), 2.0, MATCH_TOL_COMPLETE),
        ("hypercube", |cfg| cfg.host.d = Grid(vec![14]), 2.0, MATCH_TOL_HYPERCUBE),
        (
            "clique-union",
            |cfg| {
                cfg.host.d = Grid(vec![50]);
                cfg.host.k = Some(2000);
            },
            1.0,
            MATCH_TOL_CLIQUE_UNION,
        ),
    ];
    for (family, setup, c, tol) in cases {
        let mut cfg = config(Experiment::MatchingConvergence, Some(family), MATCH_SEEDS);
        setup(&mut cfg);
        cfg.params.c = Grid(vec![c]);
        let out = run(&cfg);
        let s = summary(&out);
        let mean = s.floats("mean_ratio")[0];
        let err = s.floats("abs_error")[0];
        let exact = out.main.values("exact").iter().all(|&e| e == "true");
        pass &= err <= tol && exact;
        parts.push(format!("{family} mean {mean:.5} |err| {err:.5} (tol {tol})"));
    }
    verdict(pass, parts.join("; "))
}

fn brute_force_nu(g: &Graph) -> usize {
    fn go(g: &Graph, mask: usize, memo: &mut HashMap<usize, usize>) -> usize {
        if mask == 0 {
            return 0;
        }
        if let Some(&v) = memo.get(&mask) {
            return v;
        }
        let v = mask.trailing_zeros();
        let rest = mask & !(1 << v);
        let mut best = go(g, rest, memo);
        for &w in g.neighbors(v) {
            if rest >> w & 1 == 1 {
                best = best.max(1 + go(g, rest & !(1 << w), memo));
            }
        }
        memo.insert(mask, best);
        best
    }
    go(g, (1 << g.n()) - 1, &mut HashMap::new())
}

fn is_connected(g: &Graph) -> bool {
    let mut seen = vec![false; g.n()];
    let mut stack = vec![0u32];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in g.neighbors(v) {
            if !std::mem::replace(&mut seen[w as usize], true) {
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn pairs(n: u32) -> Vec<(u32, u32)> {
    (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect()
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut connected = 0usize;
    let mut mismatches = 0usize;
    for n in 1..=6u32 {
        let all = pairs(n);
        for bits in 0u32..1 << all.len() {
            let edges: Vec<_> = all.iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, &e)| e).collect();
            let g = Graph::from_edges(n as usize, &edges).unwrap();
            if !is_connected(&g) {
                continue;
            }
            connected += 1;
            mismatches += usize::from(max_matching_blossom(&g).unwrap().size() != brute_force_nu(&g));
        }
    }
    let mut rng = keyed::stream(31, 3);
    let mut random_mismatches = 0usize;
    for _ in 0..ORACLE_RANDOM_GRAPHS {
        let n = rng.random_range(1..=8u32);
        let p: f64 = rng.random();
        let edges: Vec<_> = pairs(n).into_iter().filter(|_| rng.random::<f64>() < p).collect();
        let g = Graph::from_edges(n as usize, &edges).unwrap();
        random_mismatches += usize::from(max_matching_blossom(&g).unwrap().size() != brute_force_nu(&g));
    }
    let mut ks_mismatches = 0usize;
    for _ in 0..ORACLE_KS_INSTANCES {
        let n = rng.random_range(1..=60u32);
        let p = rng.random_range(0.2..4.0) / n as f64;
        let edges: Vec<_> = pairs(n).into_iter().filter(|_| rng.random::<f64>() < p).collect();
        let g = Graph::from_edges(n as usize, &edges).unwrap();
        let red = karp_sipser_reduce(&g);
        let split = red.forced_edges.len() + max_matching_blossom(&red.core).unwrap().size();
        ks_mismatches += usize::from(split != max_matching_blossom(&g).unwrap().size());
    }
    let elapsed = start.elapsed();
    verdict(
        mismatches == 0 && random_mismatches == 0 && ks_mismatches == 0 && elapsed < ORACLE_RUNTIME,
        format!(
            "{connected} connected graphs on <= 6 vertices ({mismatches} mismatches), {ORACLE_RANDOM_GRAPHS} random graphs on <= 8 vertices ({random_mismatches}), {ORACLE_KS_INSTANCES} reductions ({ks_mismatches}), {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut cfg = config(Experiment::BinpoRate, None, 1);
    cfg.host.d = Grid(vec![100, 1000, 10_000, 100_000]);
    cfg.params.c = Grid(vec![2.0]);
    let out = run(&cfg);
    let s = summary(&out);
    let band = s.floats("band_ratio")[0];
    let holds = s.values("chernoff_all_hold")[0] == "true";
    let points = s.values("chernoff_points")[0].to_string();
    let elapsed = start.elapsed();
    let scaled: Vec<String> = out
        .main
        .rows
        .iter()
        .filter(|r| r[0] == r[1])
        .map(|r| format!("{:.4}", r[4].parse::<f64>().unwrap()))
        .collect();
    verdict(
        band <= BINPO_BAND && holds && elapsed < BINPO_RUNTIME,
        format!(
            "tv*sqrt(d) = [{}], band ratio {band:.3}, Chernoff tails hold at {points} points: {holds}, {:.2}s",
            scaled.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let c: f64 = 1.0;
    let cap = 30;
    let r1 = enumerate_gw_measure(c, 1, cap).unwrap();
    let mut pmf_ok = r1.mass.len() == cap + 1;
    let mut pmf = (-c).exp();
    for j in 0..=cap {
        let got = r1.prob(&RootedTree::star(j).canon_code());
        pmf_ok &= (got - pmf).abs() <= GW_POISSON_REL * pmf;
        pmf *= c / (j + 1) as f64;
    }
    let r2 = enumerate_gw_measure(c, 2, 9).unwrap();
    let norm = (r2.enumerated_mass() + r2.tail_mass - 1.0).abs();
    let mut rng = keyed::stream(5, 5);
    let mut freq: HashMap<CanonCode, u64> = HashMap::new();
    for _ in 0..GW_SAMPLES {
        let t = sample_gw_truncated_with(c, 2, &mut rng).unwrap();
        *freq.entry(t.canon_code()).or_default() += 1;
    }
    let mut checked = 0;
    let mut worst = 0.0f64;
    for (code, &p) in &r2.mass {
        if p < GW_MIN_PROB {
            continue;
        }
        let hat = freq.get(code).copied().unwrap_or(0) as f64 / GW_SAMPLES as f64;
        worst = worst.max((hat - p).abs() / (p * (1.0 - p) / GW_SAMPLES as f64).sqrt());
        checked += 1;
    }
    let elapsed = start.elapsed();
    verdict(
        pmf_ok && worst <= GW_SIGMAS && norm <= GW_NORMALIZATION && elapsed < GW_RUNTIME,
        format!(
            "r=1 Poisson pmf match: {pmf_ok}; r=2: {checked} classes >= {GW_MIN_PROB}, worst deviation {worst:.2} sigma; |mass + tail - 1| = {norm:.1e}; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Verdict {
    let mut cfg = config(Experiment::LocalLimit, Some("hypercube"), LOCAL_CUBE_SEEDS);
    cfg.host.d = Grid(vec![8, 10, 12, 14]);
    cfg.params.c = Grid(vec![1.0]);
    cfg.params.r = Grid(vec![1]);
    let out = run(&cfg);
    let medians = summary(&out).floats("median_tv");
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);

    let mut cfg = config(Experiment::LocalLimit, Some("random-regular"), LOCAL_RR_SEEDS);
    cfg.host.n = Grid(vec![LOCAL_RR_N]);
    cfg.host.d = Grid(vec![20, 50, 100]);
    cfg.params.c = Grid(vec![1.0]);
    cfg.params.r = Grid(vec![1, 2]);
    let out = run(&cfg);
    let s = summary(&out);
    let normalized = s.floats("median_tv_over_rate");
    let ds = s.values("d");
    let rs = s.values("r");
    let band = |xs: &[f64]| xs.iter().copied().fold(0.0, f64::max) / xs.iter().copied().fold(f64::INFINITY, f64::min);
    let whole = band(&normalized);
    let per_r: Vec<(&str, f64)> = ["1", "2"]
        .iter()
        .map(|&r| {
            let xs: Vec<f64> = normalized.iter().zip(&rs).filter(|(_, &x)| x == r).map(|(v, _)| *v).collect();
            (r, band(&xs))
        })
        .collect();
    let worst_band = per_r.iter().map(|p| p.1).fold(0.0, f64::max);
    let cells: Vec<String> = normalized
        .iter()
        .zip(ds.iter().zip(&rs))
        .map(|(v, (d, r))| format!("d={d},r={r}: {v:.4}"))
        .collect();
    verdict(
        decreasing && worst_band <= LOCAL_RATE_BAND,
        format!(
            "hypercube median tv {:?} strictly decreasing: {decreasing}; random-regular tv*sqrt(d)/(ln d)^r [{}], band over d per radius {} (limit {LOCAL_RATE_BAND}), pooled over both radii {whole:.2}",
            medians.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>(),
            cells.join(", "),
            per_r.iter().map(|(r, b)| format!("r={r} {b:.2}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn criterion_7() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut fitted = 0.0f64;
    for family in ["hypercube", "clique-union"] {
        let mut cfg = config(Experiment::CouplingRate, Some(family), 1);
        cfg.host.d = Grid(vec![64, 128, 256]);
        cfg.host.k = (family == "clique-union").then_some(1);
        cfg.params.c = Grid(vec![1.0]);
        cfg.params.r = Grid(vec![2]);
        cfg.params.trials = Some(COUPLING_TRIALS);
        let out = run(&cfg);
        let s = summary(&out);
        let rates = s.floats("failure_rate");
        let normalized = s.floats("normalized");
        let recheck: u64 = s.values("recheck_failures").iter().map(|v| v.parse::<u64>().unwrap()).sum();
        let decreasing = rates.windows(2).all(|w| w[1] < w[0]);
        fitted = normalized.iter().copied().fold(fitted, f64::max);
        pass &= normalized.iter().all(|&x| x <= COUPLING_K) && recheck == 0 && decreasing;
        parts.push(format!(
            "{family}: failure {:?} (decreasing: {decreasing}), bound (ln d)^2/sqrt(d) {:?}, recheck failures {recheck}",
            rates.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
            [64, 128, 256].iter().map(|&d| format!("{:.3}", rate(d, 2))).collect::<Vec<_>>()
        ));
    }
    verdict(pass, format!("fitted K = {fitted:.4} <= {COUPLING_K}; {}", parts.join("; ")))
}

fn criterion_8() -> Verdict {
    let mut cfg = config(Experiment::Concentration, Some("hypercube"), CONC_SEEDS);
    cfg.host.d = Grid(vec![12]);
    cfg.params.c = Grid(vec![1.0]);
    cfg.params.r = Grid(vec![1, 2]);
    let out = run(&cfg);
    let s = summary(&out);
    let fractions = s.floats("deviation_fraction");
    let means = s.floats("mean_count");
    let rs = s.values("r");
    let worst = fractions.iter().copied().fold(0.0, f64::max);
    let failing: Vec<String> = fractions
        .iter()
        .zip(means.iter().zip(&rs))
        .filter(|(f, _)| **f > CONC_MAX_FRACTION)
        .map(|(f, (m, r))| format!("r={r} mean {m:.1}: {f:.3}"))
        .collect();
    verdict(
        failing.is_empty() && !fractions.is_empty(),
        format!(
            "{} classes with mean >= 50, worst deviation fraction {worst:.3}{}",
            fractions.len(),
            if failing.is_empty() { String::new() } else { format!("; above {CONC_MAX_FRACTION}: {}", failing.join(", ")) }
        ),
    )
}

fn strip_wall_time(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with(WALL_TIME_PREFIX))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn criterion_9() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut configs = Vec::new();
    let mut theory = config(Experiment::Theory, None, 1);
    theory.params.c = Grid(vec![0.5, 1.0, 2.0, 4.0]);
    configs.push(theory);
    let mut m = config(Experiment::MatchingConvergence, Some("random-regular"), 4);
    m.host.n = Grid(vec![4000]);
    m.host.d = Grid(vec![10]);
    m.params.c = Grid(vec![1.0, 3.0]);
    configs.push(m);
    let mut ll = config(Experiment::LocalLimit, Some("hypercube"), 4);
    ll.host.d = Grid(vec![10]);
    ll.params.c = Grid(vec![1.0]);
    ll.params.r = Grid(vec![1, 2]);
    configs.push(ll);
    let mut b = config(Experiment::BinpoRate, None, 1);
    b.host.d = Grid(vec![100, 1000]);
    b.params.c = Grid(vec![2.0]);
    configs.push(b);
    let mut cp = config(Experiment::CouplingRate, Some("clique-union"), 2);
    cp.host.d = Grid(vec![64]);
    cp.host.k = Some(1);
    cp.params.c = Grid(vec![1.0]);
    cp.params.r = Grid(vec![2]);
    cp.params.trials = Some(1000);
    configs.push(cp);
    let mut conc = config(Experiment::Concentration, Some("hypercube"), 100);
    conc.host.d = Grid(vec![8]);
    conc.params.c = Grid(vec![1.0]);
    conc.params.r = Grid(vec![1]);
    configs.push(conc);

    let mut identical = 0;
    let mut failures = Vec::new();
    for (i, cfg) in configs.iter().enumerate() {
        let mut outputs = Vec::new();
        for (run_idx, threads) in [None, Some(1), Some(2)].into_iter().enumerate() {
            let mut cfg = cfg.clone();
            cfg.threads = threads;
            let path = dir.path().join(format!("cfg{i}_run{run_idx}.csv"));
            let out = run(&cfg);
            write_output(&path, &cfg, &out, Duration::from_secs(run_idx as u64)).unwrap();
            outputs.push(path);
        }
        let replay = dir.path().join(format!("cfg{i}_replay.csv"));
        let code = main_with_args([
            "perclab",
            "replay",
            outputs[0].to_str().unwrap(),
            "--out",
            replay.to_str().unwrap(),
        ]);
        outputs.push(replay);
        let reference = strip_wall_time(&outputs[0]);
        let same = code == 0 && outputs.iter().all(|p| strip_wall_time(p) == reference);
        let summaries_same = outputs.iter().all(|p| {
            let s = perc_cli::output::summary_path(p);
            !s.exists() || std::fs::read(&s).unwrap() == std::fs::read(perc_cli::output::summary_path(&outputs[0])).unwrap()
        });
        if same && summaries_same {
            identical += 1;
        } else {
            failures.push(cfg.experiment.to_string());
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{identical}/{} configs byte-identical across 3 runs (default, 1 and 2 threads) and a replay from the embedded config{}",
            configs.len(),
            if failures.is_empty() { String::new() } else { format!("; differing: {}", failures.join(", ")) }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("theory layer", criterion_1),
        ("matching convergence", criterion_2),
        ("exact-matching oracle equivalence", criterion_3),
        ("binomial vs Poisson rate", criterion_4),
        ("Galton-Watson measure", criterion_5),
        ("local-limit decay", criterion_6),
        ("coupling failure rate", criterion_7),
        ("concentration", criterion_8),
        ("determinism", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        println!(
            "criterion {id} ({name}): {} [{:.1}s] {}",
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
