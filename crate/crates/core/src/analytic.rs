//! Closed-form and exact-numeric layer.
//!
//! `y(c)` is the smallest root in `(0, 1)` of `y = exp(-c exp(-c y))` and
//! `F(c) = 1 - (y + exp(-c y) + c y exp(-c y)) / 2` is the limiting matching
//! fraction of percolated regular graphs with mean degree `c`. The module
//! also computes exact total variation distances between binomial and
//! Poisson laws and exact upper tails.

/// Grid resolution of the sign-change scan in [`solve_y`].
pub const SCAN_POINTS: usize = 10_000;
/// Roots closer than this to 1 are flagged as near the boundary.
pub const NEAR_BOUNDARY: f64 = 1e-9;
/// Tail mass neglected when truncating pmf sums.
pub const TAIL_EPS: f64 = 1e-15;

/// `exp(-c exp(-c y)) - y`; positive at 0, negative at 1.
pub fn fixed_point_gap(c: f64, y: f64) -> f64 {
    (-c * (-c * y).exp()).exp() - y
}

/// Smallest root of [`fixed_point_gap`] in `(0, 1)`: scan a uniform grid for
/// the first sign change, then bisect the bracket.
///
/// The fixed-point equation has three roots for `c > e`, so the scan (not a local
/// method) is what guarantees the smallest one.
pub fn solve_y(c: f64) -> f64 {
    assert!(c > 0.0, "solve_y needs c > 0, got {c}");
    let mut lo = 0.0;
    let mut hi = 1.0;
    for i in 1..=SCAN_POINTS {
        let y = i as f64 / SCAN_POINTS as f64;
        let g = fixed_point_gap(c, y);
        if g == 0.0 {
            return y;
        }
        if g < 0.0 {
            hi = y;
            break;
        }
        lo = y;
    }
    // bisect until the bracket cannot be split; tiny roots (large c) need
    // the relative precision
    for _ in 0..2200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fixed_point_gap(c, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if fixed_point_gap(c, lo).abs() <= fixed_point_gap(c, hi).abs() {
        lo
    } else {
        hi
    }
}

/// Damped iteration `y <- (1-a) y + a exp(-c exp(-c y))` from `y = 0`.
///
/// The map is increasing, so the iterates increase monotonically to the
/// smallest fixed point. Stops when an update no longer moves `y`.
pub fn fixed_point_y(c: f64, damping: f64, max_steps: usize) -> f64 {
    assert!(damping > 0.0 && damping <= 1.0);
    let mut y = 0.0f64;
    for _ in 0..max_steps {
        let next = (1.0 - damping) * y + damping * (-c * (-c * y).exp()).exp();
        if next == y {
            break;
        }
        y = next;
    }
    y
}

/// `F(c)` evaluated at a given root `y`.
pub fn matching_fraction(c: f64, y: f64) -> f64 {
    let e = (-c * y).exp();
    1.0 - (y + e + c * y * e) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsConstants {
    pub c: f64,
    pub y: f64,
    pub f: f64,
    /// `|y - exp(-c exp(-c y))|`.
    pub residual: f64,
    /// The root is within [`NEAR_BOUNDARY`] of 1 (happens as `c -> 0`).
    pub near_boundary: bool,
}

pub fn eval_f(c: f64) -> KsConstants {
    let y = solve_y(c);
    KsConstants {
        c,
        y,
        f: matching_fraction(c, y),
        residual: fixed_point_gap(c, y).abs(),
        near_boundary: 1.0 - y < NEAR_BOUNDARY,
    }
}

/// Neumaier-compensated sum of the values sorted by magnitude, smallest first.
pub fn sum_smallest_first(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

/// `ln P(Bin(n, p) = k)` for `k = 0..=kmax` (entries past `n` are `-inf`).
pub fn binomial_ln_pmf(n: u64, p: f64, kmax: u64) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; kmax as usize + 1];
    if p <= 0.0 {
        out[0] = 0.0;
        return out;
    }
    if p >= 1.0 {
        if n <= kmax {
            out[n as usize] = 0.0;
        }
        return out;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let mut ln_choose = 0.0f64;
    for k in 0..=kmax.min(n) {
        if k > 0 {
            ln_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        out[k as usize] = ln_choose + k as f64 * lp + (n - k) as f64 * lq;
    }
    out
}

/// `ln P(Po(c) = k)` for `k = 0..=kmax`.
pub fn poisson_ln_pmf(c: f64, kmax: u64) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; kmax as usize + 1];
    if c <= 0.0 {
        out[0] = 0.0;
        return out;
    }
    let lc = c.ln();
    let mut ln_fact = 0.0f64;
    for k in 0..=kmax {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        out[k as usize] = -c + k as f64 * lc - ln_fact;
    }
    out
}

/// Smallest `K` beyond which both `Bin(n, p)` and `Po(c)` carry less than
/// [`TAIL_EPS`] mass.
pub fn truncation_point(n: u64, p: f64, c: f64) -> u64 {
    let bin_mean = n as f64 * p.clamp(0.0, 1.0);
    let mut k = (bin_mean.max(c) + 10.0 * (bin_mean.max(c)).sqrt() + 10.0).ceil() as u64;
    loop {
        let bin_ok = k >= n || {
            let lp = binomial_ln_pmf(n, p, k + 1);
            let ratio = (n - k - 1) as f64 / (k + 2) as f64 * p / (1.0 - p);
            ratio < 1.0 && lp[k as usize + 1].exp() / (1.0 - ratio) < TAIL_EPS
        };
        let po_ok = c <= 0.0 || {
            let ratio = c / (k + 2) as f64;
            let lp = -c + (k + 1) as f64 * c.ln() - ln_factorial(k + 1);
            ratio < 1.0 && lp.exp() / (1.0 - ratio) < TAIL_EPS
        };
        if bin_ok && po_ok {
            return k;
        }
        k = k + 1 + k / 4;
    }
}

fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|j| (j as f64).ln()).sum()
}

/// Half the L1 distance between two pmfs on `0..`, the shorter one padded
/// with zeros.
pub fn tv_discrete(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    let terms = (0..len)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .collect();
    0.5 * sum_smallest_first(terms)
}

/// Exact `d_TV(Bin(d', p), Po(c))`, the binomial extended by zeros past `d'`.
pub fn tv_bin_po(d_prime: u64, p: f64, c: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "p = {p} outside [0, 1]");
    assert!(c >= 0.0, "c = {c} negative");
    let k = truncation_point(d_prime, p, c);
    let bin: Vec<f64> = binomial_ln_pmf(d_prime, p, k).into_iter().map(f64::exp).collect();
    let po: Vec<f64> = poisson_ln_pmf(c, k).into_iter().map(f64::exp).collect();
    tv_discrete(&bin, &po).clamp(0.0, 1.0)
}

/// `P(Bin(n, p) >= t)` summed exactly over the upper tail.
pub fn binomial_tail_ge(n: u64, p: f64, t: f64) -> f64 {
    let start = t.max(0.0).ceil() as u64;
    if start > n {
        return 0.0;
    }
    let lp = binomial_ln_pmf(n, p, n);
    sum_smallest_first(lp[start as usize..].iter().map(|x| x.exp()).collect())
}

/// `P(Po(c) >= t)` summed over the upper tail until terms vanish.
pub fn poisson_tail_ge(c: f64, t: f64) -> f64 {
    let start = t.max(0.0).ceil() as u64;
    if c <= 0.0 {
        return if start == 0 { 1.0 } else { 0.0 };
    }
    let kmax = start.max(truncation_point(0, 0.0, c)) + 64;
    let lp = poisson_ln_pmf(c, kmax);
    sum_smallest_first(lp[start as usize..].iter().map(|x| x.exp()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChernoffCheck {
    pub binom_tail: f64,
    pub po_tail: f64,
    /// `exp(-t/3)`.
    pub bound: f64,
    /// `None` when `t < 10c`, where the inequality is not claimed.
    pub holds: Option<bool>,
}

/// Exact tails `P(Bin(d', p) >= t)` and `P(Po(c) >= t)` against `exp(-t/3)`.
/// The range `d' ∈ [d - d^{1/4}, d]` is the caller's responsibility.
pub fn chernoff_check(d_prime: u64, p: f64, c: f64, t: f64) -> ChernoffCheck {
    let binom_tail = binomial_tail_ge(d_prime, p, t);
    let po_tail = poisson_tail_ge(c, t);
    let bound = (-t / 3.0).exp();
    let holds = (t >= 10.0 * c).then_some(binom_tail <= bound && po_tail <= bound);
    ChernoffCheck {
        binom_tail,
        po_tail,
        bound,
        holds,
    }
}
