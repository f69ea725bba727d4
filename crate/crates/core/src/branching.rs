//! Tail bounds on the extinction time and total progeny of the tree-growing
//! branching process, plus the exact progeny law of the homogeneous case.
//!
//! All products of probabilities and factorials are accumulated as logs.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{param, Result};
use crate::schedule::{ScheduleKind, SplitSchedule};

/// Per-generation probabilities `q_t` of the two-point offspring law on
/// `{0, 2}`, with pgf `g_t(s) = (1 - q_t) + q_t s^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringLaw {
    q: Vec<f64>,
}

impl OffspringLaw {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if let Some(bad) = q.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(param(format!("offspring probability {bad} outside [0,1]")));
        }
        Ok(Self { q })
    }

    /// Generations `0..len` of a split schedule (generation = node depth).
    pub fn from_schedule(schedule: &SplitSchedule, len: usize) -> Self {
        Self { q: (0..len as u32).map(|d| schedule.split_probability(d)).collect() }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn split_probability(&self, t: usize) -> f64 {
        self.q[t]
    }

    /// `g_t(s)`.
    pub fn pgf(&self, t: usize, s: f64) -> f64 {
        1.0 - self.q[t] + self.q[t] * s * s
    }

    /// `g_t'(1) = 2 q_t`, the mean offspring count.
    pub fn mean(&self, t: usize) -> f64 {
        2.0 * self.q[t]
    }

    /// `g_t''(0) = 2 q_t`.
    pub fn second_derivative_at_zero(&self, t: usize) -> f64 {
        2.0 * self.q[t]
    }
}

/// Closed form `(2 alpha)^t [(t+1)!]^(-gamma)`.
///
/// This is the mean generation size when the offspring law producing
/// generation `t` splits with `alpha / (1 + t)^gamma`, so a node at depth `d`
/// splits with `alpha / (2 + d)^gamma`. Under the depth-indexed polynomial
/// schedule (root splits with `alpha`) the mean is instead
/// `(2 alpha)^t (t!)^(-gamma)`; see [`generation_mean`].
pub fn expected_generation_size(alpha: f64, gamma: f64, t: u32) -> f64 {
    (t as f64 * (2.0 * alpha).ln() - gamma * ln_factorial(t as u64 + 1)).exp()
}

/// Exact `E Z_t = prod_{d < t} 2 p(d)` for trees grown from `schedule`.
pub fn generation_mean(schedule: &SplitSchedule, t: u32) -> f64 {
    log_generation_mean(schedule, t).exp()
}

fn log_generation_mean(schedule: &SplitSchedule, t: u32) -> f64 {
    (0..t).map(|d| (2.0 * schedule.split_probability(d)).ln()).sum()
}

/// Markov bound `P(T_ex > t) = P(Z_t >= 1) <= E Z_t`, clamped to 1.
///
/// Polynomial schedules use the closed form of
/// [`expected_generation_size`]; every other schedule uses the exact
/// product [`generation_mean`].
pub fn markov_extinction_bound(schedule: &SplitSchedule, t: u32) -> f64 {
    let raw = match schedule.kind {
        ScheduleKind::PolynomialDecay { alpha, gamma } if schedule.max_depth.is_none() => {
            expected_generation_size(alpha, gamma, t)
        }
        _ => generation_mean(schedule, t),
    };
    raw.min(1.0)
}

/// How the first offspring law enters the extinction-time bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootConvention {
    /// `g_0(s) = s`: the root is treated as having exactly one offspring.
    Forced,
    /// `g_0` is the two-point law with `q_0 = p(0)`.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionBound {
    pub value: f64,
    /// Some `g_j'(1) = 0` before the horizon: the process is extinct by then
    /// almost surely and the bound is reported as 0.
    pub degenerate: bool,
}

/// Extinction-time bound for heterogeneous branching processes:
/// `P(T_ex > t) <= [1/P_t + 1/2 sum_{j<t} g_j''(0) / (g_j'(1) P_{j+1})]^{-1}`
/// with `P_t = prod_{j<t} g_j'(1)`.
pub fn agresti_extinction_bound(law: &OffspringLaw, t: usize, convention: RootConvention) -> Result<ExtinctionBound> {
    if t == 0 {
        return Err(param("extinction horizon must be at least 1"));
    }
    if law.len() < t {
        return Err(param(format!("offspring law covers {} generations, horizon is {t}", law.len())));
    }
    let forced = |j: usize| j == 0 && convention == RootConvention::Forced;
    let mut log_inv_p = 0.0; // log(1 / P_j)
    let mut terms = Vec::with_capacity(t + 1);
    for j in 0..t {
        let (g1, g2) = if forced(j) { (1.0, 0.0) } else { (law.mean(j), law.second_derivative_at_zero(j)) };
        if g1 == 0.0 {
            return Ok(ExtinctionBound { value: 0.0, degenerate: true });
        }
        log_inv_p -= g1.ln();
        if g2 > 0.0 {
            terms.push((0.5 * g2 / g1).ln() + log_inv_p);
        }
    }
    terms.push(log_inv_p);
    Ok(ExtinctionBound { value: (-log_sum_exp(&terms)).exp(), degenerate: false })
}

/// Shape `(t^gamma / (2 alpha e^gamma))^(-t)` of the polynomial-schedule
/// extinction tail, up to an unspecified constant factor.
pub fn extinction_decay_shape(alpha: f64, gamma: f64, t: u32) -> f64 {
    let t = t as f64;
    if t == 0.0 {
        return 1.0;
    }
    (-t * (gamma * t.ln() - (2.0 * alpha).ln() - gamma)).exp()
}

/// `mu(k) = sum_{i=1}^k p(d_i)` where `d_i = floor(log2 i)` is the depth of the
/// `i`-th node of the complete binary tree in breadth-first order.
pub fn mu_prefix(schedule: &SplitSchedule, k: u64) -> f64 {
    let mut total = 0.0;
    let mut depth = 0u32;
    let mut start = 1u64;
    while start <= k {
        let width = 1u64 << depth;
        let taken = width.min(k - start + 1);
        total += taken as f64 * schedule.split_probability(depth);
        start += width;
        depth += 1;
    }
    total
}

/// Choice of the free parameter `c` in the progeny tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChernoffMode {
    Fixed(f64),
    /// `c = log(k) / 2`.
    HalfLogK,
    /// Minimizer `c* = log(k / (2 mu)) / 2` when `k > 2 mu`, else `HalfLogK`.
    Optimized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernoffBound {
    pub c: f64,
    pub mu: f64,
    pub log_value: f64,
    /// Unclamped `exp(-k c + (e^{2c} - 1) mu)`.
    pub value: f64,
    pub clamped: f64,
    pub vacuous: bool,
}

/// `P(X > k) <= exp(-k c + (e^{2c} - 1) mu(k))` for any `c > 0`.
pub fn chernoff_progeny_bound(schedule: &SplitSchedule, k: u64, mode: ChernoffMode) -> Result<ChernoffBound> {
    if k < 1 {
        return Err(param("progeny threshold k must be at least 1"));
    }
    let mu = mu_prefix(schedule, k);
    let kf = k as f64;
    let half_log = 0.5 * kf.ln();
    let c = match mode {
        ChernoffMode::Fixed(c) if c > 0.0 && c.is_finite() => c,
        ChernoffMode::Fixed(c) => return Err(param(format!("Chernoff parameter c must be positive, got {c}"))),
        ChernoffMode::HalfLogK => half_log,
        ChernoffMode::Optimized if mu == 0.0 => f64::INFINITY,
        ChernoffMode::Optimized if kf > 2.0 * mu => 0.5 * (kf / (2.0 * mu)).ln(),
        ChernoffMode::Optimized => half_log,
    };
    let log_value = if c.is_infinite() { f64::NEG_INFINITY } else { -kf * c + (2.0 * c).exp_m1() * mu };
    let value = log_value.exp();
    Ok(ChernoffBound { c, mu, log_value, value, clamped: value.min(1.0), vacuous: value > 1.0 })
}

/// Exact total-progeny law of the homogeneous process with split
/// probability `p`: zero for even `k`, otherwise
/// `(1/k) C(k, m) p^m (1-p)^(k-m)` with `m = (k-1)/2`.
pub fn dwass_progeny_pmf(p: f64, k: u64) -> f64 {
    if k == 0 || k.is_multiple_of(2) {
        return 0.0;
    }
    let m = (k - 1) / 2;
    let log = ln_binomial(k, m) - (k as f64).ln() + xlogy(m as f64, p) + xlogy((k - m) as f64, 1.0 - p);
    log.exp()
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRateRow {
    pub k: u64,
    pub mu: f64,
    /// `(1/2 - a) log k`.
    pub threshold: f64,
    pub holds: bool,
    /// `exp(-a k log k)`, valid as a bound on `P(X > k)` where `holds`.
    pub tail_bound: f64,
}

/// Outcome of checking `mu(k) <= (1/2 - a) log k` over `k_min..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRateReport {
    pub a: f64,
    pub k_min: u64,
    pub k_max: u64,
    /// Smallest `k` such that the condition holds on all of `k..=k_max`.
    pub holds_from: Option<u64>,
    /// `holds_from`, when the condition is also proven for every `k > k_max`
    /// from the limit of `mu`.
    pub certified_from: Option<u64>,
    pub failures: u64,
    pub last_failure: Option<u64>,
    /// Rows at a log-spaced subset of the range (every `k` for short ranges).
    pub rows: Vec<TargetRateRow>,
}

impl TargetRateReport {
    pub fn fails_everywhere(&self) -> bool {
        self.failures == self.k_max - self.k_min + 1
    }
}

const FULL_ROW_LIMIT: u64 = 4096;
const EXTENSION_LIMIT: f64 = 1e7;

/// Checks the sufficient condition under which the `c = log(k)/2` progeny
/// bound falls below `exp(-a k log k)`.
pub fn target_rate_check(schedule: &SplitSchedule, a: f64, k_min: u64, k_max: u64) -> Result<TargetRateReport> {
    if !(a > 0.0 && a < 0.5) {
        return Err(param(format!("rate constant a must lie in (0, 1/2), got {a}")));
    }
    if k_min < 1 || k_max < k_min {
        return Err(param(format!("invalid range {k_min}..={k_max}")));
    }
    let slack = 0.5 - a;
    let keep_all = k_max - k_min < FULL_ROW_LIMIT;
    let mut next_logged = k_min;
    let mut rows = Vec::new();
    let mut failures = 0;
    let mut last_failure = None;
    let mut mu = mu_prefix(schedule, k_min);
    for k in k_min..=k_max {
        if k > k_min {
            mu += schedule.split_probability(63 - k.leading_zeros());
        }
        let threshold = slack * (k as f64).ln();
        let holds = mu <= threshold;
        if !holds {
            failures += 1;
            last_failure = Some(k);
        }
        if keep_all || k >= next_logged || k == k_max {
            let kf = k as f64;
            rows.push(TargetRateRow { k, mu, threshold, holds, tail_bound: (-a * kf * kf.ln()).exp() });
            next_logged = ((k as f64) * 1.05).ceil() as u64 + 1;
        }
    }
    let holds_from = match last_failure {
        None => Some(k_min),
        Some(k) if k < k_max => Some(k + 1),
        Some(_) => None,
    };
    let certified_from = holds_from.filter(|_| {
        let Some(limit) = schedule.prefix_sum_limit() else { return false };
        let k_sup = (limit / slack).exp();
        if k_sup <= (k_max + 1) as f64 {
            return true;
        }
        if k_sup > EXTENSION_LIMIT {
            return false;
        }
        let mut mu = mu;
        ((k_max + 1)..=(k_sup.ceil() as u64)).all(|k| {
            mu += schedule.split_probability(63 - k.leading_zeros());
            mu <= slack * (k as f64).ln()
        })
    });
    Ok(TargetRateReport { a, k_min, k_max, holds_from, certified_from, failures, last_failure, rows })
}
