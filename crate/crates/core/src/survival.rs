//! Monte Carlo estimates of tree-size survival functions and their
//! comparison with the analytic bounds.
//!
//! Draws are split into fixed chunks of [`CHUNK_DRAWS`]; chunk `c` uses stream
//! `c` of the seeded generator. Chunks run on the rayon pool and merge by
//! summation, so results depend on the seed and draw count only, never on
//! the number of threads.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::branching::{
    agresti_extinction_bound, chernoff_progeny_bound, markov_extinction_bound, target_rate_check, ChernoffMode,
    OffspringLaw, RootConvention,
};
use crate::error::{param, Result};
use crate::prior::sample_shape;
use crate::schedule::SplitSchedule;
use crate::stream_rng;

pub const CHUNK_DRAWS: u64 = 1 << 16;

/// Histograms of total progeny, extinction time and generation sizes over
/// a batch of prior draws.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorSample {
    pub draws: u64,
    /// Draws stopped at the node cap; they count as exceeding every threshold.
    pub truncated: u64,
    /// `progeny_counts[x]` = number of draws with `X = x`.
    pub progeny_counts: Vec<u64>,
    /// `extinction_counts[t]` = number of draws with `T_ex = t`.
    pub extinction_counts: Vec<u64>,
    pub generation_sums: Vec<f64>,
    pub generation_square_sums: Vec<f64>,
}

/// A survival probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    fn binomial(hits: u64, n: u64) -> Self {
        let p = hits as f64 / n as f64;
        Self { value: p, se: (p * (1.0 - p) / n as f64).sqrt() }
    }
}

fn bump(v: &mut Vec<u64>, i: usize) {
    if v.len() <= i {
        v.resize(i + 1, 0);
    }
    v[i] += 1;
}

fn add_into<T: Copy + Default + std::ops::AddAssign>(dst: &mut Vec<T>, src: &[T]) {
    if dst.len() < src.len() {
        dst.resize(src.len(), T::default());
    }
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

impl PriorSample {
    fn merge(mut self, other: Self) -> Self {
        self.draws += other.draws;
        self.truncated += other.truncated;
        add_into(&mut self.progeny_counts, &other.progeny_counts);
        add_into(&mut self.extinction_counts, &other.extinction_counts);
        add_into(&mut self.generation_sums, &other.generation_sums);
        add_into(&mut self.generation_square_sums, &other.generation_square_sums);
        self
    }

    fn tail(counts: &[u64], above: usize) -> u64 {
        counts.iter().skip(above + 1).sum()
    }

    /// Empirical `P(X > k)`.
    pub fn progeny_survival(&self, k: u64) -> Estimate {
        Estimate::binomial(Self::tail(&self.progeny_counts, k as usize) + self.truncated, self.draws)
    }

    /// Empirical `P(K > k)` for the leaf count `K = (X + 1) / 2`.
    pub fn leaf_survival(&self, k: u64) -> Estimate {
        let hits: u64 = self
            .progeny_counts
            .iter()
            .enumerate()
            .filter(|(x, _)| (*x as u64).div_ceil(2) > k)
            .map(|(_, c)| c)
            .sum();
        Estimate::binomial(hits + self.truncated, self.draws)
    }

    /// Empirical `P(T_ex > t)`.
    pub fn extinction_survival(&self, t: u64) -> Estimate {
        Estimate::binomial(Self::tail(&self.extinction_counts, t as usize) + self.truncated, self.draws)
    }

    /// Empirical `P(X = k)` over completed draws.
    pub fn progeny_pmf(&self, k: u64) -> f64 {
        self.progeny_counts.get(k as usize).copied().unwrap_or(0) as f64 / self.draws as f64
    }

    /// Sample mean of `Z_t` and its standard error.
    pub fn generation_mean(&self, t: usize) -> Estimate {
        let n = self.draws as f64;
        let s = self.generation_sums.get(t).copied().unwrap_or(0.0);
        let s2 = self.generation_square_sums.get(t).copied().unwrap_or(0.0);
        let mean = s / n;
        let var = ((s2 / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
        Estimate { value: mean, se: (var / n).sqrt() }
    }
}

/// Draws `n_draws` tree shapes from the prior.
pub fn simulate_prior(schedule: &SplitSchedule, n_draws: u64, seed: u64, max_nodes: usize) -> Result<PriorSample> {
    if n_draws == 0 {
        return Err(param("number of draws must be at least 1"));
    }
    let chunks = n_draws.div_ceil(CHUNK_DRAWS);
    let sample = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<PriorSample> {
            let mut rng = stream_rng(seed, c);
            let len = CHUNK_DRAWS.min(n_draws - c * CHUNK_DRAWS);
            let mut out = PriorSample { draws: len, ..Default::default() };
            for _ in 0..len {
                match sample_shape(schedule, &mut rng, max_nodes) {
                    Ok(m) => {
                        bump(&mut out.progeny_counts, m.total_nodes);
                        bump(&mut out.extinction_counts, m.extinction_time);
                        let sq: Vec<f64> = m.generation_sizes.iter().map(|z| (*z as f64).powi(2)).collect();
                        let z: Vec<f64> = m.generation_sizes.iter().map(|z| *z as f64).collect();
                        add_into(&mut out.generation_sums, &z);
                        add_into(&mut out.generation_square_sums, &sq);
                    }
                    Err(crate::Error::Truncated { .. }) => out.truncated += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sample.into_iter().fold(PriorSample::default(), PriorSample::merge))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    Agresti,
    Markov,
    /// Progeny bound at `c = log(k) / 2`.
    ChernoffFixedC,
    ChernoffOptimalC,
    /// `exp(-a k log k)`, valid where the rate condition is certified.
    TargetRate,
}

impl BoundMethod {
    pub fn label(self) -> &'static str {
        match self {
            Self::Agresti => "agresti",
            Self::Markov => "markov",
            Self::ChernoffFixedC => "chernoff_fixed_c",
            Self::ChernoffOptimalC => "chernoff_optimal_c",
            Self::TargetRate => "target_rate",
        }
    }

    /// Whether the grid indexes extinction time `t` (else progeny `k`).
    pub fn is_extinction(self) -> bool {
        matches!(self, Self::Agresti | Self::Markov)
    }
}

/// Analytic bound vs. Monte Carlo survival along a grid, for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub method: BoundMethod,
    pub grid: Vec<u64>,
    pub analytic: Vec<f64>,
    pub clamped: Vec<f64>,
    pub vacuous: Vec<bool>,
    /// Rows where the bound is claimed to hold; only the target rate bound
    /// has uncertified rows.
    pub applicable: Vec<bool>,
    pub empirical: Vec<f64>,
    pub se: Vec<f64>,
}

/// First grid point where a bound falls short of the empirical survival.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub method: BoundMethod,
    pub grid: u64,
    pub bound: f64,
    pub empirical: f64,
    pub se: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} bound violated at {}: bound {:.6} < empirical {:.6} (se {:.2e})",
            self.method.label(),
            self.grid,
            self.bound,
            self.empirical,
            self.se
        )
    }
}

impl BoundReport {
    /// Checks `clamped + z * se >= empirical` on every applicable row.
    pub fn first_violation(&self, z: f64) -> Option<Violation> {
        (0..self.grid.len()).find(|&i| self.applicable[i] && self.clamped[i] + z * self.se[i] < self.empirical[i]).map(
            |i| Violation {
                method: self.method,
                grid: self.grid[i],
                bound: self.clamped[i],
                empirical: self.empirical[i],
                se: self.se[i],
            },
        )
    }
}

/// Options for [`monte_carlo_survival`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalConfig {
    pub progeny_grid: Vec<u64>,
    pub extinction_grid: Vec<u64>,
    pub draws: u64,
    pub seed: u64,
    pub max_nodes: usize,
    pub convention: RootConvention,
    /// Rate constant for the target-rate rows.
    pub rate_constant: f64,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        Self {
            progeny_grid: (1..200).collect(),
            extinction_grid: (1..=10).collect(),
            draws: 100_000,
            seed: 0,
            max_nodes: crate::prior::DEFAULT_MAX_NODES,
            convention: RootConvention::Direct,
            rate_constant: 0.25,
        }
    }
}

/// Samples the prior and lays every analytic bound next to the empirical
/// survival it should dominate.
pub fn monte_carlo_survival(schedule: &SplitSchedule, config: &SurvivalConfig) -> Result<(PriorSample, Vec<BoundReport>)> {
    let sample = simulate_prior(schedule, config.draws, config.seed, config.max_nodes)?;
    let reports = bound_reports(schedule, &sample, config)?;
    Ok((sample, reports))
}

/// Bound reports for an existing sample.
pub fn bound_reports(schedule: &SplitSchedule, sample: &PriorSample, config: &SurvivalConfig) -> Result<Vec<BoundReport>> {
    let t_max = config.extinction_grid.iter().copied().max().unwrap_or(0) as usize;
    let law = OffspringLaw::from_schedule(schedule, t_max.max(1));
    let mut reports = Vec::new();

    for method in [BoundMethod::Agresti, BoundMethod::Markov] {
        let mut r = empty_report(method);
        for &t in &config.extinction_grid {
            let analytic = match method {
                BoundMethod::Agresti => agresti_extinction_bound(&law, t as usize, config.convention)?.value,
                _ => markov_extinction_bound(schedule, t as u32),
            };
            push_row(&mut r, t, analytic, true, sample.extinction_survival(t));
        }
        reports.push(r);
    }

    let k_max = config.progeny_grid.iter().copied().max().unwrap_or(1);
    let rate = target_rate_check(schedule, config.rate_constant, 1, k_max.max(1))?;
    let certified = rate.certified_from;
    for (method, mode) in [
        (BoundMethod::ChernoffFixedC, ChernoffMode::HalfLogK),
        (BoundMethod::ChernoffOptimalC, ChernoffMode::Optimized),
    ] {
        let mut r = empty_report(method);
        for &k in &config.progeny_grid {
            let b = chernoff_progeny_bound(schedule, k, mode)?;
            push_row(&mut r, k, b.value, true, sample.progeny_survival(k));
        }
        reports.push(r);
    }
    let mut r = empty_report(BoundMethod::TargetRate);
    for &k in &config.progeny_grid {
        let kf = k as f64;
        let ok = certified.is_some_and(|from| k >= from);
        push_row(&mut r, k, (-config.rate_constant * kf * kf.ln()).exp(), ok, sample.progeny_survival(k));
    }
    reports.push(r);
    Ok(reports)
}

fn empty_report(method: BoundMethod) -> BoundReport {
    BoundReport {
        method,
        grid: vec![],
        analytic: vec![],
        clamped: vec![],
        vacuous: vec![],
        applicable: vec![],
        empirical: vec![],
        se: vec![],
    }
}

fn push_row(r: &mut BoundReport, grid: u64, analytic: f64, applicable: bool, est: Estimate) {
    r.grid.push(grid);
    r.analytic.push(analytic);
    r.clamped.push(analytic.min(1.0));
    r.vacuous.push(analytic > 1.0);
    r.applicable.push(applicable);
    r.empirical.push(est.value);
    r.se.push(est.se);
}

/// Writes reports as CSV with columns `grid,method,analytic,empirical,se,vacuous`.
pub fn write_bound_csv<W: Write>(reports: &[BoundReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["grid", "method", "analytic", "empirical", "se", "vacuous"])?;
    for r in reports {
        for i in 0..r.grid.len() {
            w.write_record([
                r.grid[i].to_string(),
                r.method.label().to_string(),
                format!("{:e}", r.analytic[i]),
                format!("{:e}", r.empirical[i]),
                format!("{:e}", r.se[i]),
                r.vacuous[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
