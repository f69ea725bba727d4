//! Posterior concentration experiments on synthetic Hölder targets.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bart::{run_chain, BartConfig};
use crate::design::Design;
use crate::error::{param, Result};
use crate::kd::empirical_norm;
use crate::stream_rng;

/// Smoothness, dimension and sample-size grid of a rate experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    pub smoothness: f64,
    pub dim: usize,
    pub sizes: Vec<usize>,
    pub replicates: usize,
}

impl RateSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothness > 0.0 && self.smoothness <= 1.0) {
            return Err(param(format!("smoothness must lie in (0, 1], got {}", self.smoothness)));
        }
        if self.dim == 0 {
            return Err(param("dimension must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(param("need at least one replicate"));
        }
        if self.sizes.is_empty() || self.sizes.iter().any(|&n| n < 2) {
            return Err(param("sample sizes must be at least 2"));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(param("sample sizes must be strictly increasing"));
        }
        Ok(())
    }

    fn exponent(&self) -> f64 {
        self.smoothness / (2.0 * self.smoothness + self.dim as f64)
    }

    /// `n^{-nu/(2 nu + p)} sqrt(log n)`.
    pub fn epsilon(&self, n: usize) -> f64 {
        let n = n as f64;
        n.powf(-self.exponent()) * n.ln().sqrt()
    }

    /// Oracle leaf count `n^{p/(2 nu + p)}`.
    pub fn oracle_leaves(&self, n: usize) -> f64 {
        (n as f64).powf(self.dim as f64 / (2.0 * self.smoothness + self.dim as f64))
    }

    /// Slope of `log epsilon_n` against `log n`, ignoring the log factor.
    pub fn theoretical_slope(&self) -> f64 {
        -self.exponent()
    }

    /// `n epsilon_n^2 / log n` along the grid; it must increase without bound.
    pub fn signal_ratios(&self) -> Vec<f64> {
        self.sizes.iter().map(|&n| n as f64 * self.epsilon(n).powi(2) / (n as f64).ln()).collect()
    }

    pub fn signal_ratios_increase(&self) -> bool {
        self.signal_ratios().windows(2).all(|w| w[1] > w[0])
    }
}

/// Bundled regression functions with known Hölder exponent and constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticTarget {
    /// `|x - 1/2|`, Lipschitz.
    AbsCentered,
    /// `sqrt|x - 1/2|`, Hölder of order 1/2.
    SqrtAbsCentered,
    /// `(|x1 - 1/2| + |x2 - 1/2|) / 2` on `[0,1]^2`.
    Additive2d,
    /// Identically 1/4; no variation, so no rate to detect.
    Constant,
}

impl SyntheticTarget {
    pub const ALL: [Self; 4] = [Self::AbsCentered, Self::SqrtAbsCentered, Self::Additive2d, Self::Constant];

    pub fn name(&self) -> &'static str {
        match self {
            Self::AbsCentered => "abs",
            Self::SqrtAbsCentered => "sqrt-abs",
            Self::Additive2d => "additive-2d",
            Self::Constant => "constant",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| param(format!("unknown target {name:?}")))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Additive2d => 2,
            _ => 1,
        }
    }

    pub fn smoothness(&self) -> f64 {
        match self {
            Self::SqrtAbsCentered => 0.5,
            _ => 1.0,
        }
    }

    pub fn holder_constant(&self) -> f64 {
        match self {
            Self::Constant => 0.0,
            Self::Additive2d => std::f64::consts::FRAC_1_SQRT_2,
            _ => 1.0,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Self::SqrtAbsCentered => std::f64::consts::FRAC_1_SQRT_2,
            _ => 0.5,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::AbsCentered => (x[0] - 0.5).abs(),
            Self::SqrtAbsCentered => (x[0] - 0.5).abs().sqrt(),
            Self::Additive2d => 0.5 * ((x[0] - 0.5).abs() + (x[1] - 0.5).abs()),
            Self::Constant => 0.25,
        }
    }

    /// Largest observed `|f(x) - f(y)| / ||x - y||^nu` over random pairs on a
    /// grid with `resolution` points per axis.
    pub fn holder_check<R: Rng + ?Sized>(&self, resolution: usize, pairs: usize, rng: &mut R) -> HolderCheck {
        let p = self.dim();
        let nu = self.smoothness();
        let point = |rng: &mut R| -> Vec<f64> {
            (0..p).map(|_| rng.random_range(0..=resolution) as f64 / resolution as f64).collect()
        };
        let mut max_ratio: f64 = 0.0;
        for _ in 0..pairs {
            let (a, b) = (point(rng), point(rng));
            let dist = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            if dist > 0.0 {
                max_ratio = max_ratio.max((self.eval(&a) - self.eval(&b)).abs() / dist.powf(nu));
            }
        }
        HolderCheck { max_ratio, constant: self.holder_constant(), holds: max_ratio <= self.holder_constant() * (1.0 + 1e-12) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderCheck {
    pub max_ratio: f64,
    pub constant: f64,
    pub holds: bool,
}

/// How design points are laid out for synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    /// Regular grid in one dimension, a lattice with distinct coordinates otherwise.
    Regular,
    /// Independent uniform points; not a fixed regular design.
    Uniform,
}

pub fn synthetic_design<R: Rng + ?Sized>(kind: DesignKind, n: usize, p: usize, rng: &mut R) -> Result<Design> {
    match kind {
        DesignKind::Regular if p == 1 => Design::regular_grid_1d(n),
        DesignKind::Regular => Design::scrambled_grid(n, p),
        DesignKind::Uniform => Design::new(n, p, (0..n * p).map(|_| rng.random::<f64>()).collect()),
    }
}

/// Source of the true regression function.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSource {
    Synthetic { target: SyntheticTarget, design: DesignKind },
    /// Fixed design with known function values; the size grid is ignored.
    Table { design: Design, truth: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationConfig {
    pub spec: RateSpec,
    pub source: TargetSource,
    pub bart: BartConfig,
    pub noise_sd: f64,
    /// Multiple of the oracle leaf count above which tree sizes are flagged.
    pub size_constant: f64,
    pub seed: u64,
    /// Largest tolerated fraction of failed replicates.
    pub max_failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub n: usize,
    pub replicate: usize,
    /// `||posterior mean - f0||_n`.
    pub error: Option<f64>,
    pub mean_max_leaves: Option<f64>,
    /// Fraction of kept sweeps with `max_t K^t > size_constant * K_nu`.
    pub mass_above: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub completed: usize,
    pub mean_error: f64,
    pub se_error: f64,
    pub epsilon: f64,
    pub oracle_leaves: f64,
    pub size_bound: f64,
    pub mean_max_leaves: f64,
    pub mass_above: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub smoothness: f64,
    pub dim: usize,
    pub summaries: Vec<SizeSummary>,
    pub replicates: Vec<ReplicateResult>,
    /// Least-squares slope of log mean error against log n.
    pub slope: Option<f64>,
    pub theoretical_slope: f64,
    pub failure_rate: f64,
    pub too_many_failures: bool,
    /// Mean errors do not increase by more than one standard error.
    pub errors_non_increasing: bool,
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn run_replicate(config: &ConcentrationConfig, n: usize, replicate: usize, task: u64) -> ReplicateResult {
    let mut rng = stream_rng(config.seed, task);
    let mut result = ReplicateResult { n, replicate, error: None, mean_max_leaves: None, mass_above: None, failure: None };
    let data = match &config.source {
        TargetSource::Synthetic { target, design } => synthetic_design(*design, n, target.dim(), &mut rng)
            .map(|d| {
                let truth = (0..n).map(|i| target.eval(d.row(i))).collect::<Vec<_>>();
                (d, truth)
            }),
        TargetSource::Table { design, truth } => Ok((design.clone(), truth.clone())),
    };
    let (design, truth) = match data {
        Ok(v) => v,
        Err(e) => {
            result.failure = Some(e.to_string());
            return result;
        }
    };
    let y: Vec<f64> = truth
        .iter()
        .map(|f| f + config.noise_sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect::<Vec<f64>>();
    match run_chain(&design, &y, &config.bart, &mut rng) {
        Ok(chain) if !chain.trace.records.is_empty() => {
            let bound = config.size_constant * config.spec.oracle_leaves(design.n());
            result.error = Some(empirical_norm(chain.posterior_mean.iter().zip(&truth).map(|(a, b)| a - b)));
            result.mean_max_leaves = Some(chain.mean_max_leaves());
            result.mass_above = Some(chain.trace.mass_above(bound));
        }
        Ok(_) => result.failure = Some("no sweeps kept after burn-in".into()),
        Err(e) => result.failure = Some(e.to_string()),
    }
    result
}

/// Runs every (size, replicate) chain in parallel. Each task draws from its
/// own stream, so the report does not depend on the thread count.
pub fn run_concentration(config: &ConcentrationConfig) -> Result<ConcentrationReport> {
    config.spec.validate()?;
    config.bart.validate()?;
    if !(config.noise_sd >= 0.0 && config.noise_sd.is_finite()) {
        return Err(param("noise standard deviation must be finite and non-negative"));
    }
    let sizes = match &config.source {
        TargetSource::Synthetic { target, .. } => {
            if target.dim() != config.spec.dim {
                return Err(param(format!("target {} is {}-dimensional, expected {}", target.name(), target.dim(), config.spec.dim)));
            }
            config.spec.sizes.clone()
        }
        TargetSource::Table { design, truth } => {
            if truth.len() != design.n() || design.p() != config.spec.dim {
                return Err(param("table target does not match the spec dimension"));
            }
            vec![design.n()]
        }
    };
    let reps = config.spec.replicates;
    let tasks: Vec<(usize, usize)> = sizes.iter().flat_map(|&n| (0..reps).map(move |r| (n, r))).collect();
    let replicates: Vec<ReplicateResult> = tasks
        .par_iter()
        .enumerate()
        .map(|(task, &(n, r))| run_replicate(config, n, r, task as u64))
        .collect();

    let summaries: Vec<SizeSummary> = sizes
        .iter()
        .map(|&n| {
            let ok: Vec<&ReplicateResult> = replicates.iter().filter(|r| r.n == n && r.error.is_some()).collect();
            let m = ok.len() as f64;
            let mean = |f: &dyn Fn(&ReplicateResult) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / m;
            let mean_error = mean(&|r| r.error.unwrap_or(f64::NAN));
            let se_error = if ok.len() > 1 {
                (ok.iter().map(|r| (r.error.unwrap_or(f64::NAN) - mean_error).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
            } else {
                f64::NAN
            };
            let oracle = config.spec.oracle_leaves(n);
            SizeSummary {
                n,
                completed: ok.len(),
                mean_error,
                se_error,
                epsilon: config.spec.epsilon(n),
                oracle_leaves: oracle,
                size_bound: config.size_constant * oracle,
                mean_max_leaves: mean(&|r| r.mean_max_leaves.unwrap_or(f64::NAN)),
                mass_above: mean(&|r| r.mass_above.unwrap_or(f64::NAN)),
            }
        })
        .collect();

    let fitted: Vec<&SizeSummary> = summaries.iter().filter(|s| s.completed > 0 && s.mean_error > 0.0).collect();
    let slope = ols_slope(
        &fitted.iter().map(|s| (s.n as f64).ln()).collect::<Vec<_>>(),
        &fitted.iter().map(|s| s.mean_error.ln()).collect::<Vec<_>>(),
    );
    let failures = replicates.iter().filter(|r| r.failure.is_some()).count();
    let failure_rate = failures as f64 / replicates.len().max(1) as f64;
    let errors_non_increasing = fitted.windows(2).all(|w| {
        let slack = if w[0].se_error.is_finite() { w[0].se_error.max(w[1].se_error) } else { 0.0 };
        w[1].mean_error <= w[0].mean_error + slack
    });
    Ok(ConcentrationReport {
        smoothness: config.spec.smoothness,
        dim: config.spec.dim,
        summaries,
        replicates,
        slope,
        theoretical_slope: config.spec.theoretical_slope(),
        failure_rate,
        too_many_failures: failure_rate > config.max_failure_rate,
        errors_non_increasing,
    })
}
