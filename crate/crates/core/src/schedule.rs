//! Depth-indexed node splitting probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Family of the split schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `p(d) = alpha / (1 + d)^gamma`.
    PolynomialDecay { alpha: f64, gamma: f64 },
    /// `p(d) = xi * alpha^d` with `0 < alpha < 1/2`.
    GeometricDecay { alpha: f64, xi: f64 },
    /// Explicit per-depth table; depths past the end reuse the last entry.
    Table { probs: Vec<f64> },
}

/// Probability that a node at depth `d` splits.
///
/// An optional depth cap forces `p(d) = 0` for `d >= max_depth`, which
/// truncates the tree at depth `max_depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSchedule {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<u32>,
}

impl SplitSchedule {
    pub fn polynomial(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(param(format!("polynomial alpha must lie in (0,1), got {alpha}")));
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(param(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        Ok(Self { kind: ScheduleKind::PolynomialDecay { alpha, gamma }, max_depth: None })
    }

    /// Geometric decay with the default base factor `xi = alpha`, i.e. `p(d) = alpha^(d+1)`.
    pub fn geometric(alpha: f64) -> Result<Self> {
        Self::geometric_with_base(alpha, alpha)
    }

    pub fn geometric_with_base(alpha: f64, xi: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(param(format!("geometric alpha must lie in (0,1/2), got {alpha}")));
        }
        if !(xi > 0.0 && xi <= 1.0) {
            return Err(param(format!("base factor xi must lie in (0,1], got {xi}")));
        }
        Ok(Self { kind: ScheduleKind::GeometricDecay { alpha, xi }, max_depth: None })
    }

    pub fn table(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(param("split probability table is empty"));
        }
        if let Some(bad) = probs.iter().find(|q| !(**q >= 0.0 && **q <= 1.0)) {
            return Err(param(format!("table entry {bad} outside [0,1]")));
        }
        Ok(Self { kind: ScheduleKind::Table { probs }, max_depth: None })
    }

    /// Every node splits with the same probability `p`.
    pub fn homogeneous(p: f64) -> Result<Self> {
        Self::table(vec![p])
    }

    pub fn with_max_depth(mut self, max_depth: u32) -> Self {
        self.max_depth = Some(max_depth);
        self
    }

    /// Re-checks the parameter ranges, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = match &self.kind {
            ScheduleKind::PolynomialDecay { alpha, gamma } => Self::polynomial(*alpha, *gamma),
            ScheduleKind::GeometricDecay { alpha, xi } => Self::geometric_with_base(*alpha, *xi),
            ScheduleKind::Table { probs } => Self::table(probs.clone()),
        };
        rebuilt.map(|_| ())
    }

    pub fn split_probability(&self, depth: u32) -> f64 {
        if self.max_depth.is_some_and(|cap| depth >= cap) {
            return 0.0;
        }
        match &self.kind {
            ScheduleKind::PolynomialDecay { alpha, gamma } => {
                alpha / (1.0 + depth as f64).powf(*gamma)
            }
            ScheduleKind::GeometricDecay { alpha, xi } => xi * alpha.powi(depth as i32),
            ScheduleKind::Table { probs } => probs[(depth as usize).min(probs.len() - 1)],
        }
    }

    /// `Some(p)` when every depth shares the same split probability.
    pub fn homogeneous_probability(&self) -> Option<f64> {
        match (&self.kind, self.max_depth) {
            (ScheduleKind::Table { probs }, None) if probs.iter().all(|q| *q == probs[0]) => {
                Some(probs[0])
            }
            (ScheduleKind::PolynomialDecay { alpha, gamma }, None) if *gamma == 0.0 => Some(*alpha),
            _ => None,
        }
    }

    /// Least upper bound of `sum_d 2^d p(d)`, the limit of the breadth-first
    /// prefix sums; `None` when it diverges or cannot be bounded in closed form.
    pub fn prefix_sum_limit(&self) -> Option<f64> {
        if let Some(cap) = self.max_depth {
            return Some((0..cap).map(|d| 2f64.powi(d as i32) * self.split_probability(d)).sum());
        }
        match &self.kind {
            ScheduleKind::GeometricDecay { alpha, xi } => Some(xi / (1.0 - 2.0 * alpha)),
            ScheduleKind::Table { probs } if *probs.last().unwrap() == 0.0 => Some(
                probs.iter().enumerate().map(|(d, q)| 2f64.powi(d as i32) * q).sum(),
            ),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        let base = match &self.kind {
            ScheduleKind::PolynomialDecay { alpha, gamma } => format!("poly(alpha={alpha},gamma={gamma})"),
            ScheduleKind::GeometricDecay { alpha, xi } => format!("geometric(alpha={alpha},xi={xi})"),
            ScheduleKind::Table { probs } if probs.len() == 1 => format!("homogeneous(p={})", probs[0]),
            ScheduleKind::Table { probs } => format!("table({probs:?})"),
        };
        match self.max_depth {
            Some(cap) => format!("{base}[depth<{cap}]"),
            None => base,
        }
    }
}

/// Free-function form of [`SplitSchedule::split_probability`].
pub fn split_probability(schedule: &SplitSchedule, depth: u32) -> f64 {
    schedule.split_probability(depth)
}
