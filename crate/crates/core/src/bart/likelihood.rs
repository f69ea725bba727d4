//! Conjugate Gaussian leaf model: `r_i ~ N(beta, sigma2)`, `beta ~ N(0, tau2)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Sufficient statistics of the residuals in one leaf.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LeafStats {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl LeafStats {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        values.into_iter().fold(Self::default(), |s, r| s.push(r))
    }

    pub fn of(residuals: &[f64], points: &[usize]) -> Self {
        Self::from_values(points.iter().map(|&i| residuals[i]))
    }

    fn push(self, r: f64) -> Self {
        Self { count: self.count + 1, sum: self.sum + r, sum_sq: self.sum_sq + r * r }
    }

    /// `log int prod_i N(r_i; beta, sigma2) N(beta; 0, tau2) d beta`.
    pub fn log_marginal(&self, sigma2: f64, tau2: f64) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let m = self.count as f64;
        let denom = sigma2 + m * tau2;
        -0.5 * m * (2.0 * PI * sigma2).ln() - self.sum_sq / (2.0 * sigma2)
            + 0.5 * (sigma2 / denom).ln()
            + tau2 * self.sum * self.sum / (2.0 * sigma2 * denom)
    }

    /// Posterior mean and variance of the leaf height.
    pub fn posterior(&self, sigma2: f64, tau2: f64) -> (f64, f64) {
        let denom = sigma2 + self.count as f64 * tau2;
        (tau2 * self.sum / denom, tau2 * sigma2 / denom)
    }

    pub fn draw_height<R: Rng + ?Sized>(&self, sigma2: f64, tau2: f64, rng: &mut R) -> f64 {
        let (mean, var) = self.posterior(sigma2, tau2);
        Normal::new(mean, var.sqrt()).expect("finite leaf posterior").sample(rng)
    }
}

/// Log marginal likelihood of the residuals falling in one leaf; 0 for an
/// empty leaf.
pub fn leaf_marginal_loglik(residuals: &[f64], sigma2: f64, tau2: f64) -> f64 {
    LeafStats::from_values(residuals.iter().copied()).log_marginal(sigma2, tau2)
}
