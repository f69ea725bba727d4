//! Sum-of-trees regression with Gaussian leaf heights and fixed noise
//! variance, sampled by Metropolis-within-backfitting.

pub mod enumerate;
pub mod likelihood;
pub mod moves;
pub mod sampler;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{param, Result};
use crate::schedule::SplitSchedule;
use crate::tree::BinaryTreePartition;

pub use enumerate::{
    chain_tree_counts, enumerate_posterior, oracle_fixture, oracle_schedule, total_variation, tree_frequencies, PosteriorTable,
};
pub use likelihood::{leaf_marginal_loglik, LeafStats};
pub use moves::{log_acceptance, propose_move, MoveKind, MoveOutcome, Proposal};
pub use sampler::{
    backfit_sweep, run_chain, ChainResult, ChainTrace, ModelSnapshot, MoveCounts, OutputScaling, SamplerState, SweepRecord,
};

/// Probabilities of proposing each move kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveProbabilities {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
}

impl Default for MoveProbabilities {
    fn default() -> Self {
        Self { grow: 0.4, prune: 0.4, change: 0.2 }
    }
}

impl MoveProbabilities {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> MoveKind {
        let u = rng.random::<f64>();
        if u < self.grow {
            MoveKind::Grow
        } else if u < self.grow + self.prune {
            MoveKind::Prune
        } else {
            MoveKind::Change
        }
    }
}

/// Prior variance of each leaf height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafPrior {
    /// `1 / T`.
    InverseTrees,
    /// `(0.5 / (k sqrt T))^2`, meant for outputs rescaled to `[-0.5, 0.5]`.
    Calibrated { k: f64 },
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BartConfig {
    pub num_trees: usize,
    pub schedule: SplitSchedule,
    pub leaf_prior: LeafPrior,
    pub noise_variance: f64,
    pub rescale_outputs: bool,
    pub moves: MoveProbabilities,
    pub moves_per_tree: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Keep a copy of the ensemble at every recorded sweep.
    pub keep_snapshots: bool,
}

impl BartConfig {
    pub fn new(num_trees: usize, schedule: SplitSchedule) -> Self {
        Self {
            num_trees,
            schedule,
            leaf_prior: LeafPrior::InverseTrees,
            noise_variance: 1.0,
            rescale_outputs: false,
            moves: MoveProbabilities::default(),
            moves_per_tree: 1,
            sweeps: 1000,
            burn_in: 200,
            thin: 1,
            keep_snapshots: false,
        }
    }

    pub fn leaf_prior_variance(&self) -> f64 {
        let t = self.num_trees as f64;
        match self.leaf_prior {
            LeafPrior::InverseTrees => 1.0 / t,
            LeafPrior::Calibrated { k } => (0.5 / (k * t.sqrt())).powi(2),
            LeafPrior::Fixed(v) => v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trees < 1 {
            return Err(param("need at least one tree"));
        }
        self.schedule.validate()?;
        let tau2 = self.leaf_prior_variance();
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return Err(param(format!("leaf prior variance must be positive, got {tau2}")));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(param(format!("noise variance must be positive, got {}", self.noise_variance)));
        }
        let m = self.moves;
        if [m.grow, m.prune, m.change].iter().any(|p| p.is_nan() || *p < 0.0) || (m.grow + m.prune + m.change - 1.0).abs() > 1e-9 {
            return Err(param("move probabilities must be non-negative and sum to 1"));
        }
        if m.grow != m.prune || m.grow == 0.0 {
            return Err(param("grow and prune probabilities must be equal and positive"));
        }
        if self.thin == 0 || self.moves_per_tree == 0 {
            return Err(param("thin and moves_per_tree must be at least 1"));
        }
        if self.burn_in > self.sweeps {
            return Err(param("burn-in exceeds the number of sweeps"));
        }
        Ok(())
    }
}

/// Trees and their leaf heights; heights follow each tree's leaf order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub trees: Vec<BinaryTreePartition>,
    pub heights: Vec<Vec<f64>>,
}

impl Ensemble {
    /// `count` single-leaf trees with zero heights.
    pub fn stumps(count: usize) -> Self {
        Self { trees: vec![BinaryTreePartition::root(); count], heights: vec![vec![0.0]; count] }
    }

    pub fn is_aligned(&self) -> bool {
        self.trees.len() == self.heights.len()
            && self.trees.iter().zip(&self.heights).all(|(t, h)| t.leaf_count() == h.len())
    }

    pub fn leaf_counts(&self) -> Vec<usize> {
        self.trees.iter().map(BinaryTreePartition::leaf_count).collect()
    }

    /// Fitted values of tree `t` at the design points.
    pub fn tree_fit(&self, t: usize, design: &Design) -> Vec<f64> {
        self.trees[t].leaf_assignment(design).into_iter().map(|k| self.heights[t][k]).collect()
    }

    /// Sum of the trees' step functions at the design points.
    pub fn predict(&self, design: &Design) -> Vec<f64> {
        let mut out = vec![0.0; design.n()];
        for t in 0..self.trees.len() {
            for (o, v) in out.iter_mut().zip(self.tree_fit(t, design)) {
                *o += v;
            }
        }
        out
    }

    /// Sum of the trees' step functions at one point.
    pub fn predict_point(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .zip(&self.heights)
            .map(|(tree, h)| {
                let leaf = tree.route(x);
                h[tree.nodes()[..leaf].iter().filter(|n| n.is_leaf()).count()]
            })
            .sum()
    }
}
