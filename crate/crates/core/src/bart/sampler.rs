//! Bayesian backfitting: each sweep updates every tree against the partial
//! residuals of the others, then redraws its leaf heights.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::likelihood::LeafStats;
use super::moves::{propose_move, MoveContext, MoveKind};
use super::{BartConfig, Ensemble};
use crate::design::Design;
use crate::error::{param, Result};
use crate::kd::empirical_norm;

/// Affine map from raw outputs to the scale the sampler works on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputScaling {
    pub shift: f64,
    pub scale: f64,
}

impl OutputScaling {
    pub fn identity() -> Self {
        Self { shift: 0.0, scale: 1.0 }
    }

    /// Maps `[min y, max y]` onto `[-0.5, 0.5]`.
    pub fn fit(y: &[f64]) -> Self {
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        if range > 0.0 && range.is_finite() {
            Self { shift: lo + 0.5 * range, scale: range }
        } else {
            Self { shift: lo, scale: 1.0 }
        }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }

    pub fn inverse(&self, f: f64) -> f64 {
        f * self.scale + self.shift
    }
}

/// Ensemble plus cached per-tree and total fits at the design points.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    pub ensemble: Ensemble,
    pub tree_fits: Vec<Vec<f64>>,
    pub total_fit: Vec<f64>,
}

impl SamplerState {
    pub fn new(num_trees: usize, n: usize) -> Self {
        Self {
            ensemble: Ensemble::stumps(num_trees),
            tree_fits: vec![vec![0.0; n]; num_trees],
            total_fit: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounts {
    pub proposed: [u64; 3],
    pub accepted: [u64; 3],
    pub skipped: [u64; 3],
}

impl MoveCounts {
    fn record(&mut self, kind: MoveKind, accepted: bool, skipped: bool) {
        let i = kind as usize;
        self.proposed[i] += 1;
        self.accepted[i] += u64::from(accepted);
        self.skipped[i] += u64::from(skipped);
    }

    fn add(&mut self, other: &Self) {
        for i in 0..3 {
            self.proposed[i] += other.proposed[i];
            self.accepted[i] += other.accepted[i];
            self.skipped[i] += other.skipped[i];
        }
    }
}

/// One backfitting sweep over all trees. `y` is on the sampler's scale.
pub fn backfit_sweep<R: Rng + ?Sized>(
    state: &mut SamplerState,
    design: &Design,
    y: &[f64],
    config: &BartConfig,
    rng: &mut R,
) -> Result<MoveCounts> {
    let n = design.n();
    let sigma2 = config.noise_variance;
    let tau2 = config.leaf_prior_variance();
    let mut counts = MoveCounts::default();
    let mut residuals = vec![0.0; n];
    for t in 0..state.ensemble.trees.len() {
        for i in 0..n {
            residuals[i] = y[i] - state.total_fit[i] + state.tree_fits[t][i];
        }
        let ctx = MoveContext {
            design,
            residuals: &residuals,
            schedule: &config.schedule,
            moves: &config.moves,
            noise_variance: sigma2,
            leaf_prior_variance: tau2,
        };
        let tree = &mut state.ensemble.trees[t];
        for _ in 0..config.moves_per_tree {
            let out = propose_move(tree, &ctx, rng)?;
            counts.record(out.kind, out.accepted, out.skipped);
        }

        let assign = tree.leaf_assignment(design);
        let mut stats = vec![LeafStats::default(); tree.leaf_count()];
        for (i, &k) in assign.iter().enumerate() {
            let s = &mut stats[k];
            s.count += 1;
            s.sum += residuals[i];
            s.sum_sq += residuals[i] * residuals[i];
        }
        let heights: Vec<f64> = stats.iter().map(|s| s.draw_height(sigma2, tau2, rng)).collect();
        let fit = &mut state.tree_fits[t];
        for (i, &k) in assign.iter().enumerate() {
            state.total_fit[i] += heights[k] - fit[i];
            fit[i] = heights[k];
        }
        state.ensemble.heights[t] = heights;
    }
    Ok(counts)
}

/// Per-sweep diagnostics kept after burn-in and thinning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub leaf_counts: Vec<usize>,
    pub max_leaves: usize,
    /// `||f - y||_n` on the raw output scale.
    pub train_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub records: Vec<SweepRecord>,
    pub snapshots: Vec<Ensemble>,
}

impl ChainTrace {
    /// CSV with columns `sweep,K1..KT,max_k,train_error`.
    pub fn write_csv<W: Write>(&self, num_trees: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sweep".to_string()];
        header.extend((1..=num_trees).map(|t| format!("K{t}")));
        header.extend(["max_k".to_string(), "train_error".to_string()]);
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.sweep.to_string()];
            row.extend(r.leaf_counts.iter().map(usize::to_string));
            row.push(r.max_leaves.to_string());
            row.push(format!("{:e}", r.train_error));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fraction of records whose largest tree has more than `bound` leaves.
    pub fn mass_above(&self, bound: f64) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.max_leaves as f64 > bound).count() as f64 / self.records.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainResult {
    pub trace: ChainTrace,
    /// Posterior mean of `f` at the design points, raw scale.
    pub posterior_mean: Vec<f64>,
    pub scaling: OutputScaling,
    pub final_ensemble: Ensemble,
    pub moves: MoveCounts,
}

impl ChainResult {
    pub fn mean_max_leaves(&self) -> f64 {
        let r = &self.trace.records;
        r.iter().map(|r| r.max_leaves as f64).sum::<f64>() / r.len().max(1) as f64
    }
}

/// Runs a chain from all-stump initial state.
pub fn run_chain<R: Rng + ?Sized>(design: &Design, y: &[f64], config: &BartConfig, rng: &mut R) -> Result<ChainResult> {
    config.validate()?;
    if design.n() < 2 {
        return Err(param("need at least two observations"));
    }
    if y.len() != design.n() {
        return Err(param(format!("{} outputs for {} design points", y.len(), design.n())));
    }
    let scaling = if config.rescale_outputs { OutputScaling::fit(y) } else { OutputScaling::identity() };
    let y_scaled: Vec<f64> = y.iter().map(|v| scaling.forward(*v)).collect();
    let mut state = SamplerState::new(config.num_trees, design.n());
    let mut trace = ChainTrace::default();
    let mut moves = MoveCounts::default();
    let mut mean_acc = vec![0.0; design.n()];
    for sweep in 1..=config.sweeps {
        moves.add(&backfit_sweep(&mut state, design, &y_scaled, config, rng)?);
        if sweep <= config.burn_in || !(sweep - config.burn_in).is_multiple_of(config.thin) {
            continue;
        }
        let raw: Vec<f64> = state.total_fit.iter().map(|f| scaling.inverse(*f)).collect();
        for (m, f) in mean_acc.iter_mut().zip(&raw) {
            *m += f;
        }
        let leaf_counts = state.ensemble.leaf_counts();
        trace.records.push(SweepRecord {
            sweep,
            max_leaves: leaf_counts.iter().copied().max().unwrap_or(0),
            leaf_counts,
            train_error: empirical_norm(raw.iter().zip(y).map(|(f, v)| f - v)),
        });
        if config.keep_snapshots {
            trace.snapshots.push(state.ensemble.clone());
        }
    }
    let kept = trace.records.len().max(1) as f64;
    Ok(ChainResult {
        posterior_mean: mean_acc.into_iter().map(|s| s / kept).collect(),
        trace,
        scaling,
        final_ensemble: state.ensemble,
        moves,
    })
}

/// JSON model snapshot: output scaling plus the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub scaling: OutputScaling,
    pub ensemble: Ensemble,
}

impl ModelSnapshot {
    pub fn predict(&self, design: &Design) -> Vec<f64> {
        self.ensemble.predict(design).into_iter().map(|f| self.scaling.inverse(f)).collect()
    }
}
