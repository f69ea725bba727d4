//! Grow / prune / change Metropolis-Hastings moves on a single tree.
//!
//! The target is `prior(tree) * prod_leaves marginal(residuals in leaf)`.
//! Acceptance ratios are assembled from the few nodes a move touches.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::likelihood::LeafStats;
use super::MoveProbabilities;
use crate::design::{CellOptions, Design};
use crate::error::{Error, Result};
use crate::prior::draw_rule;
use crate::schedule::SplitSchedule;
use crate::tree::{BinaryTreePartition, SplitRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
}

/// A fully specified proposal against a particular tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Proposal {
    Grow { leaf: usize, rule: SplitRule },
    Prune { node: usize },
    Change { node: usize, rule: SplitRule },
}

impl Proposal {
    pub fn kind(&self) -> MoveKind {
        match self {
            Self::Grow { .. } => MoveKind::Grow,
            Self::Prune { .. } => MoveKind::Prune,
            Self::Change { .. } => MoveKind::Change,
        }
    }
}

/// Everything a move needs besides the tree itself.
#[derive(Debug, Clone, Copy)]
pub struct MoveContext<'a> {
    pub design: &'a Design,
    pub residuals: &'a [f64],
    pub schedule: &'a SplitSchedule,
    pub moves: &'a MoveProbabilities,
    pub noise_variance: f64,
    pub leaf_prior_variance: f64,
}

impl MoveContext<'_> {
    fn marginal(&self, points: &[usize]) -> f64 {
        LeafStats::of(self.residuals, points).log_marginal(self.noise_variance, self.leaf_prior_variance)
    }

    /// Prior factor of a leaf at `depth` holding `points`.
    fn leaf_prior(&self, depth: u32, points: &[usize]) -> f64 {
        if self.design.can_split(points) {
            (1.0 - self.schedule.split_probability(depth)).ln()
        } else {
            0.0
        }
    }

    fn growable(&self, depth: u32, points: &[usize]) -> bool {
        self.schedule.split_probability(depth) > 0.0 && self.design.can_split(points)
    }

    fn split(&self, points: &[usize], rule: SplitRule) -> (Vec<usize>, Vec<usize>) {
        points.iter().partition(|&&i| rule.goes_left(self.design.row(i)))
    }

    /// Log prior of an internal node at `depth` with `rule`, plus its two leaf children.
    fn cherry_prior(&self, depth: u32, points: &[usize], rule: SplitRule) -> Result<f64> {
        let options = CellOptions::of(self.design, points);
        if rule.var >= self.design.p() || !self.design.eligible_thresholds(points, rule.var).contains(&rule.threshold) {
            return Err(Error::Consistency(format!("rule {rule:?} is not eligible at this node")));
        }
        let (l, r) = self.split(points, rule);
        Ok(self.schedule.split_probability(depth).ln()
            + options.log_rule_probability(rule.var)
            + self.leaf_prior(depth + 1, &l)
            + self.leaf_prior(depth + 1, &r))
    }

    fn cherry_marginal(&self, points: &[usize], rule: SplitRule) -> f64 {
        let (l, r) = self.split(points, rule);
        self.marginal(&l) + self.marginal(&r)
    }

    fn log_rule(&self, points: &[usize], rule: SplitRule) -> f64 {
        CellOptions::of(self.design, points).log_rule_probability(rule.var)
    }
}

fn growable_leaves(tree: &BinaryTreePartition, points: &[Vec<usize>], ctx: &MoveContext) -> Vec<usize> {
    tree.leaves().into_iter().filter(|&id| ctx.growable(tree.node(id).depth, &points[id])).collect()
}

/// Log Metropolis-Hastings ratio of `proposal` (before truncation at 0).
pub fn log_acceptance(tree: &BinaryTreePartition, proposal: &Proposal, ctx: &MoveContext) -> Result<f64> {
    let points = tree.points_by_node(ctx.design);
    let mv = ctx.moves;
    match *proposal {
        Proposal::Grow { leaf, rule } => {
            let node = tree.nodes().get(leaf).filter(|n| n.is_leaf()).ok_or_else(|| not_a("leaf", leaf))?;
            let pts = &points[leaf];
            if !ctx.growable(node.depth, pts) {
                return Err(Error::Consistency(format!("leaf {leaf} cannot grow")));
            }
            let growable = growable_leaves(tree, &points, ctx).len() as f64;
            let mut grown = tree.clone();
            grown.grow(leaf, rule)?;
            let prunable_after = grown.prunable_nodes().len() as f64;
            let d_prior = ctx.cherry_prior(node.depth, pts, rule)? - ctx.leaf_prior(node.depth, pts);
            let d_lik = ctx.cherry_marginal(pts, rule) - ctx.marginal(pts);
            let forward = mv.grow.ln() - growable.ln() + ctx.log_rule(pts, rule);
            let reverse = mv.prune.ln() - prunable_after.ln();
            Ok(d_prior + d_lik + reverse - forward)
        }
        Proposal::Prune { node } => {
            let prunable = tree.prunable_nodes();
            if !prunable.contains(&node) {
                return Err(not_a("prunable node", node));
            }
            let n = tree.node(node);
            let rule = n.split.unwrap();
            let pts = &points[node];
            let [l, r] = n.children.unwrap();
            let growable_after = growable_leaves(tree, &points, ctx).len() as f64
                + f64::from(u8::from(ctx.growable(n.depth, pts)))
                - [l, r].iter().filter(|&&c| ctx.growable(n.depth + 1, &points[c])).count() as f64;
            let d_prior = ctx.leaf_prior(n.depth, pts) - ctx.cherry_prior(n.depth, pts, rule)?;
            let d_lik = ctx.marginal(pts) - ctx.cherry_marginal(pts, rule);
            let forward = mv.prune.ln() - (prunable.len() as f64).ln();
            let reverse = mv.grow.ln() - growable_after.ln() + ctx.log_rule(pts, rule);
            Ok(d_prior + d_lik + reverse - forward)
        }
        Proposal::Change { node, rule } => {
            if !tree.prunable_nodes().contains(&node) {
                return Err(not_a("prunable node", node));
            }
            let n = tree.node(node);
            let old = n.split.unwrap();
            let pts = &points[node];
            let d_prior = ctx.cherry_prior(n.depth, pts, rule)? - ctx.cherry_prior(n.depth, pts, old)?;
            let d_lik = ctx.cherry_marginal(pts, rule) - ctx.cherry_marginal(pts, old);
            let forward = ctx.log_rule(pts, rule);
            let reverse = ctx.log_rule(pts, old);
            Ok(d_prior + d_lik + reverse - forward)
        }
    }
}

fn not_a(what: &str, id: usize) -> Error {
    Error::Consistency(format!("node {id} is not a {what}"))
}

/// Applies `proposal`, returning the proposal that undoes it on the new tree.
pub fn apply(tree: &mut BinaryTreePartition, proposal: &Proposal) -> Result<Proposal> {
    match *proposal {
        Proposal::Grow { leaf, rule } => {
            let [l, _] = tree.grow(leaf, rule)?;
            Ok(Proposal::Prune { node: tree.node(l).parent.unwrap() })
        }
        Proposal::Prune { node } => {
            let rule = tree.node(node).split.ok_or_else(|| not_a("internal node", node))?;
            let leaf = tree.prune(node)?;
            Ok(Proposal::Grow { leaf, rule })
        }
        Proposal::Change { node, rule } => {
            let old = tree.node(node).split.ok_or_else(|| not_a("internal node", node))?;
            tree.set_rule(node, rule)?;
            Ok(Proposal::Change { node, rule: old })
        }
    }
}

/// Draws a proposal of the given kind; `None` when no such move exists.
pub fn draw_proposal<R: Rng + ?Sized>(
    tree: &BinaryTreePartition,
    kind: MoveKind,
    ctx: &MoveContext,
    rng: &mut R,
) -> Option<Proposal> {
    match kind {
        MoveKind::Grow => {
            let points = tree.points_by_node(ctx.design);
            let candidates = growable_leaves(tree, &points, ctx);
            if candidates.is_empty() {
                return None;
            }
            let leaf = candidates[rng.random_range(0..candidates.len())];
            let rule = draw_rule(ctx.design, &points[leaf], rng)?;
            Some(Proposal::Grow { leaf, rule })
        }
        MoveKind::Prune | MoveKind::Change => {
            let candidates = tree.prunable_nodes();
            if candidates.is_empty() {
                return None;
            }
            let node = candidates[rng.random_range(0..candidates.len())];
            if kind == MoveKind::Prune {
                return Some(Proposal::Prune { node });
            }
            let rule = draw_rule(ctx.design, &tree.points_in(ctx.design, node), rng)?;
            Some(Proposal::Change { node, rule })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveOutcome {
    pub kind: MoveKind,
    pub accepted: bool,
    /// No legal move of the drawn kind; counted as a rejection.
    pub skipped: bool,
}

/// One Metropolis-Hastings step: draw a move kind, a proposal, and accept
/// or reject it.
pub fn propose_move<R: Rng + ?Sized>(tree: &mut BinaryTreePartition, ctx: &MoveContext, rng: &mut R) -> Result<MoveOutcome> {
    let kind = ctx.moves.draw(rng);
    let Some(proposal) = draw_proposal(tree, kind, ctx, rng) else {
        return Ok(MoveOutcome { kind, accepted: false, skipped: true });
    };
    let log_ratio = log_acceptance(tree, &proposal, ctx)?;
    let accepted = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
    if accepted {
        apply(tree, &proposal)?;
    }
    Ok(MoveOutcome { kind, accepted, skipped: false })
}
