//! Prior draws of tree partitions and their exact prior probability.
//!
//! Trees are generated by breadth-first exploration: the root starts in a
//! queue, and each dequeued node at depth `d` splits with probability `p(d)`,
//! pushing its left and right children. The number of dequeues when the
//! queue first empties is the total node count.

use std::collections::VecDeque;

use rand::Rng;

use crate::design::{CellOptions, Design};
use crate::error::{Error, Result};
use crate::schedule::SplitSchedule;
use crate::tree::{BinaryTreePartition, SplitRule, TreeMetrics};

pub const DEFAULT_MAX_NODES: usize = 1 << 20;

/// Draws a split rule for a cell: a uniform coordinate among those with an
/// eligible threshold, then a uniform eligible threshold. `None` if the cell
/// cannot be split.
pub fn draw_rule<R: Rng + ?Sized>(design: &Design, points: &[usize], rng: &mut R) -> Option<SplitRule> {
    let options = CellOptions::of(design, points);
    let usable: Vec<usize> = (0..design.p()).filter(|&j| options.counts[j] > 0).collect();
    if usable.is_empty() {
        return None;
    }
    let var = usable[rng.random_range(0..usable.len())];
    let thresholds = design.eligible_thresholds(points, var);
    Some(SplitRule::new(var, thresholds[rng.random_range(0..thresholds.len())]))
}

/// Samples a tree from the prior on `design`.
///
/// A node whose cell admits no eligible threshold in any coordinate stays a
/// leaf without consulting the schedule.
pub fn sample_tree<R: Rng + ?Sized>(
    schedule: &SplitSchedule,
    design: &Design,
    rng: &mut R,
    max_nodes: usize,
) -> Result<(BinaryTreePartition, TreeMetrics)> {
    if max_nodes == 0 {
        return Err(Error::Parameter("max_nodes must be at least 1".into()));
    }
    let mut rules: Vec<Option<SplitRule>> = Vec::new();
    let mut queue: VecDeque<(u32, Vec<usize>)> = VecDeque::from([(0, (0..design.n()).collect())]);
    let mut created = 1usize;
    while let Some((depth, points)) = queue.pop_front() {
        let splits = CellOptions::of(design, &points).can_split()
            && rng.random::<f64>() < schedule.split_probability(depth);
        if !splits {
            rules.push(None);
            continue;
        }
        created += 2;
        if created > max_nodes {
            return Err(Error::Truncated { max_nodes });
        }
        let rule = draw_rule(design, &points, rng).expect("cell was checked to be splittable");
        let (left, right): (Vec<usize>, Vec<usize>) =
            points.iter().partition(|&&i| rule.goes_left(design.row(i)));
        rules.push(Some(rule));
        queue.push_back((depth + 1, left));
        queue.push_back((depth + 1, right));
    }
    let tree = BinaryTreePartition::from_bfs_rules(&rules)?;
    let metrics = tree.metrics();
    debug_assert_eq!(metrics.total_nodes, rules.len());
    Ok((tree, metrics))
}

/// Samples only the shape of a tree, with every node free to split. This is
/// the plain branching process; it matches [`sample_tree`] whenever the
/// design never runs out of eligible thresholds.
pub fn sample_shape<R: Rng + ?Sized>(schedule: &SplitSchedule, rng: &mut R, max_nodes: usize) -> Result<TreeMetrics> {
    if max_nodes == 0 {
        return Err(Error::Parameter("max_nodes must be at least 1".into()));
    }
    let mut generation_sizes = vec![1usize];
    let mut queue: VecDeque<u32> = VecDeque::from([0]);
    // Dequeue count; the queue length is S_t and exploration stops at S_t = 0.
    let mut steps = 0usize;
    while let Some(depth) = queue.pop_front() {
        steps += 1;
        if rng.random::<f64>() < schedule.split_probability(depth) {
            if steps + queue.len() + 2 > max_nodes {
                return Err(Error::Truncated { max_nodes });
            }
            let child = depth as usize + 1;
            if generation_sizes.len() <= child {
                generation_sizes.push(0);
            }
            generation_sizes[child] += 2;
            queue.push_back(depth + 1);
            queue.push_back(depth + 1);
        }
    }
    Ok(TreeMetrics {
        total_nodes: steps,
        leaves: steps.div_ceil(2),
        extinction_time: generation_sizes.len(),
        generation_sizes,
    })
}

/// Exact log prior probability of `tree` on `design`.
///
/// Internal nodes contribute `log p(d)` plus the log probability of their
/// rule; leaves contribute `log(1 - p(d))`, or nothing when their cell
/// cannot be split.
pub fn tree_log_prior(tree: &BinaryTreePartition, schedule: &SplitSchedule, design: &Design) -> Result<f64> {
    for (id, node) in tree.nodes().iter().enumerate() {
        if let Some(rule) = node.split.filter(|r| r.var >= design.p()) {
            return Err(Error::Consistency(format!("node {id}: split variable {} out of range", rule.var)));
        }
    }
    let points = tree.points_by_node(design);
    let mut total = 0.0;
    for (id, node) in tree.nodes().iter().enumerate() {
        total += node_log_prior(schedule, design, &points[id], node.depth, node.split).map_err(|e| match e {
            Error::Consistency(msg) => Error::Consistency(format!("node {id}: {msg}")),
            other => other,
        })?;
    }
    Ok(total)
}

/// Prior contribution of one node holding `points`, split by `rule` or a leaf.
pub fn node_log_prior(
    schedule: &SplitSchedule,
    design: &Design,
    points: &[usize],
    depth: u32,
    rule: Option<SplitRule>,
) -> Result<f64> {
    let options = CellOptions::of(design, points);
    let q = schedule.split_probability(depth);
    match rule {
        None if options.can_split() => Ok((1.0 - q).ln()),
        None => Ok(0.0),
        Some(rule) => {
            if rule.var >= design.p() {
                return Err(Error::Consistency(format!("split variable {} out of range", rule.var)));
            }
            let eligible = design.eligible_thresholds(points, rule.var);
            if !eligible.contains(&rule.threshold) {
                return Err(Error::Consistency(format!(
                    "threshold {} is not an eligible value of x{}",
                    rule.threshold,
                    rule.var + 1
                )));
            }
            Ok(q.ln() + options.log_rule_probability(rule.var))
        }
    }
}
