//! k-d approximating partitions.
//!
//! Layer `d` of a k-d tree splits every cell along coordinate `d mod p` at the
//! within-cell lower median, so after `s` rounds over all coordinates the
//! tree is complete with `2^(s p)` leaves of nearly equal occupancy.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{param, Error, Result};
use crate::prior::tree_log_prior;
use crate::schedule::{ScheduleKind, SplitSchedule};
use crate::tree::{BinaryTreePartition, NodeRecord, SplitRule, TreeDocument};

#[derive(Debug, Clone, PartialEq)]
pub struct KdTree {
    pub tree: BinaryTreePartition,
    pub rounds: u32,
    pub dims: usize,
}

impl KdTree {
    pub fn layers(&self) -> u32 {
        self.rounds * self.dims as u32
    }

    pub fn leaf_count(&self) -> usize {
        1 << self.layers()
    }

    /// Number of design points per leaf, in leaf order.
    pub fn occupancy(&self, design: &Design) -> Vec<usize> {
        let mut counts = vec![0; self.tree.leaf_count()];
        for k in self.tree.leaf_assignment(design) {
            counts[k] += 1;
        }
        counts
    }

    /// Occupancies differ by at most one.
    pub fn is_balanced(&self, design: &Design) -> bool {
        let occ = self.occupancy(design);
        occ.iter().max().unwrap() - occ.iter().min().unwrap() <= 1
    }

    pub fn to_document(&self) -> KdTreeDocument {
        KdTreeDocument { nodes: self.tree.to_document().nodes, rounds: self.rounds }
    }
}

/// Tree JSON document with the number of rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdTreeDocument {
    pub nodes: Vec<NodeRecord>,
    pub rounds: u32,
}

impl KdTreeDocument {
    pub fn tree(&self) -> Result<BinaryTreePartition> {
        BinaryTreePartition::from_document(&TreeDocument { nodes: self.nodes.clone() })
    }
}

/// Lower-median threshold of `values` that leaves both sides nonempty.
fn median_threshold(values: &mut [f64]) -> Option<f64> {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    let max = values[m - 1];
    let median = values[m.div_ceil(2) - 1];
    if median < max {
        return Some(median);
    }
    values.iter().rev().copied().find(|v| *v < max)
}

/// Builds the k-d tree with `rounds` passes over every coordinate.
pub fn build_kd_tree(design: &Design, rounds: u32) -> Result<KdTree> {
    let p = design.p();
    let layers = rounds as usize * p;
    if layers >= usize::BITS as usize - 1 {
        return Err(param(format!("{rounds} rounds over {p} coordinates is too deep")));
    }
    let needed = 1usize << layers;
    if design.n() < needed {
        return Err(Error::Capacity { n: design.n(), needed, rounds: rounds as usize });
    }
    let mut rules = Vec::with_capacity(2 * needed - 1);
    let mut queue: VecDeque<(usize, Vec<usize>)> = VecDeque::from([(0, (0..design.n()).collect())]);
    while let Some((depth, points)) = queue.pop_front() {
        if depth == layers {
            rules.push(None);
            continue;
        }
        let var = depth % p;
        let mut values: Vec<f64> = points.iter().map(|&i| design.get(i, var)).collect();
        let threshold = median_threshold(&mut values).ok_or(Error::Degenerate { node: rules.len(), var })?;
        let rule = SplitRule::new(var, threshold);
        let (left, right): (Vec<usize>, Vec<usize>) = points.iter().partition(|&&i| rule.goes_left(design.row(i)));
        rules.push(Some(rule));
        queue.push_back((depth + 1, left));
        queue.push_back((depth + 1, right));
    }
    Ok(KdTree { tree: BinaryTreePartition::from_bfs_rules(&rules)?, rounds, dims: p })
}

/// Best step function on a partition in the empirical norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFit {
    /// Mean target value in each leaf (0 for empty leaves).
    pub leaf_values: Vec<f64>,
    pub fitted: Vec<f64>,
    /// `||f0 - fitted||_n` with `||f||_n^2 = (1/n) sum f(x_i)^2`.
    pub error: f64,
}

pub fn empirical_norm(v: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (sum / n.max(1) as f64).sqrt()
}

/// Projects `target` (values at the design points) onto step functions
/// supported by the leaves of `tree`.
pub fn project_step_function(tree: &BinaryTreePartition, design: &Design, target: &[f64]) -> Result<StepFit> {
    if target.len() != design.n() {
        return Err(param(format!("target has {} values for {} design points", target.len(), design.n())));
    }
    let assign = tree.leaf_assignment(design);
    let mut sums = vec![0.0; tree.leaf_count()];
    let mut counts = vec![0usize; tree.leaf_count()];
    for (i, &k) in assign.iter().enumerate() {
        sums[k] += target[i];
        counts[k] += 1;
    }
    let leaf_values: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    let fitted: Vec<f64> = assign.iter().map(|&k| leaf_values[k]).collect();
    let error = empirical_norm(target.iter().zip(&fitted).map(|(a, b)| a - b));
    Ok(StepFit { leaf_values, fitted, error })
}

/// Exact prior mass of a k-d tree next to the lower bounds used to show it
/// is not too small. All values are natural logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdPriorMass {
    pub exact: f64,
    /// `K ln(1 - a^L) - (K-1) ln(p n) + sum_{d<L} 2^d ln p(d)`: every internal
    /// node is charged the schedule's own split probability at its depth.
    pub per_depth_bound: f64,
    /// Chain charging a flat `a` per internal node:
    /// `K ln(1 - a^L) - (K-1) ln(p n) + (K-1) ln a`,
    /// `K ln(a(1-a)) - (K-1) ln(p n)`, and
    /// `-K ln(2n) - (K-1) ln(p n)`.
    pub per_node_chain: [f64; 3],
    pub leaves: usize,
    pub layers: u32,
}

impl KdPriorMass {
    pub fn exact_dominates_per_depth(&self) -> bool {
        self.exact >= self.per_depth_bound
    }

    pub fn per_node_chain_monotone(&self) -> bool {
        let c = self.per_node_chain;
        c[0] >= c[1] && c[1] >= c[2]
    }

    pub fn exact_dominates_per_node(&self) -> bool {
        self.exact >= self.per_node_chain[0]
    }
}

/// Exact log prior of the k-d tree under a geometric schedule with
/// `1/n <= alpha < 1/2`, and the lower-bound expressions for comparison.
pub fn kd_prior_mass(kd: &KdTree, schedule: &SplitSchedule, design: &Design) -> Result<KdPriorMass> {
    let ScheduleKind::GeometricDecay { alpha, .. } = schedule.kind else {
        return Err(param("k-d prior mass requires a geometric split schedule"));
    };
    let n = design.n() as f64;
    if alpha < 1.0 / n {
        return Err(param(format!("alpha = {alpha} is below 1/n = {}", 1.0 / n)));
    }
    let exact = tree_log_prior(&kd.tree, schedule, design)?;
    let layers = kd.layers();
    let k = kd.leaf_count() as f64;
    let rules = (k - 1.0) * (design.p() as f64 * n).ln();
    let leaf_term = k * (-alpha.powi(layers as i32)).ln_1p();
    let depth_term: f64 = (0..layers).map(|d| 2f64.powi(d as i32) * schedule.split_probability(d).ln()).sum();
    let per_depth_bound = leaf_term - rules + depth_term;
    let per_node_chain = [
        leaf_term - rules + (k - 1.0) * alpha.ln(),
        k * (alpha * (1.0 - alpha)).ln() - rules,
        -k * (2.0 * n).ln() - rules,
    ];
    Ok(KdPriorMass { exact, per_depth_bound, per_node_chain, leaves: kd.leaf_count(), layers })
}

/// One member of a chopped ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoppedTree {
    pub tree: BinaryTreePartition,
    /// Indices of the depth-`r` branches of the k-d tree kept whole here.
    pub branches: Vec<usize>,
    pub cut_depth: u32,
}

/// Splits a k-d tree into `count` rooted subtrees whose step functions can
/// add up to any step function on the full tree.
///
/// With `r = ceil(log2 count)`, every subtree keeps the top `r` layers; the
/// `2^r` branches hanging below depth `r` are dealt out in contiguous groups,
/// and each subtree grows only its own group to full depth.
pub fn chop_ensemble(kd: &KdTree, count: usize) -> Result<Vec<ChoppedTree>> {
    let leaves = kd.leaf_count();
    if count < 1 || 2 * count > leaves.max(1) && count != 1 {
        return Err(param(format!("tree count {count} outside [1, {}]", leaves / 2)));
    }
    let cut = count.next_power_of_two().trailing_zeros();
    let width = 1usize << cut;
    let owner = |b: usize| b * count / width;
    let full = kd.tree.nodes();
    (0..count)
        .map(|t| {
            let mut rules = Vec::new();
            // (node in the full tree, branch index once past the cut)
            let mut queue: VecDeque<(usize, Option<usize>)> = VecDeque::from([(0, None)]);
            let mut next_branch = 0;
            while let Some((id, branch)) = queue.pop_front() {
                let node = &full[id];
                let branch = if node.depth == cut {
                    next_branch += 1;
                    Some(next_branch - 1)
                } else {
                    branch
                };
                let keep = node.depth < cut || branch.is_some_and(|b| owner(b) == t);
                match (node.children, keep) {
                    (Some([l, r]), true) => {
                        rules.push(node.split);
                        queue.push_back((l, branch));
                        queue.push_back((r, branch));
                    }
                    _ => rules.push(None),
                }
            }
            Ok(ChoppedTree {
                tree: BinaryTreePartition::from_bfs_rules(&rules)?,
                branches: (0..width).filter(|&b| owner(b) == t).collect(),
                cut_depth: cut,
            })
        })
        .collect()
}

/// Leaf heights for each chopped tree such that the ensemble sum equals
/// `fit` on every design point: full-depth leaves take the k-d leaf value,
/// leaves at the cut take zero.
pub fn ensemble_heights(kd: &KdTree, chopped: &[ChoppedTree], design: &Design, fit: &StepFit) -> Vec<Vec<f64>> {
    let kd_assign = kd.tree.leaf_assignment(design);
    chopped
        .iter()
        .map(|c| {
            let mut heights = vec![0.0; c.tree.leaf_count()];
            let leaf_ids = c.tree.leaves();
            for (i, k) in c.tree.leaf_assignment(design).into_iter().enumerate() {
                if c.tree.node(leaf_ids[k]).depth == kd.layers() {
                    heights[k] = fit.leaf_values[kd_assign[i]];
                }
            }
            heights
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_medians() {
        let d = Design::from_column(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let kd = build_kd_tree(&d, 1).unwrap();
        assert_eq!(kd.tree.node(0).split.unwrap().threshold, 0.2);
        assert_eq!(kd.tree.points_in(&d, 1), vec![0, 1]);
        assert_eq!(kd.tree.points_in(&d, 2), vec![2, 3]);
        let kd2 = build_kd_tree(&d, 2).unwrap();
        assert_eq!(kd2.occupancy(&d), vec![1, 1, 1, 1]);
    }

    #[test]
    fn two_dimensional_grid_cycles_coordinates() {
        let mut rows = Vec::new();
        for i in 0..4 {
            for j in 0..2 {
                rows.push(vec![0.125 + 0.25 * i as f64, 0.25 + 0.5 * j as f64]);
            }
        }
        let d = Design::from_rows(&rows).unwrap();
        let kd = build_kd_tree(&d, 1).unwrap();
        assert_eq!(kd.leaf_count(), 4);
        assert_eq!(kd.tree.node(0).split.unwrap().var, 0);
        assert_eq!(kd.tree.node(1).split.unwrap().var, 1);
        assert_eq!(kd.tree.node(2).split.unwrap().var, 1);
        assert_eq!(kd.occupancy(&d), vec![2, 2, 2, 2]);
    }

    #[test]
    fn capacity_and_degeneracy_errors() {
        let d = Design::from_column(&[0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(build_kd_tree(&d, 2), Err(Error::Capacity { .. })));
        let tied = Design::from_column(&[0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(matches!(build_kd_tree(&tied, 1), Err(Error::Degenerate { node: 0, var: 0 })));
    }

    #[test]
    fn ties_scan_down_to_a_valid_threshold() {
        let d = Design::from_column(&[0.1, 0.9, 0.9, 0.9]).unwrap();
        let kd = build_kd_tree(&d, 1).unwrap();
        assert_eq!(kd.tree.node(0).split.unwrap().threshold, 0.1);
    }

    #[test]
    fn projection_examples() {
        let d = Design::regular_grid_1d(4).unwrap();
        let root = BinaryTreePartition::root();
        let constant = project_step_function(&root, &d, &[2.0; 4]).unwrap();
        assert_eq!(constant.error, 0.0);
        let alt = project_step_function(&root, &d, &[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(alt.leaf_values, vec![0.0]);
        assert!((alt.error - 1.0).abs() < 1e-15);
    }

    #[test]
    fn prior_mass_small_case() {
        let d = Design::regular_grid_1d(4).unwrap();
        let s = SplitSchedule::geometric(0.3).unwrap();
        let kd = build_kd_tree(&d, 1).unwrap();
        let mass = kd_prior_mass(&kd, &s, &d).unwrap();
        let expected = (0.3f64 / 3.0 * (1.0 - 0.09f64).powi(2)).ln();
        assert!((mass.exact - expected).abs() < 1e-12);
        assert!(mass.exact >= (0.3f64 * 0.7 / 4.0).ln());
        assert!(mass.exact_dominates_per_depth());
        assert!(mass.per_node_chain_monotone());

        let leaf = build_kd_tree(&d, 0).unwrap();
        let m0 = kd_prior_mass(&leaf, &s, &d).unwrap();
        assert!((m0.exact - 0.7f64.ln()).abs() < 1e-12);
        assert!(m0.exact_dominates_per_depth());
    }

    #[test]
    fn prior_mass_parameter_checks() {
        let d = Design::regular_grid_1d(64).unwrap();
        let kd = build_kd_tree(&d, 2).unwrap();
        assert!(kd_prior_mass(&kd, &SplitSchedule::polynomial(0.5, 1.0).unwrap(), &d).is_err());
        assert!(kd_prior_mass(&kd, &SplitSchedule::geometric(0.01).unwrap(), &d).is_err());
    }

    #[test]
    fn prior_mass_dominates_per_depth_bound() {
        let d = Design::regular_grid_1d(64).unwrap();
        for s in 1..=2 {
            let kd = build_kd_tree(&d, s).unwrap();
            for alpha in [0.05, 0.3, 0.45] {
                for sched in [
                    SplitSchedule::geometric(alpha).unwrap(),
                    SplitSchedule::geometric_with_base(alpha, 1.0).unwrap(),
                ] {
                    let m = kd_prior_mass(&kd, &sched, &d).unwrap();
                    assert!(m.exact_dominates_per_depth(), "s={s} alpha={alpha}");
                    assert!(m.per_node_chain_monotone());
                }
            }
        }
    }

    #[test]
    fn chop_sizes_and_reconstruction() {
        let d = Design::regular_grid_1d(16).unwrap();
        let kd = build_kd_tree(&d, 3).unwrap();
        let target: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64).collect();
        let fit = project_step_function(&kd.tree, &d, &target).unwrap();

        let single = chop_ensemble(&kd, 1).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].tree, kd.tree);

        for count in 1..=4 {
            let parts = chop_ensemble(&kd, count).unwrap();
            assert_eq!(parts.len(), count);
            for part in &parts {
                let k = part.tree.leaf_count();
                assert!((4..=8).contains(&k), "count={count} leaves={k}");
            }
            let heights = ensemble_heights(&kd, &parts, &d, &fit);
            for i in 0..16 {
                let total: f64 = parts
                    .iter()
                    .zip(&heights)
                    .map(|(p, h)| h[p.tree.leaf_assignment(&d)[i]])
                    .sum();
                assert_eq!(total, fit.fitted[i]);
            }
        }
        assert!(chop_ensemble(&kd, 0).is_err());
        assert!(chop_ensemble(&kd, 5).is_err());
    }
}
