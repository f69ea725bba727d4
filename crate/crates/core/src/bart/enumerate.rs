//! Exact single-tree posterior by exhaustive enumeration, for small designs.

use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use rand::Rng;

use super::likelihood::LeafStats;
use super::sampler::{backfit_sweep, SamplerState};
use super::BartConfig;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::prior::tree_log_prior;
use crate::schedule::SplitSchedule;
use crate::tree::{BinaryTreePartition, SplitRule, TreeKey};

enum Subtree {
    Leaf,
    Split(SplitRule, Rc<Subtree>, Rc<Subtree>),
}

impl Subtree {
    fn bfs_rules(self: &Rc<Self>) -> Vec<Option<SplitRule>> {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([Rc::clone(self)]);
        while let Some(node) = queue.pop_front() {
            match &*node {
                Subtree::Leaf => out.push(None),
                Subtree::Split(rule, l, r) => {
                    out.push(Some(*rule));
                    queue.push_back(Rc::clone(l));
                    queue.push_back(Rc::clone(r));
                }
            }
        }
        out
    }
}

/// All subtrees with positive prior mass rooted at a node holding `points`.
fn subtrees(
    design: &Design,
    schedule: &SplitSchedule,
    points: &[usize],
    depth: u32,
    limit: usize,
) -> Result<Vec<Rc<Subtree>>> {
    let q = schedule.split_probability(depth);
    let splittable = design.can_split(points);
    let mut out = Vec::new();
    if q < 1.0 || !splittable {
        out.push(Rc::new(Subtree::Leaf));
    }
    if q <= 0.0 || !splittable {
        return Ok(out);
    }
    for var in 0..design.p() {
        for threshold in design.eligible_thresholds(points, var) {
            let rule = SplitRule::new(var, threshold);
            let (left, right): (Vec<usize>, Vec<usize>) =
                points.iter().partition(|&&i| rule.goes_left(design.row(i)));
            let ls = subtrees(design, schedule, &left, depth + 1, limit)?;
            let rs = subtrees(design, schedule, &right, depth + 1, limit)?;
            if out.len() + ls.len() * rs.len() > limit {
                return Err(Error::EnumerationLimit { limit });
            }
            for l in &ls {
                for r in &rs {
                    out.push(Rc::new(Subtree::Split(rule, Rc::clone(l), Rc::clone(r))));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PosteriorEntry {
    pub tree: BinaryTreePartition,
    pub log_prior: f64,
    pub log_marginal: f64,
    pub probability: f64,
}

/// Every tree with positive posterior mass and its normalized probability.
#[derive(Debug, Clone)]
pub struct PosteriorTable {
    pub entries: Vec<PosteriorEntry>,
    index: HashMap<TreeKey, usize>,
}

impl PosteriorTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn probability(&self, key: &TreeKey) -> f64 {
        self.index.get(key).map_or(0.0, |&i| self.entries[i].probability)
    }

    /// Posterior distribution of the leaf count.
    pub fn leaf_count_distribution(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for e in &self.entries {
            let k = e.tree.leaf_count();
            if out.len() <= k {
                out.resize(k + 1, 0.0);
            }
            out[k] += e.probability;
        }
        out
    }
}

/// Enumerates the single-tree posterior given outputs `y`, noise variance
/// `sigma2` and leaf prior variance `tau2`. Fails with a capacity error once
/// more than `limit` trees would be produced.
pub fn enumerate_posterior(
    design: &Design,
    y: &[f64],
    schedule: &SplitSchedule,
    sigma2: f64,
    tau2: f64,
    limit: usize,
) -> Result<PosteriorTable> {
    if y.len() != design.n() {
        return Err(crate::error::param(format!("{} outputs for {} design points", y.len(), design.n())));
    }
    let all: Vec<usize> = (0..design.n()).collect();
    let shapes = subtrees(design, schedule, &all, 0, limit)?;
    let mut entries = Vec::with_capacity(shapes.len());
    for shape in &shapes {
        let tree = BinaryTreePartition::from_bfs_rules(&shape.bfs_rules())?;
        let log_prior = tree_log_prior(&tree, schedule, design)?;
        let points = tree.points_by_node(design);
        let log_marginal = tree
            .leaves()
            .into_iter()
            .map(|id| LeafStats::of(y, &points[id]).log_marginal(sigma2, tau2))
            .sum();
        entries.push(PosteriorEntry { tree, log_prior, log_marginal, probability: 0.0 });
    }
    let logs: Vec<f64> = entries.iter().map(|e| e.log_prior + e.log_marginal).collect();
    let norm = crate::branching::log_sum_exp(&logs);
    for (e, l) in entries.iter_mut().zip(&logs) {
        e.probability = (l - norm).exp();
    }
    let index = entries.iter().enumerate().map(|(i, e)| (e.tree.key(), i)).collect();
    Ok(PosteriorTable { entries, index })
}

/// Frequency of each tree among a collection of sampled trees.
pub fn tree_frequencies<'a>(samples: impl IntoIterator<Item = &'a BinaryTreePartition>) -> HashMap<TreeKey, u64> {
    let mut counts = HashMap::new();
    for tree in samples {
        *counts.entry(tree.key()).or_default() += 1;
    }
    counts
}

/// Total-variation distance between the enumerated posterior and the
/// empirical distribution given by `counts`; 1 when `counts` is empty.
pub fn total_variation(table: &PosteriorTable, counts: &HashMap<TreeKey, u64>) -> f64 {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return 1.0;
    }
    let total = total as f64;
    let mut tv = 0.0;
    let mut matched = 0u64;
    for e in &table.entries {
        let c = counts.get(&e.tree.key()).copied().unwrap_or(0);
        matched += c;
        tv += (e.probability - c as f64 / total).abs();
    }
    tv += (total - matched as f64) / total;
    0.5 * tv
}

/// Runs a single-tree chain and counts the tree visited at every kept sweep.
pub fn chain_tree_counts<R: Rng + ?Sized>(
    design: &Design,
    y: &[f64],
    config: &BartConfig,
    rng: &mut R,
) -> Result<HashMap<TreeKey, u64>> {
    config.validate()?;
    if config.num_trees != 1 {
        return Err(crate::error::param("tree counting needs a single-tree ensemble"));
    }
    if y.len() != design.n() {
        return Err(crate::error::param(format!("{} outputs for {} design points", y.len(), design.n())));
    }
    let mut state = SamplerState::new(1, design.n());
    let mut counts = HashMap::new();
    for sweep in 1..=config.sweeps {
        backfit_sweep(&mut state, design, y, config, rng)?;
        if sweep > config.burn_in && (sweep - config.burn_in).is_multiple_of(config.thin) {
            *counts.entry(state.ensemble.trees[0].key()).or_default() += 1;
        }
    }
    Ok(counts)
}

/// Six-point one-dimensional dataset with a clear step between the third
/// and fourth points, small enough to enumerate to depth two.
pub fn oracle_fixture() -> (Design, Vec<f64>) {
    let design = Design::regular_grid_1d(6).expect("static design");
    (design, vec![-1.2, -1.5, -1.3, 1.4, 1.1, 1.6])
}

/// Split schedule paired with [`oracle_fixture`]: decaying, capped at depth two.
pub fn oracle_schedule() -> SplitSchedule {
    SplitSchedule::polynomial(0.95, 2.0).expect("static schedule").with_max_depth(2)
}
