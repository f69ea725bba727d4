//! Binary tree partitions of the unit cube.
//!
//! Nodes live in an arena kept in breadth-first, left-to-right order: node 0
//! is the root and the children of every node appear after it, left before
//! right. Every structural edit re-establishes this order, so two trees with
//! the same shape and rules have identical arenas.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};

/// Axis-parallel split: points with `x[var] <= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub var: usize,
    pub threshold: f64,
}

impl SplitRule {
    pub fn new(var: usize, threshold: f64) -> Self {
        Self { var, threshold }
    }

    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.var] <= self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub depth: u32,
    pub parent: Option<usize>,
    pub children: Option<[usize; 2]>,
    pub split: Option<SplitRule>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Rectangle `{x : lower_j < x_j <= upper_j}`, with the lower face closed
/// where `lower_closed[j]` is set (the faces of the unit cube).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower_closed: Vec<bool>,
}

impl Cell {
    pub fn unit(p: usize) -> Self {
        Self { lower: vec![0.0; p], upper: vec![1.0; p], lower_closed: vec![true; p] }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(j, &v)| {
            v <= self.upper[j] && (v > self.lower[j] || (self.lower_closed[j] && v == self.lower[j]))
        })
    }
}

/// Realized branching-process quantities of one tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeMetrics {
    /// Total progeny `X`.
    pub total_nodes: usize,
    /// `K = (X + 1) / 2`.
    pub leaves: usize,
    /// First generation with no nodes; the tree depth is `extinction_time - 1`.
    pub extinction_time: usize,
    /// `Z_0, Z_1, ..., Z_{T_ex - 1}`.
    pub generation_sizes: Vec<usize>,
}

impl TreeMetrics {
    /// Checks the structural identities every full binary tree satisfies.
    pub fn check(&self) -> std::result::Result<(), String> {
        let z = &self.generation_sizes;
        if z.first() != Some(&1) {
            return Err("Z_0 != 1".into());
        }
        if z.iter().sum::<usize>() != self.total_nodes {
            return Err("X != sum of generation sizes".into());
        }
        if z.len() != self.extinction_time || z.contains(&0) {
            return Err("generation sizes inconsistent with extinction time".into());
        }
        if z.windows(2).any(|w| w[1] > 2 * w[0] || w[1] % 2 == 1) {
            return Err("Z_t > 2 Z_{t-1} or odd generation".into());
        }
        if 2 * self.leaves != self.total_nodes + 1 {
            return Err("K != (X+1)/2".into());
        }
        if self.leaves < self.extinction_time || (self.extinction_time < 64 && self.leaves > 1usize << self.extinction_time) {
            return Err("K outside [T_ex, 2^T_ex]".into());
        }
        Ok(())
    }
}

/// Canonical identity of a tree: node rules in breadth-first order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeKey(Vec<Option<(usize, u64)>>);

/// A full binary tree of axis-parallel splits.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTreePartition {
    nodes: Vec<Node>,
}

impl Default for BinaryTreePartition {
    fn default() -> Self {
        Self::root()
    }
}

impl BinaryTreePartition {
    /// Single-leaf tree covering the whole cube.
    pub fn root() -> Self {
        Self { nodes: vec![Node { depth: 0, parent: None, children: None, split: None }] }
    }

    /// Builds a tree from the rules of its nodes listed in breadth-first order
    /// (`None` marks a leaf).
    pub fn from_bfs_rules(rules: &[Option<SplitRule>]) -> Result<Self> {
        let mut tree = Self::root();
        let mut queue = VecDeque::from([0usize]);
        let mut it = rules.iter();
        while let Some(id) = queue.pop_front() {
            let rule = it
                .next()
                .ok_or_else(|| Error::Consistency("rule list ended before the tree closed".into()))?;
            if let Some(rule) = rule {
                let [l, r] = tree.attach_children(id, *rule);
                queue.push_back(l);
                queue.push_back(r);
            }
        }
        if it.next().is_some() {
            return Err(Error::Consistency("rule list longer than the tree".into()));
        }
        Ok(tree)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.len().div_ceil(2)
    }

    /// Leaf ids in breadth-first order; position in this list is the leaf index.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf()).collect()
    }

    pub fn internal_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.nodes[i].is_leaf()).collect()
    }

    /// Internal nodes whose children are both leaves.
    pub fn prunable_nodes(&self) -> Vec<usize> {
        self.internal_nodes()
            .into_iter()
            .filter(|&i| {
                let [l, r] = self.nodes[i].children.unwrap();
                self.nodes[l].is_leaf() && self.nodes[r].is_leaf()
            })
            .collect()
    }

    pub fn max_depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    fn attach_children(&mut self, id: usize, rule: SplitRule) -> [usize; 2] {
        let depth = self.nodes[id].depth + 1;
        let l = self.nodes.len();
        for _ in 0..2 {
            self.nodes.push(Node { depth, parent: Some(id), children: None, split: None });
        }
        self.nodes[id].children = Some([l, l + 1]);
        self.nodes[id].split = Some(rule);
        [l, l + 1]
    }

    /// Splits leaf `id`; returns the ids of the new left and right children
    /// after re-canonicalization.
    pub fn grow(&mut self, id: usize, rule: SplitRule) -> Result<[usize; 2]> {
        if !self.nodes.get(id).is_some_and(Node::is_leaf) {
            return Err(Error::Consistency(format!("node {id} is not a leaf")));
        }
        self.attach_children(id, rule);
        let map = self.canonicalize();
        let new_id = map[id].expect("grown node survives");
        Ok(self.nodes[new_id].children.unwrap())
    }

    /// Turns internal node `id` into a leaf, dropping its descendants.
    /// Returns the node's id after re-canonicalization.
    pub fn prune(&mut self, id: usize) -> Result<usize> {
        if self.nodes.get(id).is_none_or(Node::is_leaf) {
            return Err(Error::Consistency(format!("node {id} is not internal")));
        }
        self.nodes[id].children = None;
        self.nodes[id].split = None;
        let map = self.canonicalize();
        Ok(map[id].expect("pruned node survives"))
    }

    /// Replaces the rule of internal node `id`.
    pub fn set_rule(&mut self, id: usize, rule: SplitRule) -> Result<()> {
        match self.nodes.get_mut(id) {
            Some(node) if !node.is_leaf() => {
                node.split = Some(rule);
                Ok(())
            }
            _ => Err(Error::Consistency(format!("node {id} is not internal"))),
        }
    }

    /// Rebuilds the arena in breadth-first order; returns old-id -> new-id.
    fn canonicalize(&mut self) -> Vec<Option<usize>> {
        let mut map = vec![None; self.nodes.len()];
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut queue = VecDeque::from([0usize]);
        while let Some(old) = queue.pop_front() {
            map[old] = Some(order.len());
            order.push(old);
            if let Some([l, r]) = self.nodes[old].children {
                queue.push_back(l);
                queue.push_back(r);
            }
        }
        let nodes = order
            .iter()
            .map(|&old| {
                let n = &self.nodes[old];
                Node {
                    depth: n.depth,
                    parent: n.parent.map(|p| map[p].unwrap()),
                    children: n.children.map(|[l, r]| [map[l].unwrap(), map[r].unwrap()]),
                    split: n.split,
                }
            })
            .collect();
        self.nodes = nodes;
        map
    }

    /// Leaf node id reached by point `x`.
    pub fn route(&self, x: &[f64]) -> usize {
        let mut id = 0;
        while let (Some([l, r]), Some(rule)) = (self.nodes[id].children, self.nodes[id].split) {
            id = if rule.goes_left(x) { l } else { r };
        }
        id
    }

    /// Leaf index (position in [`leaves`](Self::leaves)) of every design point.
    pub fn leaf_assignment(&self, design: &Design) -> Vec<usize> {
        let mut position = vec![usize::MAX; self.nodes.len()];
        for (k, leaf) in self.leaves().into_iter().enumerate() {
            position[leaf] = k;
        }
        (0..design.n()).map(|i| position[self.route(design.row(i))]).collect()
    }

    /// Design points falling in every node (each point is listed at every
    /// node on its root-to-leaf path).
    pub fn points_by_node(&self, design: &Design) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        out[0] = (0..design.n()).collect();
        for id in 0..self.nodes.len() {
            if let (Some([l, r]), Some(rule)) = (self.nodes[id].children, self.nodes[id].split) {
                let (left, right): (Vec<usize>, Vec<usize>) =
                    out[id].iter().partition(|&&i| rule.goes_left(design.row(i)));
                out[l] = left;
                out[r] = right;
            }
        }
        out
    }

    /// Design points in node `id`.
    pub fn points_in(&self, design: &Design, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        while let Some(parent) = self.nodes[*path.last().unwrap()].parent {
            path.push(parent);
        }
        path.reverse();
        (0..design.n())
            .filter(|&i| {
                let x = design.row(i);
                path.windows(2).all(|w| {
                    let node = &self.nodes[w[0]];
                    let [l, _] = node.children.unwrap();
                    node.split.unwrap().goes_left(x) == (w[1] == l)
                })
            })
            .collect()
    }

    /// Rectangles of the leaves, in leaf order.
    pub fn leaf_cells(&self, p: usize) -> Vec<Cell> {
        let mut cells: Vec<Option<Cell>> = vec![None; self.nodes.len()];
        cells[0] = Some(Cell::unit(p));
        for id in 0..self.nodes.len() {
            if let (Some([l, r]), Some(rule)) = (self.nodes[id].children, self.nodes[id].split) {
                let parent = cells[id].clone().unwrap();
                let mut left = parent.clone();
                left.upper[rule.var] = left.upper[rule.var].min(rule.threshold);
                let mut right = parent;
                if rule.threshold >= right.lower[rule.var] {
                    right.lower[rule.var] = rule.threshold;
                    right.lower_closed[rule.var] = false;
                }
                cells[l] = Some(left);
                cells[r] = Some(right);
            }
        }
        self.leaves().into_iter().map(|i| cells[i].take().unwrap()).collect()
    }

    pub fn metrics(&self) -> TreeMetrics {
        let t_ex = self.max_depth() as usize + 1;
        let mut z = vec![0usize; t_ex];
        for n in &self.nodes {
            z[n.depth as usize] += 1;
        }
        TreeMetrics {
            total_nodes: self.nodes.len(),
            leaves: self.leaf_count(),
            extinction_time: t_ex,
            generation_sizes: z,
        }
    }

    pub fn key(&self) -> TreeKey {
        TreeKey(self.nodes.iter().map(|n| n.split.map(|r| (r.var, r.threshold.to_bits()))).collect())
    }

    pub fn bfs_rules(&self) -> Vec<Option<SplitRule>> {
        self.nodes.iter().map(|n| n.split).collect()
    }

    /// Flat JSON form: one entry per node with its parent, depth and rule.
    pub fn to_document(&self) -> TreeDocument {
        TreeDocument {
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, n)| NodeRecord { id, parent: n.parent, depth: n.depth, split: n.split })
                .collect(),
        }
    }

    pub fn from_document(doc: &TreeDocument) -> Result<Self> {
        for (pos, rec) in doc.nodes.iter().enumerate() {
            if rec.id != pos {
                return Err(Error::Consistency(format!("node at position {pos} has id {}", rec.id)));
            }
        }
        let tree = Self::from_bfs_rules(&doc.nodes.iter().map(|r| r.split).collect::<Vec<_>>())?;
        for (rec, node) in doc.nodes.iter().zip(&tree.nodes) {
            if rec.parent != node.parent || rec.depth != node.depth {
                return Err(Error::Consistency(format!("node {} has inconsistent parent or depth", rec.id)));
            }
        }
        Ok(tree)
    }
}

/// Metrics of a tree; free-function form of [`BinaryTreePartition::metrics`].
pub fn metrics_of(tree: &BinaryTreePartition) -> TreeMetrics {
    tree.metrics()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: u32,
    pub split: Option<SplitRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub nodes: Vec<NodeRecord>,
}

impl Serialize for BinaryTreePartition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_document().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BinaryTreePartition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = TreeDocument::deserialize(d)?;
        Self::from_document(&doc).map_err(serde::de::Error::custom)
    }
}
