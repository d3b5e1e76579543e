//! Binary regression trees: split rules, routing, and the structural
//! queries the sampler needs (leaves, prunable nodes, depths).

use super::data::{FeatureColumn, Features};

/// A split rule at an internal node. Rows satisfying the rule go left.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitRule {
    /// Continuous: left iff value < threshold.
    Threshold { var: usize, value: f64 },
    /// Categorical: left iff the level code is in `levels` (sorted).
    Subset { var: usize, levels: Vec<u32> },
}

impl SplitRule {
    pub fn goes_left(&self, features: &Features, row: usize) -> bool {
        match self {
            SplitRule::Threshold { var, value } => match features.column(*var) {
                FeatureColumn::Continuous { values, .. } => values[row] < *value,
                FeatureColumn::Categorical { .. } => unreachable!("threshold on categorical"),
            },
            SplitRule::Subset { var, levels } => match features.column(*var) {
                FeatureColumn::Categorical { codes, .. } => {
                    levels.binary_search(&codes[row]).is_ok()
                }
                FeatureColumn::Continuous { .. } => unreachable!("subset on continuous"),
            },
        }
    }
}

/// A node of a regression tree.
#[derive(Debug, Clone)]
pub enum TreeNode {
    Leaf { mu: f64 },
    Internal { rule: SplitRule, left: Box<TreeNode>, right: Box<TreeNode> },
}

impl TreeNode {
    pub fn leaf() -> TreeNode {
        TreeNode::Leaf { mu: 0.0 }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Maximum leaf depth; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    /// Internal node whose children are both leaves.
    pub fn is_prunable(&self) -> bool {
        matches!(self, TreeNode::Internal { left, right, .. } if left.is_leaf() && right.is_leaf())
    }

    /// Evaluate the tree for one row.
    pub fn predict_row(&self, features: &Features, row: usize) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { mu } => return *mu,
                TreeNode::Internal { rule, left, right } => {
                    node = if rule.goes_left(features, row) { left } else { right };
                }
            }
        }
    }

    /// Paths (left = false, right = true) to every leaf, in DFS order.
    pub fn leaf_paths(&self) -> Vec<Vec<bool>> {
        let mut out = Vec::new();
        collect_paths(self, &mut Vec::new(), &mut out, &|n| n.is_leaf());
        out
    }

    /// Paths to every prunable internal node, in DFS order.
    pub fn prunable_paths(&self) -> Vec<Vec<bool>> {
        let mut out = Vec::new();
        collect_paths(self, &mut Vec::new(), &mut out, &|n| n.is_prunable());
        out
    }

    pub fn node(&self, path: &[bool]) -> &TreeNode {
        let mut node = self;
        for &step in path {
            match node {
                TreeNode::Internal { left, right, .. } => {
                    node = if step { right } else { left };
                }
                TreeNode::Leaf { .. } => panic!("path walks through a leaf"),
            }
        }
        node
    }

    pub fn node_mut(&mut self, path: &[bool]) -> &mut TreeNode {
        let mut node = self;
        for &step in path {
            match node {
                TreeNode::Internal { left, right, .. } => {
                    node = if step { right } else { left };
                }
                TreeNode::Leaf { .. } => panic!("path walks through a leaf"),
            }
        }
        node
    }

    /// Write leaf values in DFS order.
    pub fn set_leaf_values(&mut self, values: &[f64]) {
        let mut idx = 0;
        set_leaves(self, values, &mut idx);
        debug_assert_eq!(idx, values.len());
    }

    /// Read leaf values in DFS order.
    pub fn leaf_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        read_leaves(self, &mut out);
        out
    }
}

fn collect_paths(
    node: &TreeNode,
    prefix: &mut Vec<bool>,
    out: &mut Vec<Vec<bool>>,
    want: &dyn Fn(&TreeNode) -> bool,
) {
    if want(node) {
        out.push(prefix.clone());
    }
    if let TreeNode::Internal { left, right, .. } = node {
        prefix.push(false);
        collect_paths(left, prefix, out, want);
        prefix.pop();
        prefix.push(true);
        collect_paths(right, prefix, out, want);
        prefix.pop();
    }
}

fn set_leaves(node: &mut TreeNode, values: &[f64], idx: &mut usize) {
    match node {
        TreeNode::Leaf { mu } => {
            *mu = values[*idx];
            *idx += 1;
        }
        TreeNode::Internal { left, right, .. } => {
            set_leaves(left, values, idx);
            set_leaves(right, values, idx);
        }
    }
}

fn read_leaves(node: &TreeNode, out: &mut Vec<f64>) {
    match node {
        TreeNode::Leaf { mu } => out.push(*mu),
        TreeNode::Internal { left, right, .. } => {
            read_leaves(left, out);
            read_leaves(right, out);
        }
    }
}
