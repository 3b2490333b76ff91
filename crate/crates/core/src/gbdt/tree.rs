use serde::{Deserialize, Serialize};

use super::split::{scan_feature, SplitConstraints};
use super::GbtConfig;
use crate::numeric::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        weight: f64,
    },
}

/// Regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

/// Unshrunk Newton leaf value `-G / (H + λ)`.
pub fn leaf_weight(grad_sum: f64, hess_sum: f64, lambda: f64) -> f64 {
    -grad_sum / (hess_sum + lambda)
}

impl Tree {
    pub fn leaf(weight: f64) -> Tree {
        Tree {
            nodes: vec![TreeNode::Leaf { weight }],
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    /// Score of the leaf reached by column `sample` of `features`.
    pub fn predict_sample(&self, features: &Matrix, sample: usize) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    id = if features.get(*feature, sample) < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Grows one tree on the given gradient statistics. `presorted[f]` lists
    /// all sample indices in ascending order of feature `f`. Split gains are
    /// added into `feature_gain`.
    pub(crate) fn grow(
        features: &Matrix,
        presorted: &[Vec<usize>],
        grad: &[f64],
        hess: &[f64],
        config: &GbtConfig,
        feature_gain: &mut [f64],
    ) -> Tree {
        let n = features.cols();
        let mut grower = Grower {
            features,
            grad,
            hess,
            constraints: config.constraints(),
            max_depth: config.max_depth,
            eta: config.learning_rate,
            nodes: Vec::new(),
            feature_gain,
            n,
            orders: presorted.concat(),
            scratch: vec![0; n],
            goes_left: vec![false; n],
        };
        grower.grow_node(0, n, 0);
        Tree {
            nodes: grower.nodes,
        }
    }
}

/// Every feature's order array is kept partitioned alike: a node owns the
/// same `[start, end)` segment in each of them, sorted by that feature.
struct Grower<'a> {
    features: &'a Matrix,
    grad: &'a [f64],
    hess: &'a [f64],
    constraints: SplitConstraints,
    max_depth: usize,
    eta: f64,
    nodes: Vec<TreeNode>,
    feature_gain: &'a mut [f64],
    n: usize,
    orders: Vec<usize>,
    scratch: Vec<usize>,
    goes_left: Vec<bool>,
}

impl Grower<'_> {
    fn segment(&self, f: usize, start: usize, end: usize) -> &[usize] {
        &self.orders[f * self.n + start..f * self.n + end]
    }

    fn grow_node(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { weight: 0.0 });
        let (mut g, mut h) = (0.0, 0.0);
        // Sum in sample-index order so totals do not depend on the feature.
        let mut members = self.segment(0, start, end).to_vec();
        members.sort_unstable();
        for &i in &members {
            g += self.grad[i];
            h += self.hess[i];
        }

        let size = end - start;
        let splittable = depth < self.max_depth && size >= 2 * self.constraints.min_child_size;
        let mut best = None;
        if splittable {
            for f in 0..self.features.rows() {
                scan_feature(
                    f,
                    self.features.row(f),
                    self.segment(f, start, end),
                    self.grad,
                    self.hess,
                    g,
                    h,
                    &self.constraints,
                    &mut best,
                );
            }
        }
        let Some(decision) = best.filter(|d| d.gain > 0.0) else {
            let weight = self.eta * leaf_weight(g, h, self.constraints.lambda);
            self.nodes[id] = TreeNode::Leaf { weight };
            return id;
        };

        let row = self.features.row(decision.feature);
        for &i in &members {
            self.goes_left[i] = row[i] < decision.threshold;
        }
        let n_left = members.iter().filter(|&&i| self.goes_left[i]).count();
        for f in 0..self.features.rows() {
            let seg = &mut self.orders[f * self.n + start..f * self.n + end];
            let (mut l, mut r) = (0, n_left);
            for &i in seg.iter() {
                if self.goes_left[i] {
                    self.scratch[l] = i;
                    l += 1;
                } else {
                    self.scratch[r] = i;
                    r += 1;
                }
            }
            seg.copy_from_slice(&self.scratch[..size]);
        }

        self.feature_gain[decision.feature] += decision.gain;
        let left = self.grow_node(start, start + n_left, depth + 1);
        let right = self.grow_node(start + n_left, end, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: decision.feature,
            threshold: decision.threshold,
            left,
            right,
            gain: decision.gain,
        };
        id
    }
}
