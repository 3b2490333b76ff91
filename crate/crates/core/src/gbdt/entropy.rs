use super::split::{midpoint, GAIN_TIE};
use super::{check_labels, GbtError, ImportanceVector, Result};
use crate::numeric::Matrix;

const PROB_SUM_TOLERANCE: f64 = 1e-9;

/// Shannon entropy in bits, with `0 · log 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(GbtError::Probabilities("empty".into()));
    }
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(GbtError::Probabilities(format!(
            "entry {bad} outside [0, 1]"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(GbtError::Probabilities(format!("entries sum to {sum}")));
    }
    Ok(p.iter().filter(|v| **v > 0.0).map(|v| -v * v.log2()).sum())
}

fn label_entropy(counts: &[usize], total: usize) -> f64 {
    counts
        .iter()
        .filter(|c| **c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

fn counts_of(labels: &[usize], n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// Parent entropy minus the size-weighted entropy of the two children.
pub fn information_gain(parent: &[usize], left: &[usize], right: &[usize]) -> Result<f64> {
    if parent.is_empty() {
        return Err(GbtError::Empty);
    }
    let width = parent
        .iter()
        .chain(left)
        .chain(right)
        .max()
        .map_or(0, |m| m + 1);
    let pc = counts_of(parent, width);
    let lc = counts_of(left, width);
    let rc = counts_of(right, width);
    if pc
        .iter()
        .zip(lc.iter().zip(&rc))
        .any(|(p, (l, r))| *p != l + r)
    {
        return Err(GbtError::NotAPartition);
    }
    let n = parent.len() as f64;
    let mut after = 0.0;
    for (child, counts) in [(left, &lc), (right, &rc)] {
        if !child.is_empty() {
            after += child.len() as f64 / n * label_entropy(counts, child.len());
        }
    }
    Ok(label_entropy(&pc, parent.len()) - after)
}

#[derive(Debug, Clone, PartialEq)]
enum CartNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: usize,
    },
}

/// Classification tree split on information gain. Importance of a feature is
/// the sum over its splits of `(node size / n) · gain`, normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationTree {
    nodes: Vec<CartNode>,
    n_features: usize,
    weighted_gain: Vec<f64>,
}

impl ClassificationTree {
    pub fn fit(
        features: &Matrix,
        labels: &[usize],
        n_classes: usize,
        max_depth: usize,
    ) -> Result<Self> {
        let n = features.cols();
        if n == 0 {
            return Err(GbtError::Empty);
        }
        if labels.len() != n {
            return Err(GbtError::Length {
                what: "labels",
                expected: n,
                found: labels.len(),
            });
        }
        check_labels(labels, n_classes)?;
        let mut tree = ClassificationTree {
            nodes: Vec::new(),
            n_features: features.rows(),
            weighted_gain: vec![0.0; features.rows()],
        };
        let members: Vec<usize> = (0..n).collect();
        tree.grow(features, labels, n_classes, members, 0, max_depth, n);
        Ok(tree)
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        x: &Matrix,
        labels: &[usize],
        n_classes: usize,
        members: Vec<usize>,
        depth: usize,
        max_depth: usize,
        n_total: usize,
    ) -> usize {
        let id = self.nodes.len();
        let counts = {
            let mut c = vec![0usize; n_classes];
            for &i in &members {
                c[labels[i]] += 1;
            }
            c
        };
        let majority = (0..n_classes).fold(0, |b, k| if counts[k] > counts[b] { k } else { b });
        self.nodes.push(CartNode::Leaf { class: majority });
        let parent_h = label_entropy(&counts, members.len());
        if depth >= max_depth || parent_h == 0.0 {
            return id;
        }

        let m = members.len();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = members.clone();
        for f in 0..x.rows() {
            let row = x.row(f);
            order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            let mut left = vec![0usize; n_classes];
            for i in 0..m - 1 {
                left[labels[order[i]]] += 1;
                let (lo, hi) = (row[order[i]], row[order[i + 1]]);
                if !(lo < hi) {
                    continue;
                }
                let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let nl = i + 1;
                let after = nl as f64 / m as f64 * label_entropy(&left, nl)
                    + (m - nl) as f64 / m as f64 * label_entropy(&right, m - nl);
                let gain = parent_h - after;
                if best.is_none_or(|(_, _, g)| gain > g + GAIN_TIE) {
                    best = Some((f, midpoint(lo, hi), gain));
                }
            }
        }
        let Some((feature, threshold, gain)) = best.filter(|b| b.2 > 0.0) else {
            return id;
        };
        self.weighted_gain[feature] += m as f64 / n_total as f64 * gain;
        let row = x.row(feature);
        let (l, r): (Vec<usize>, Vec<usize>) =
            members.into_iter().partition(|&i| row[i] < threshold);
        let left = self.grow(x, labels, n_classes, l, depth + 1, max_depth, n_total);
        let right = self.grow(x, labels, n_classes, r, depth + 1, max_depth, n_total);
        self.nodes[id] = CartNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        if features.rows() != self.n_features {
            return Err(GbtError::FeatureCount {
                expected: self.n_features,
                found: features.rows(),
            });
        }
        Ok((0..features.cols())
            .map(|s| {
                let mut id = 0;
                loop {
                    match self.nodes[id] {
                        CartNode::Leaf { class } => return class,
                        CartNode::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            id = if features.get(feature, s) < threshold {
                                left
                            } else {
                                right
                            }
                        }
                    }
                }
            })
            .collect())
    }

    pub fn feature_importance(&self) -> ImportanceVector {
        ImportanceVector::from_gains(&self.weighted_gain)
    }
}
