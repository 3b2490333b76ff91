use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::Tree;
use super::{check_labels, GbtConfig, GbtError, ImportanceVector, Result};
use crate::numeric::{sigmoid, softmax_in_place, Matrix};

/// Margin used for a single-class training set (probability 1 − 1e-6).
const DEGENERATE_MARGIN: f64 = 13.815509557935018;
const LOG_LOSS_FLOOR: f64 = 1e-15;

/// Newton-boosted classification ensemble. Binary problems use one logistic
/// tree per round; `k > 2` classes use `k` softmax trees per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    n_features: usize,
    n_classes: usize,
    config: GbtConfig,
    base_margin: Vec<f64>,
    trees: Vec<Vec<Tree>>,
    feature_gain: Vec<f64>,
    /// Set when training saw a single class; the model is then constant.
    degenerate: bool,
    /// Training log loss after each round.
    train_logloss: Vec<f64>,
}

fn outputs_for(n_classes: usize) -> usize {
    if n_classes == 2 {
        1
    } else {
        n_classes
    }
}

fn presort(features: &Matrix) -> Vec<Vec<usize>> {
    (0..features.rows())
        .map(|f| {
            let row = features.row(f);
            let mut order: Vec<usize> = (0..features.cols()).collect();
            order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            order
        })
        .collect()
}

impl GbtModel {
    /// Boosts `config.n_estimators` rounds on `features` (features x samples).
    pub fn fit(
        features: &Matrix,
        labels: &[usize],
        n_classes: usize,
        config: &GbtConfig,
    ) -> Result<GbtModel> {
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
        if n < 2 {
            return Err(GbtError::TooFewSamples(n));
        }
        let present = check_labels(labels, n_classes)?;
        let n_out = outputs_for(n_classes);
        let mut model = GbtModel {
            n_features: features.rows(),
            n_classes,
            config: config.clone(),
            base_margin: vec![0.0; n_out],
            trees: Vec::new(),
            feature_gain: vec![0.0; features.rows()],
            degenerate: false,
            train_logloss: Vec::new(),
        };
        if present == 1 {
            let class = labels[0];
            model.degenerate = true;
            if n_out == 1 {
                model.base_margin[0] = if class == 1 {
                    DEGENERATE_MARGIN
                } else {
                    -DEGENERATE_MARGIN
                };
            } else {
                model.base_margin[class] = DEGENERATE_MARGIN;
            }
            return Ok(model);
        }
        if n_out == 1 {
            let p = config.base_score.clamp(1e-12, 1.0 - 1e-12);
            model.base_margin[0] = (p / (1.0 - p)).ln();
        }

        let presorted = presort(features);
        // margins[i * n_out + k]
        let mut margins: Vec<f64> = (0..n).flat_map(|_| model.base_margin.clone()).collect();
        let mut probs = vec![0.0; n * n_out.max(2)];
        for _ in 0..config.n_estimators {
            let mut stats: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![0.0; n], vec![0.0; n]); n_out];
            if n_out == 1 {
                let (g, h) = &mut stats[0];
                for i in 0..n {
                    let p = sigmoid(margins[i]);
                    let y = if labels[i] == 1 { 1.0 } else { 0.0 };
                    g[i] = p - y;
                    h[i] = p * (1.0 - p);
                }
            } else {
                let mut p = vec![0.0; n_out];
                for i in 0..n {
                    p.copy_from_slice(&margins[i * n_out..(i + 1) * n_out]);
                    softmax_in_place(&mut p);
                    for (k, (g, h)) in stats.iter_mut().enumerate() {
                        let y = if labels[i] == k { 1.0 } else { 0.0 };
                        g[i] = p[k] - y;
                        h[i] = p[k] * (1.0 - p[k]);
                    }
                }
            }

            let grown: Vec<(Tree, Vec<f64>)> = stats
                .par_iter()
                .map(|(g, h)| {
                    let mut gain = vec![0.0; features.rows()];
                    let tree = Tree::grow(features, &presorted, g, h, config, &mut gain);
                    (tree, gain)
                })
                .collect();

            let mut round = Vec::with_capacity(n_out);
            for (k, (tree, gain)) in grown.into_iter().enumerate() {
                for (acc, g) in model.feature_gain.iter_mut().zip(gain) {
                    *acc += g;
                }
                for i in 0..n {
                    margins[i * n_out + k] += tree.predict_sample(features, i);
                }
                round.push(tree);
            }
            model.trees.push(round);
            model.margins_to_probs(&margins, &mut probs);
            model
                .train_logloss
                .push(mean_log_loss(&probs, labels, n_classes));
        }
        Ok(model)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn config(&self) -> &GbtConfig {
        &self.config
    }

    pub fn trees(&self) -> &[Vec<Tree>] {
        &self.trees
    }

    pub fn feature_gain(&self) -> &[f64] {
        &self.feature_gain
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn train_logloss(&self) -> &[f64] {
        &self.train_logloss
    }

    /// Model with no trees: predicts from the base margins alone.
    pub fn constant(n_features: usize, n_classes: usize, config: &GbtConfig) -> Result<GbtModel> {
        check_labels(&[], n_classes)?;
        let mut base_margin = vec![0.0; outputs_for(n_classes)];
        if n_classes == 2 {
            let p = config.base_score.clamp(1e-12, 1.0 - 1e-12);
            base_margin[0] = (p / (1.0 - p)).ln();
        }
        Ok(GbtModel {
            n_features,
            n_classes,
            config: config.clone(),
            base_margin,
            trees: Vec::new(),
            feature_gain: vec![0.0; n_features],
            degenerate: false,
            train_logloss: Vec::new(),
        })
    }

    /// Raw additive scores, `samples x outputs`.
    pub fn predict_margin(&self, features: &Matrix) -> Result<Matrix> {
        if features.rows() != self.n_features {
            return Err(GbtError::FeatureCount {
                expected: self.n_features,
                found: features.rows(),
            });
        }
        let n_out = self.base_margin.len();
        let n = features.cols();
        let mut out = Vec::with_capacity(n * n_out);
        for i in 0..n {
            for k in 0..n_out {
                let score: f64 = self
                    .trees
                    .iter()
                    .map(|round| round[k].predict_sample(features, i))
                    .sum();
                out.push(self.base_margin[k] + score);
            }
        }
        Ok(Matrix::from_vec(n, n_out, out)?)
    }

    /// Class probabilities, one row per sample.
    pub fn predict_proba(&self, features: &Matrix) -> Result<Matrix> {
        let margins = self.predict_margin(features)?;
        let mut probs = vec![0.0; margins.rows() * self.n_classes];
        self.margins_to_probs(margins.as_slice(), &mut probs);
        Ok(Matrix::from_vec(margins.rows(), self.n_classes, probs)?)
    }

    pub fn feature_importance(&self) -> ImportanceVector {
        ImportanceVector::from_gains(&self.feature_gain)
    }

    fn margins_to_probs(&self, margins: &[f64], probs: &mut [f64]) {
        if self.n_classes == 2 {
            for (i, m) in margins.iter().enumerate() {
                let p = sigmoid(*m);
                probs[2 * i] = 1.0 - p;
                probs[2 * i + 1] = p;
            }
        } else {
            probs.copy_from_slice(margins);
            for row in probs.chunks_mut(self.n_classes) {
                softmax_in_place(row);
            }
        }
    }
}

fn mean_log_loss(probs: &[f64], labels: &[usize], n_classes: usize) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[i * n_classes + y].max(LOG_LOSS_FLOOR).ln())
        .sum();
    total / labels.len() as f64
}
