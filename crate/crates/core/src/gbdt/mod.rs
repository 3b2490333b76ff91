//! Gradient-boosted decision trees grown with exact greedy second-order
//! split search, plus gain-based feature importance.
//!
//! Feature matrices follow the crate-wide orientation: one row per feature,
//! one column per sample.

mod entropy;
mod model;
mod split;
mod tree;

pub use entropy::{entropy, information_gain, ClassificationTree};
pub use model::GbtModel;
pub use split::{best_split, best_split_with, split_gain, SplitConstraints, SplitDecision};
pub use tree::{Tree, TreeNode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{Matrix, NumericError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GbtError {
    #[error("empty sample set")]
    Empty,
    #[error("at least 2 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("label {label} outside [0, {n_classes})")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("classification needs at least 2 classes, got {0}")]
    ClassCount(usize),
    #[error("expected {expected} features, got {found}")]
    FeatureCount { expected: usize, found: usize },
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid probability vector: {0}")]
    Probabilities(String),
    #[error("hessian entries must be non-negative")]
    NegativeHessian,
    #[error("children do not partition the parent labels")]
    NotAPartition,
    #[error("invalid importance vector: {0}")]
    Importance(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

pub type Result<T> = std::result::Result<T, GbtError>;

/// How feature importance is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMode {
    /// Accumulated regularized split gain over the boosted ensemble.
    #[default]
    Gain,
    /// Information gain of a single entropy-split classification tree.
    Entropy,
}

/// Booster hyperparameters. Defaults follow stock XGBoost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Initial probability for binary problems; 0.5 is a raw margin of 0.
    pub base_score: f64,
    pub min_child_size: usize,
    pub min_child_hess: f64,
    pub importance_mode: ImportanceMode,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_estimators: 100,
            max_depth: 6,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            base_score: 0.5,
            min_child_size: 1,
            min_child_hess: 1e-6,
            importance_mode: ImportanceMode::Gain,
        }
    }
}

impl GbtConfig {
    pub fn constraints(&self) -> SplitConstraints {
        SplitConstraints {
            lambda: self.lambda,
            gamma: self.gamma,
            min_child_size: self.min_child_size.max(1),
            min_child_hess: self.min_child_hess,
        }
    }
}

const SUM_TOLERANCE: f64 = 1e-9;

/// Non-negative per-feature weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ImportanceVector(Vec<f64>);

impl ImportanceVector {
    /// Validates that `values` is non-negative and sums to one.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let v = ImportanceVector(values);
        v.check()?;
        Ok(v)
    }

    pub fn uniform(k: usize) -> Self {
        ImportanceVector(vec![1.0 / k as f64; k])
    }

    /// Normalizes raw gains; falls back to uniform when the total is zero.
    pub fn from_gains(gains: &[f64]) -> Self {
        let total: f64 = gains.iter().filter(|g| **g > 0.0).sum();
        if total <= 0.0 || !total.is_finite() {
            return ImportanceVector::uniform(gains.len());
        }
        ImportanceVector(gains.iter().map(|g| g.max(0.0) / total).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Re-checks the invariants; used by audits of stored vectors.
    pub fn check(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(GbtError::Importance("empty".into()));
        }
        if let Some(bad) = self.0.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(GbtError::Importance(format!(
                "entry {bad} is negative or non-finite"
            )));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(GbtError::Importance(format!("entries sum to {sum}")));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for ImportanceVector {
    type Error = GbtError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ImportanceVector::new(values)
    }
}

impl From<ImportanceVector> for Vec<f64> {
    fn from(v: ImportanceVector) -> Self {
        v.0
    }
}

/// A fitted model that can report feature importance. Only one of these is
/// alive per trainer at a time.
#[derive(Debug, Clone)]
pub enum ImportanceModel {
    Boosted(GbtModel),
    Cart(ClassificationTree),
}

impl ImportanceModel {
    pub fn fit(
        features: &Matrix,
        labels: &[usize],
        n_classes: usize,
        config: &GbtConfig,
    ) -> Result<Self> {
        Ok(match config.importance_mode {
            ImportanceMode::Gain => {
                ImportanceModel::Boosted(GbtModel::fit(features, labels, n_classes, config)?)
            }
            ImportanceMode::Entropy => ImportanceModel::Cart(ClassificationTree::fit(
                features,
                labels,
                n_classes,
                config.max_depth,
            )?),
        })
    }

    pub fn feature_importance(&self) -> ImportanceVector {
        match self {
            ImportanceModel::Boosted(m) => m.feature_importance(),
            ImportanceModel::Cart(t) => t.feature_importance(),
        }
    }
}

/// Validates labels and returns how many distinct classes occur.
pub(crate) fn check_labels(labels: &[usize], n_classes: usize) -> Result<usize> {
    if n_classes < 2 {
        return Err(GbtError::ClassCount(n_classes));
    }
    let mut seen = vec![false; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(GbtError::LabelOutOfRange {
                label: l,
                n_classes,
            });
        }
        seen[l] = true;
    }
    Ok(seen.iter().filter(|s| **s).count())
}
