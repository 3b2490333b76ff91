//! Evaluation summaries, curve files and small output helpers.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use xbnet::metrics::{classification_report, log_loss, pr_curve, roc_auc, ClassificationReport};
use xbnet::network::Prediction;

use crate::error::{CliError, Result};

/// Metrics for one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEvaluation {
    pub n_samples: usize,
    pub accuracy: f64,
    pub log_loss: f64,
    /// Positive-class AUC; binary problems only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    pub report: ClassificationReport,
}

pub fn evaluate_split(pred: &Prediction, y: &[usize], n_classes: usize) -> Result<SplitEvaluation> {
    let report = classification_report(y, &pred.labels, n_classes)?;
    let auc = if n_classes == 2 {
        let truth: Vec<bool> = y.iter().map(|&l| l == 1).collect();
        let scores = pred.probabilities.column(1);
        // A split holding a single class has no defined AUC.
        roc_auc(&truth, &scores).ok().map(|r| r.auc)
    } else {
        None
    };
    Ok(SplitEvaluation {
        n_samples: y.len(),
        accuracy: report.accuracy,
        log_loss: log_loss(y, &pred.probabilities, n_classes)?,
        auc,
        report,
    })
}

/// ROC and PR curve CSVs with a leading `class` column. Binary problems
/// emit the positive class only; multiclass problems one-vs-rest per class
/// present in `y`.
pub fn curve_csvs(
    pred: &Prediction,
    y: &[usize],
    class_names: &[String],
) -> Result<(String, String)> {
    let mut roc = String::from("class,fpr,tpr,threshold\n");
    let mut pr = String::from("class,recall,precision,threshold\n");
    let classes: Vec<usize> = if class_names.len() == 2 {
        vec![1]
    } else {
        (0..class_names.len()).collect()
    };
    for c in classes {
        let truth: Vec<bool> = y.iter().map(|&l| l == c).collect();
        if !truth.contains(&true) || truth.iter().all(|&t| t) {
            continue;
        }
        let scores = pred.probabilities.column(c);
        let name = csv_field(&class_names[c]);
        for p in roc_auc(&truth, &scores)?.curve.points {
            let _ = writeln!(roc, "{name},{},{},{}", p.x, p.y, p.threshold);
        }
        for p in pr_curve(&truth, &scores)?.points {
            let _ = writeln!(pr, "{name},{},{},{}", p.x, p.y, p.threshold);
        }
    }
    Ok((roc, pr))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Unix timestamps, pinned to zero in fixed-clock mode so reports are
/// reproducible byte for byte.
#[derive(Debug, Clone, Copy, Default)]
pub struct Clock {
    pub fixed: bool,
}

impl Clock {
    pub fn now(&self) -> u64 {
        if self.fixed {
            return 0;
        }
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    }

    /// Wall seconds since `start`, or 0 in fixed-clock mode.
    pub fn seconds_since(&self, start: std::time::Instant) -> f64 {
        if self.fixed {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        }
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Invalid(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}
