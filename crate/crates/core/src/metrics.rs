//! Classification metrics: confusion matrix, precision/recall/F1 report,
//! ROC and precision-recall curves, and log loss.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::Matrix;

/// Probabilities are floored here before taking the log.
pub const LOG_LOSS_FLOOR: f64 = 1e-15;
const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no samples")]
    Empty,
    #[error("length mismatch: {a} vs {b}")]
    Length { a: usize, b: usize },
    #[error("label {label} outside [0, {n_classes})")]
    Label { label: usize, n_classes: usize },
    #[error("both classes must be present")]
    SingleClass,
    #[error("no positive samples")]
    NoPositives,
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error("probability matrix is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Shape {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("probability row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == 0 || b == 0 {
        return Err(MetricsError::Empty);
    }
    if a != b {
        return Err(MetricsError::Length { a, b });
    }
    Ok(())
}

/// Rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Self> {
        check_lengths(y_true.len(), y_pred.len())?;
        let mut counts = vec![vec![0u64; n_classes]; n_classes];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            for label in [t, p] {
                if label >= n_classes {
                    return Err(MetricsError::Label { label, n_classes });
                }
            }
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n_classes()).map(|k| self.counts[k][k]).sum()
    }

    fn predicted(&self, k: usize) -> u64 {
        self.counts.iter().map(|row| row[k]).sum()
    }

    fn actual(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when any of the three ratios had a zero denominator and was
    /// reported as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub micro: Averages,
    pub macro_avg: Averages,
    pub weighted: Averages,
    pub support: u64,
    pub zero_division: bool,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64, flag: &mut bool) -> f64 {
    if p + r == 0.0 {
        *flag = true;
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn classification_report(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<ClassificationReport> {
    let cm = ConfusionMatrix::new(y_true, y_pred, n_classes)?;
    let total = cm.total();
    let mut classes = Vec::with_capacity(n_classes);
    for k in 0..n_classes {
        let tp = cm.counts[k][k];
        let mut flag = false;
        let precision = ratio(tp, cm.predicted(k), &mut flag);
        let recall = ratio(tp, cm.actual(k), &mut flag);
        let f1 = harmonic(precision, recall, &mut flag);
        classes.push(ClassMetrics {
            precision,
            recall,
            f1,
            support: cm.actual(k),
            zero_division: flag,
        });
    }
    let accuracy = cm.correct() as f64 / total as f64;
    // Every wrong prediction is one false positive and one false negative,
    // so micro precision and recall both reduce to accuracy.
    let mut micro_flag = false;
    let micro_f1 = harmonic(accuracy, accuracy, &mut micro_flag);
    let micro = Averages {
        precision: accuracy,
        recall: accuracy,
        f1: micro_f1,
    };
    let k = n_classes as f64;
    let macro_avg = Averages {
        precision: classes.iter().map(|c| c.precision).sum::<f64>() / k,
        recall: classes.iter().map(|c| c.recall).sum::<f64>() / k,
        f1: classes.iter().map(|c| c.f1).sum::<f64>() / k,
    };
    let w = |f: fn(&ClassMetrics) -> f64| {
        classes.iter().map(|c| c.support as f64 * f(c)).sum::<f64>() / total as f64
    };
    let weighted = Averages {
        precision: w(|c| c.precision),
        recall: w(|c| c.recall),
        f1: w(|c| c.f1),
    };
    let zero_division = micro_flag || classes.iter().any(|c| c.zero_division);
    Ok(ClassificationReport {
        classes,
        accuracy,
        micro,
        macro_avg,
        weighted,
        support: total,
        zero_division,
        confusion: cm,
    })
}

impl ClassificationReport {
    /// Aligned plain-text table, one row per class plus the averages.
    pub fn to_text(&self, class_names: &[String]) -> String {
        let names: Vec<String> = (0..self.classes.len())
            .map(|k| class_names.get(k).cloned().unwrap_or_else(|| k.to_string()))
            .collect();
        let width = names
            .iter()
            .map(String::len)
            .chain([12])
            .max()
            .unwrap_or(12);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>width$} {:>10} {:>10} {:>10} {:>10}",
            "", "precision", "recall", "f1-score", "support"
        );
        let _ = writeln!(out);
        for (name, c) in names.iter().zip(&self.classes) {
            let _ = writeln!(
                out,
                "{name:>width$} {:>10.4} {:>10.4} {:>10.4} {:>10}",
                c.precision, c.recall, c.f1, c.support
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:>width$} {:>10} {:>10} {:>10.4} {:>10}",
            "accuracy", "", "", self.accuracy, self.support
        );
        for (label, a) in [
            ("macro avg", &self.macro_avg),
            ("weighted avg", &self.weighted),
        ] {
            let _ = writeln!(
                out,
                "{label:>width$} {:>10.4} {:>10.4} {:>10.4} {:>10}",
                a.precision, a.recall, a.f1, self.support
            );
        }
        if self.zero_division {
            let _ = writeln!(
                out,
                "\nnote: some ratios had a zero denominator and are reported as 0"
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    /// Scores `>= threshold` count as positive. The leading endpoint uses
    /// `+inf`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoints {
    pub x_name: String,
    pub y_name: String,
    pub points: Vec<CurvePoint>,
}

impl CurvePoints {
    /// Three-column CSV: x, y, threshold.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},threshold\n", self.x_name, self.y_name);
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.x, p.y, p.threshold);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub curve: CurvePoints,
    pub auc: f64,
}

/// Indices sorted by descending score, grouped by equal score.
fn score_groups(scores: &[f64]) -> Result<Vec<(f64, Vec<usize>)>> {
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(bad));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some((s, members)) if *s == scores[i] => members.push(i),
            _ => groups.push((scores[i], vec![i])),
        }
    }
    Ok(groups)
}

/// ROC curve with one point per distinct score; tied scores move the curve
/// diagonally, which is what gives ties half credit in the AUC.
pub fn roc_auc(y_true: &[bool], scores: &[f64]) -> Result<RocCurve> {
    check_lengths(y_true.len(), scores.len())?;
    let pos = y_true.iter().filter(|y| **y).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut points = vec![CurvePoint {
        x: 0.0,
        y: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area2 = 0.0;
    for (score, members) in score_groups(scores)? {
        let (tp0, fp0) = (tp, fp);
        for i in members {
            if y_true[i] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        // Trapezoid in count space; scaled once at the end.
        area2 += (fp - fp0) as f64 * (tp + tp0) as f64;
        points.push(CurvePoint {
            x: fp as f64 / neg as f64,
            y: tp as f64 / pos as f64,
            threshold: score,
        });
    }
    Ok(RocCurve {
        curve: CurvePoints {
            x_name: "fpr".into(),
            y_name: "tpr".into(),
            points,
        },
        auc: area2 / (2.0 * pos as f64 * neg as f64),
    })
}

/// Precision-recall pairs in descending threshold order, led by the
/// `(recall 0, precision 1)` endpoint where nothing is predicted positive.
pub fn pr_curve(y_true: &[bool], scores: &[f64]) -> Result<CurvePoints> {
    check_lengths(y_true.len(), scores.len())?;
    let pos = y_true.iter().filter(|y| **y).count();
    if pos == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut points = vec![CurvePoint {
        x: 0.0,
        y: 1.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut predicted) = (0usize, 0usize);
    for (score, members) in score_groups(scores)? {
        predicted += members.len();
        tp += members.iter().filter(|&&i| y_true[i]).count();
        points.push(CurvePoint {
            x: tp as f64 / pos as f64,
            y: tp as f64 / predicted as f64,
            threshold: score,
        });
    }
    Ok(CurvePoints {
        x_name: "recall".into(),
        y_name: "precision".into(),
        points,
    })
}

/// Mean negative log-probability of the true class. `probabilities` has one
/// row per sample and one column per class.
pub fn log_loss(y_true: &[usize], probabilities: &Matrix, n_classes: usize) -> Result<f64> {
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    if probabilities.shape() != (y_true.len(), n_classes) {
        return Err(MetricsError::Shape {
            rows: probabilities.rows(),
            cols: probabilities.cols(),
            expected_rows: y_true.len(),
            expected_cols: n_classes,
        });
    }
    let mut total = 0.0;
    for (i, &y) in y_true.iter().enumerate() {
        if y >= n_classes {
            return Err(MetricsError::Label {
                label: y,
                n_classes,
            });
        }
        let row = probabilities.row(i);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(MetricsError::RowSum { row: i, sum });
        }
        total -= row[y].max(LOG_LOSS_FLOOR).ln();
    }
    Ok(total / y_true.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_report() {
        let y = [0, 1, 2, 1, 0];
        let r = classification_report(&y, &y, 3).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for c in &r.classes {
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(r.weighted.f1, 1.0);
        assert!(!r.zero_division);
    }

    #[test]
    fn hand_confusion_matrix() {
        let r = classification_report(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        let c1 = &r.classes[1];
        assert!((c1.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c1.recall, 1.0);
        assert!((c1.f1 - 0.8).abs() < 1e-15);
        assert_eq!(r.confusion.counts, vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(r.micro.precision, r.accuracy);
    }

    #[test]
    fn zero_division_is_flagged() {
        let r = classification_report(&[0, 0], &[0, 0], 2).unwrap();
        assert_eq!(r.classes[1].precision, 0.0);
        assert!(r.classes[1].zero_division);
        assert!(r.zero_division);
        assert!(r.to_text(&[]).contains("zero denominator"));
        assert_eq!(classification_report(&[], &[], 2), Err(MetricsError::Empty));
    }

    #[test]
    fn auc_examples() {
        // Positive 0.9 beats both negatives, 0.4 beats only 0.1: 3 of 4 pairs.
        let r = roc_auc(&[false, true, false, true], &[0.1, 0.9, 0.8, 0.4]).unwrap();
        assert_eq!(r.auc, 0.75);
        assert_eq!(
            roc_auc(&[false, true, true], &[0.1, 0.8, 0.9]).unwrap().auc,
            1.0
        );
        let flat = roc_auc(&[false, true, true, false], &[0.3; 4]).unwrap();
        assert_eq!(flat.auc, 0.5);
        assert_eq!(flat.curve.points.len(), 2);
        assert_eq!(
            roc_auc(&[true, true], &[0.1, 0.2]),
            Err(MetricsError::SingleClass)
        );
    }

    #[test]
    fn pr_examples() {
        let c = pr_curve(&[true, false], &[0.9, 0.8]).unwrap();
        let xy: Vec<(f64, f64)> = c.points.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(xy, vec![(0.0, 1.0), (1.0, 1.0), (1.0, 0.5)]);
        let perfect = pr_curve(&[true, true, false], &[0.9, 0.8, 0.1]).unwrap();
        assert!(perfect.points[..3].iter().all(|p| p.y == 1.0));
        assert_eq!(pr_curve(&[false], &[0.2]), Err(MetricsError::NoPositives));
        assert!(c
            .to_csv()
            .starts_with("recall,precision,threshold\n0,1,inf\n1,1,0.9\n"));
    }

    #[test]
    fn log_loss_examples() {
        let uniform = Matrix::filled(2, 3, 1.0 / 3.0).unwrap();
        assert!((log_loss(&[0, 2], &uniform, 3).unwrap() - 3f64.ln()).abs() < 1e-12);
        let onehot = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(log_loss(&[1, 0], &onehot, 2).unwrap().abs() < 1e-12);
        let half = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert!((log_loss(&[1], &half, 2).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            log_loss(&[1], &half, 3),
            Err(MetricsError::Shape { .. })
        ));
        let bad = Matrix::from_rows(&[vec![0.5, 0.6]]).unwrap();
        assert!(matches!(
            log_loss(&[1], &bad, 2),
            Err(MetricsError::RowSum { .. })
        ));
    }
}
