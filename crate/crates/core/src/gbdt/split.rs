use super::{GbtError, Result};
use crate::numeric::Matrix;

/// Gains closer than this are treated as ties.
pub(crate) const GAIN_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConstraints {
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_size: usize,
    pub min_child_hess: f64,
}

impl SplitConstraints {
    pub fn new(lambda: f64, gamma: f64) -> Self {
        SplitConstraints {
            lambda,
            gamma,
            min_child_size: 1,
            min_child_hess: 1e-6,
        }
    }
}

/// Samples with `x[feature] < threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitDecision {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    pub left_grad: f64,
    pub left_hess: f64,
    pub left_count: usize,
    pub right_grad: f64,
    pub right_hess: f64,
    pub right_count: usize,
}

/// Regularized loss reduction of splitting a node into (left, right):
/// `0.5 * [GL²/(HL+λ) + GR²/(HR+λ) − (GL+GR)²/(HL+HR+λ)] − γ`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

/// Threshold strictly between two distinct sorted values `lo < hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let t = lo + (hi - lo) * 0.5;
    if t > lo {
        t
    } else {
        hi
    }
}

/// Exhaustive search over midpoints between consecutive distinct values of
/// every feature, with default child constraints.
pub fn best_split(
    features: &Matrix,
    grad: &[f64],
    hess: &[f64],
    lambda: f64,
    gamma: f64,
) -> Result<Option<SplitDecision>> {
    best_split_with(features, grad, hess, &SplitConstraints::new(lambda, gamma))
}

pub fn best_split_with(
    features: &Matrix,
    grad: &[f64],
    hess: &[f64],
    constraints: &SplitConstraints,
) -> Result<Option<SplitDecision>> {
    let n = features.cols();
    if n == 0 {
        return Err(GbtError::Empty);
    }
    for (what, len) in [("grad", grad.len()), ("hess", hess.len())] {
        if len != n {
            return Err(GbtError::Length {
                what,
                expected: n,
                found: len,
            });
        }
    }
    if hess.iter().any(|h| *h < 0.0) {
        return Err(GbtError::NegativeHessian);
    }
    let total_g: f64 = grad.iter().sum();
    let total_h: f64 = hess.iter().sum();
    let mut best = None;
    let mut order: Vec<usize> = (0..n).collect();
    for f in 0..features.rows() {
        let row = features.row(f);
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        scan_feature(
            f,
            row,
            &order,
            grad,
            hess,
            total_g,
            total_h,
            constraints,
            &mut best,
        );
    }
    Ok(best.filter(|d| d.gain > 0.0))
}

/// Scans one feature whose node samples are given in ascending value order
/// and folds any better candidate into `best`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn scan_feature(
    feature: usize,
    values: &[f64],
    sorted: &[usize],
    grad: &[f64],
    hess: &[f64],
    total_g: f64,
    total_h: f64,
    c: &SplitConstraints,
    best: &mut Option<SplitDecision>,
) {
    let n = sorted.len();
    let (mut gl, mut hl) = (0.0, 0.0);
    for i in 0..n.saturating_sub(1) {
        let s = sorted[i];
        gl += grad[s];
        hl += hess[s];
        let lo = values[s];
        let hi = values[sorted[i + 1]];
        if !(lo < hi) {
            continue;
        }
        let left_count = i + 1;
        let right_count = n - left_count;
        if left_count < c.min_child_size || right_count < c.min_child_size {
            continue;
        }
        let gr = total_g - gl;
        let hr = total_h - hl;
        if hl < c.min_child_hess || hr < c.min_child_hess {
            continue;
        }
        let gain = split_gain(gl, hl, gr, hr, c.lambda, c.gamma);
        let better = match best {
            None => true,
            Some(b) => gain > b.gain + GAIN_TIE,
        };
        if better && gain.is_finite() {
            *best = Some(SplitDecision {
                feature,
                threshold: midpoint(lo, hi),
                gain,
                left_grad: gl,
                left_hess: hl,
                left_count,
                right_grad: gr,
                right_hess: hr,
                right_count,
            });
        }
    }
}
