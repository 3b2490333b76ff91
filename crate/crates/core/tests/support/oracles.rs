//! Independent reference implementations and the randomized checks built on
//! them. Shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use xbnet::data::batch_indices;
use xbnet::gbdt::{best_split, entropy, information_gain};
use xbnet::metrics::roc_auc;
use xbnet::network::{encode_targets, DenseLayer};
use xbnet::optimizer::{BaseOptimizer, Trainer};
use xbnet::{Activation, Matrix, Rng, Samples, TrainConfig, XbnetModel};

pub type Check = Result<String, String>;

fn rand_int(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + (rng.next_f64() * (hi - lo + 1) as f64) as usize % (hi - lo + 1)
}

fn rand_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    rng.uniform_matrix(-scale, scale, rows, cols).unwrap()
}

fn random_network(rng: &mut Rng) -> (XbnetModel, Matrix, Vec<usize>) {
    let n_in = rand_int(rng, 2, 5);
    let n_hidden = rand_int(rng, 1, 2);
    let n_classes = if rng.next_f64() < 0.5 {
        2
    } else {
        rand_int(rng, 3, 4)
    };
    let hidden_acts = [Activation::Sigmoid, Activation::Identity, Activation::Relu];
    let mut layers = Vec::new();
    let mut width = n_in;
    for _ in 0..n_hidden {
        let out = rand_int(rng, 2, 5);
        let act = hidden_acts[rand_int(rng, 0, 2)];
        layers.push(
            DenseLayer::new(
                rand_matrix(rng, out, width, 0.8),
                rand_matrix(rng, out, 1, 0.3),
                act,
            )
            .unwrap(),
        );
        width = out;
    }
    let (out, head) = if n_classes == 2 {
        (1, Activation::Sigmoid)
    } else {
        (n_classes, Activation::Softmax)
    };
    layers.push(
        DenseLayer::new(
            rand_matrix(rng, out, width, 0.8),
            rand_matrix(rng, out, 1, 0.3),
            head,
        )
        .unwrap(),
    );
    let m = rand_int(rng, 3, 8);
    let x = rand_matrix(rng, n_in, m, 1.5);
    let y = (0..m).map(|_| rand_int(rng, 0, n_classes - 1)).collect();
    (
        XbnetModel::new(layers, n_classes, Vec::new()).unwrap(),
        x,
        y,
    )
}

fn total_cost(model: &XbnetModel, x: &Matrix, target: &Matrix, lambda: f64, m: f64) -> f64 {
    let pred = model.forward(x).unwrap();
    model.compute_cost(&pred, target, lambda, m).unwrap().total
}

fn perturbed(m: &Matrix, r: usize, c: usize, delta: f64) -> Matrix {
    let mut out = m.clone();
    out.set(r, c, m.get(r, c) + delta).unwrap();
    out
}

/// Analytic gradients against central differences with step `h`. Relative
/// error is `|a - n| / max(|a|, |n|, 1e-4)` so that gradients that are zero
/// up to rounding are compared absolutely.
pub fn gradient_check(cases: usize, seed: u64, h: f64, tol: f64) -> Check {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    for case in 0..cases {
        let (mut model, x, y) = random_network(&mut rng);
        let lambda = if case % 2 == 0 { 0.0 } else { 0.3 };
        let m = y.len() as f64;
        let target = encode_targets(&y, model.n_classes()).unwrap();
        model.forward_train(&x).unwrap();
        let grads = model.backward(&target, lambda, m).unwrap();
        for (l, g) in grads.iter().enumerate() {
            let layer = model.layers()[l].clone();
            for (is_bias, param, analytic) in [
                (false, layer.weights(), &g.weights),
                (true, layer.bias(), &g.bias),
            ] {
                for r in 0..param.rows() {
                    for c in 0..param.cols() {
                        let eval = |delta: f64| {
                            let mut probe = model.clone();
                            let p = perturbed(param, r, c, delta);
                            if is_bias {
                                probe.layer_mut(l).set_bias(p).unwrap();
                            } else {
                                probe.layer_mut(l).set_weights(p).unwrap();
                            }
                            total_cost(&probe, &x, &target, lambda, m)
                        };
                        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                        let a = analytic.get(r, c);
                        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
                        compared += 1;
                        if rel > tol {
                            return Err(format!(
                                "case {case} layer {l} {} [{r},{c}]: analytic {a:e} numeric {numeric:e} rel {rel:e}",
                                if is_bias { "bias" } else { "weight" }
                            ));
                        }
                        worst = worst.max(rel);
                    }
                }
            }
        }
    }
    Ok(format!(
        "{cases} networks, {compared} parameters, worst relative error {worst:.2e}"
    ))
}

fn entropy_oracle(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v > 0.0 {
            h -= v * v.ln() / std::f64::consts::LN_2;
        }
    }
    h
}

fn label_entropy_oracle(labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let n = labels.len() as f64;
    let p: Vec<f64> = (0..k)
        .map(|c| labels.iter().filter(|&&l| l == c).count() as f64 / n)
        .collect();
    entropy_oracle(&p)
}

/// Entropy and information gain against the textbook formulas.
pub fn entropy_gain_check(cases: usize, seed: u64, tol: f64) -> Check {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let k = rand_int(&mut rng, 1, 8);
        let mut p: Vec<f64> = (0..k)
            .map(|_| {
                if rng.next_f64() < 0.2 {
                    0.0
                } else {
                    rng.next_f64()
                }
            })
            .collect();
        if p.iter().all(|v| *v == 0.0) {
            p[0] = 1.0;
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        let got = entropy(&p).map_err(|e| format!("case {case}: {e}"))?;
        let err = (got - entropy_oracle(&p)).abs();
        worst = worst.max(err);
        if err > tol {
            return Err(format!(
                "entropy case {case}: {got} vs {}",
                entropy_oracle(&p)
            ));
        }

        let n = rand_int(&mut rng, 1, 60);
        let classes = rand_int(&mut rng, 1, 5);
        let parent: Vec<usize> = (0..n).map(|_| rand_int(&mut rng, 0, classes - 1)).collect();
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for &l in &parent {
            if rng.next_f64() < 0.5 {
                left.push(l);
            } else {
                right.push(l);
            }
        }
        let nf = n as f64;
        let mut expected = label_entropy_oracle(&parent);
        for child in [&left, &right] {
            if !child.is_empty() {
                expected -= child.len() as f64 / nf * label_entropy_oracle(child);
            }
        }
        let got =
            information_gain(&parent, &left, &right).map_err(|e| format!("case {case}: {e}"))?;
        let err = (got - expected).abs();
        worst = worst.max(err);
        if err > tol {
            return Err(format!("gain case {case}: {got} vs {expected}"));
        }
    }
    Ok(format!(
        "{cases} distributions and {cases} splits, worst error {worst:.2e}"
    ))
}

/// Brute-force split: every feature, every midpoint between consecutive
/// distinct values, children summed directly. The first candidate in
/// (feature, threshold) order wins unless a later one beats it by more than
/// 1e-12; a split must have positive gain.
fn brute_force_split(
    x: &Matrix,
    g: &[f64],
    h: &[f64],
    lambda: f64,
    gamma: f64,
) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x.rows() {
        let mut values: Vec<f64> = x.row(f).to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
            for s in 0..x.cols() {
                if x.get(f, s) < t {
                    gl += g[s];
                    hl += h[s];
                } else {
                    gr += g[s];
                    hr += h[s];
                }
            }
            if hl < 1e-6 || hr < 1e-6 {
                continue;
            }
            let gain = 0.5
                * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda)
                    - (gl + gr) * (gl + gr) / (hl + hr + lambda))
                - gamma;
            if best.is_none_or(|b| gain > b.2 + 1e-12) {
                best = Some((f, t, gain));
            }
        }
    }
    best.filter(|b| b.2 > 0.0)
}

/// `best_split` against exhaustive enumeration. Gradients are multiples of
/// 1/8 and hessians of 1/4 so every partial sum is exact.
pub fn split_check(cases: usize, seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let mut found = 0;
    for case in 0..cases {
        let n = rand_int(&mut rng, 2, 50);
        let k = rand_int(&mut rng, 1, 4);
        let levels = rand_int(&mut rng, 2, 12);
        let data: Vec<f64> = (0..k * n)
            .map(|_| rand_int(&mut rng, 0, levels - 1) as f64)
            .collect();
        let x = Matrix::from_vec(k, n, data).unwrap();
        let g: Vec<f64> = (0..n)
            .map(|_| rand_int(&mut rng, 0, 16) as f64 / 8.0 - 1.0)
            .collect();
        let h: Vec<f64> = (0..n)
            .map(|_| rand_int(&mut rng, 1, 4) as f64 / 4.0)
            .collect();
        let lambda = [0.0, 1.0, 2.5][case % 3];
        let gamma = [0.0, 0.1][case % 2];
        let got = best_split(&x, &g, &h, lambda, gamma).map_err(|e| format!("case {case}: {e}"))?;
        let expected = brute_force_split(&x, &g, &h, lambda, gamma);
        match (got, expected) {
            (None, None) => {}
            (Some(d), Some((f, t, _))) if d.feature == f && d.threshold == t => found += 1,
            (got, expected) => {
                return Err(format!(
                    "case {case}: got {:?}, brute force {expected:?}",
                    got.map(|d| (d.feature, d.threshold, d.gain))
                ))
            }
        }
    }
    Ok(format!("{cases} instances agree ({found} with a split)"))
}

/// `P(score_pos > score_neg) + 0.5 P(tie)` over every pair.
pub fn auc_pairs(y: &[bool], s: &[f64]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for i in (0..y.len()).filter(|&i| y[i]) {
        for j in (0..y.len()).filter(|&j| !y[j]) {
            pairs += 1.0;
            if s[i] > s[j] {
                num += 1.0;
            } else if s[i] == s[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}

pub fn auc_check(cases: usize, seed: u64, tol: f64) -> Check {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let n = rand_int(&mut rng, 2, 200);
        let mut y: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.4).collect();
        y[0] = true;
        y[1] = false;
        // Coarse grids produce plenty of ties.
        let grid = [3.0, 10.0, 1000.0, 1e9][case % 4];
        let s: Vec<f64> = (0..n)
            .map(|_| (rng.next_f64() * grid).round() / grid)
            .collect();
        let got = roc_auc(&y, &s)
            .map_err(|e| format!("case {case}: {e}"))?
            .auc;
        let err = (got - auc_pairs(&y, &s)).abs();
        worst = worst.max(err);
        if err > tol {
            return Err(format!("case {case}: {got} vs {}", auc_pairs(&y, &s)));
        }
    }
    Ok(format!("{cases} score sets, worst error {worst:.2e}"))
}

type Layer = (Vec<Vec<f64>>, Vec<f64>, Activation);

fn act(a: Activation, z: &[f64]) -> Vec<f64> {
    match a {
        Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
        Activation::Identity => z.to_vec(),
        Activation::Sigmoid => z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
        Activation::Softmax => {
            let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        }
    }
}

fn act_grad(a: Activation, z: f64, out: f64) -> f64 {
    match a {
        Activation::Relu => f64::from(u8::from(z > 0.0)),
        Activation::Identity => 1.0,
        Activation::Sigmoid => out * (1.0 - out),
        Activation::Softmax => unreachable!("softmax only as the head"),
    }
}

/// One step of per-sample-loop mini-batch gradient descent with L2.
fn reference_step(layers: &mut [Layer], xs: &[Vec<f64>], ys: &[Vec<f64>], lr: f64, lambda: f64) {
    let m = xs.len() as f64;
    let mut dw: Vec<Vec<Vec<f64>>> = layers
        .iter()
        .map(|(w, _, _)| vec![vec![0.0; w[0].len()]; w.len()])
        .collect();
    let mut db: Vec<Vec<f64>> = layers.iter().map(|(_, b, _)| vec![0.0; b.len()]).collect();
    for (x, y) in xs.iter().zip(ys) {
        let mut inputs = vec![x.clone()];
        let mut zs = Vec::new();
        for (w, b, a) in layers.iter() {
            let input = inputs.last().unwrap();
            let z: Vec<f64> = w
                .iter()
                .zip(b)
                .map(|(row, bi)| row.iter().zip(input).map(|(wi, xi)| wi * xi).sum::<f64>() + bi)
                .collect();
            inputs.push(act(*a, &z));
            zs.push(z);
        }
        let out = inputs.last().unwrap();
        let mut delta: Vec<f64> = out.iter().zip(y).map(|(o, t)| (o - t) / m).collect();
        for l in (0..layers.len()).rev() {
            for (i, d) in delta.iter().enumerate() {
                db[l][i] += d;
                for (j, xin) in inputs[l].iter().enumerate() {
                    dw[l][i][j] += d * xin;
                }
            }
            if l > 0 {
                let (w, _, _) = &layers[l];
                let below = layers[l - 1].2;
                delta = (0..w[0].len())
                    .map(|j| {
                        let back: f64 = (0..w.len()).map(|i| w[i][j] * delta[i]).sum();
                        back * act_grad(below, zs[l - 1][j], inputs[l][j])
                    })
                    .collect();
            }
        }
    }
    for (l, (w, b, _)) in layers.iter_mut().enumerate() {
        for (i, row) in w.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v -= lr * (dw[l][i][j] + lambda / m * *v);
            }
            b[i] -= lr * db[l][i];
        }
    }
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// With no boosted layers and plain SGD the trainer is ordinary mini-batch
/// gradient descent; compare it with the reference above from the same
/// starting weights and batch order.
pub fn plain_descent_check(epochs: usize, tol: f64) -> Check {
    let mut rng = Rng::new(11);
    let n = 50;
    let mut worst: f64 = 0.0;
    for (n_classes, hidden) in [(2usize, vec![6usize]), (3, vec![5, 4])] {
        let x = rand_matrix(&mut rng, 4, n, 1.0);
        let y: Vec<usize> = (0..n).map(|s| (s * 7 + 3) % n_classes).collect();
        let samples = Samples::new(x.clone(), y.clone(), n_classes).unwrap();
        let cfg = TrainConfig {
            epochs,
            batch_size: 16,
            learning_rate: 0.05,
            l2_lambda: 0.01,
            boosted_layers: 0,
            base_optimizer: BaseOptimizer::Sgd,
            seed: 5,
            ..TrainConfig::default()
        };
        let acts = vec![Activation::Sigmoid; hidden.len()];
        let mut model =
            XbnetModel::classifier_with(4, &hidden, &acts, n_classes, 0, &mut rng).unwrap();
        let mut trainer = Trainer::new(cfg.clone());
        trainer
            .init_first_layer(&mut model, &samples)
            .map_err(|e| e.to_string())?;
        let mut reference: Vec<Layer> = model
            .layers()
            .iter()
            .map(|l| (to_rows(l.weights()), l.bias().column(0), l.activation()))
            .collect();
        trainer
            .fit(&mut model, &samples, &samples, None)
            .map_err(|e| e.to_string())?;

        let one_hot = |c: usize| -> Vec<f64> {
            if n_classes == 2 {
                vec![c as f64]
            } else {
                (0..n_classes)
                    .map(|k| f64::from(u8::from(k == c)))
                    .collect()
            }
        };
        for epoch in 0..epochs {
            for batch in batch_indices(n, cfg.batch_size, cfg.seed, epoch).unwrap() {
                let xs: Vec<Vec<f64>> = batch.iter().map(|&s| x.column(s)).collect();
                let ys: Vec<Vec<f64>> = batch.iter().map(|&s| one_hot(y[s])).collect();
                reference_step(&mut reference, &xs, &ys, cfg.learning_rate, cfg.l2_lambda);
            }
        }
        for (l, (w, b, _)) in reference.iter().enumerate() {
            let layer = &model.layers()[l];
            for (i, row) in w.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    worst = worst.max((layer.weights().get(i, j) - v).abs());
                }
                worst = worst.max((layer.bias().get(i, 0) - b[i]).abs());
            }
        }
    }
    if worst <= tol {
        Ok(format!(
            "{epochs} epochs, max parameter difference {worst:.2e}"
        ))
    } else {
        Err(format!(
            "max parameter difference {worst:e} exceeds {tol:e}"
        ))
    }
}
