//! Boosted gradient descent.
//!
//! Each mini-batch runs a forward pass, refits one shared gradient-boosted
//! tree on the activations of every boosted layer (with the raw batch
//! labels as targets), takes a gradient step, then nudges each boosted
//! layer's weights by the smoothed importance of its output neurons scaled
//! to the magnitude of its smallest weight.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{batch_indices, DataError, Samples};
use crate::gbdt::{GbtConfig, GbtError, ImportanceModel, ImportanceVector};
use crate::network::{encode_targets, LayerGradient, NetworkError, XbnetModel};
use crate::numeric::{Matrix, NumericError, Rng};

const INIT_STREAM: u64 = u64::MAX - 1;
const INIT_NOISE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged in epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("importance of length {found} for layer {layer} with {expected} outputs")]
    ImportanceLength {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("layer {0} is boosted but has no importance vector")]
    MissingImportance(usize),
    #[error("cannot scale importance: layer {0} has only zero weights")]
    ZeroWeights(usize),
    #[error("dataset has {found} features, model expects {expected}")]
    FeatureCount { expected: usize, found: usize },
    #[error("dataset has {found} classes, model expects {expected}")]
    ClassCount { expected: usize, found: usize },
    #[error("empty {0} set")]
    Empty(&'static str),
    #[error(transparent)]
    Tree(#[from] GbtError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaseOptimizer {
    Sgd,
    #[default]
    Adam,
}

/// How the importance correction is scaled to the layer's weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// `10^log10(m)`, i.e. the smallest non-zero `|w|` itself.
    #[default]
    Literal,
    /// `10^floor(log10(m))`: only the order of magnitude of `m`.
    FloorExponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_lambda: f64,
    /// Laplacian smoothing added to every importance entry.
    pub epsilon: f64,
    pub boosted_layers: usize,
    pub base_optimizer: BaseOptimizer,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub tree: GbtConfig,
    /// Batches between tree refits; stored importances are reused between.
    pub tree_refit_interval: usize,
    pub phi_mode: PhiMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 32,
            l2_lambda: 0.0,
            epsilon: 0.001,
            boosted_layers: 1,
            base_optimizer: BaseOptimizer::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            tree: GbtConfig::default(),
            tree_refit_interval: 1,
            phi_mode: PhiMode::Literal,
            seed: 42,
        }
    }
}

impl TrainConfig {
    /// Checks ranges; `n_layers` bounds `boosted_layers`.
    pub fn validate(&self, n_layers: usize) -> Result<()> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            ));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad(format!(
                "l2_lambda must be non-negative, got {}",
                self.l2_lambda
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.tree_refit_interval == 0 {
            return bad("tree_refit_interval must be at least 1".into());
        }
        if self.boosted_layers > n_layers {
            return bad(format!(
                "boosted_layers is {} but the network has {n_layers} layers",
                self.boosted_layers
            ));
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        Ok(())
    }
}

/// `f'_k = (f_k + ε) / (Σ f + K·ε)`.
pub fn smooth_importance(f: &ImportanceVector, epsilon: f64) -> ImportanceVector {
    if epsilon == 0.0 {
        return f.clone();
    }
    let k = f.len() as f64;
    let total: f64 = f.values().iter().sum::<f64>() + k * epsilon;
    let values = f.values().iter().map(|v| (v + epsilon) / total).collect();
    ImportanceVector::new(values).expect("smoothing preserves a valid distribution")
}

/// Magnitude of the smallest non-zero weight, or its power of ten under
/// [`PhiMode::FloorExponent`]. `None` when every weight is zero.
pub fn phi_scale(w: &Matrix, mode: PhiMode) -> Option<f64> {
    let m = w.min_abs_nonzero()?;
    Some(match mode {
        PhiMode::Literal => m,
        PhiMode::FloorExponent => 10f64.powf(m.log10().floor()),
    })
}

/// Bias-corrected Adam moments for a list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    t: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments mirroring the given parameter shapes.
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        let zeros: Vec<Matrix> = shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        AdamState {
            t: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Moments for every weight and bias of `model`, in order `W0, b0, W1, ...`.
    pub fn for_model(model: &XbnetModel) -> Self {
        let shapes: Vec<(usize, usize)> = model
            .layers()
            .iter()
            .flat_map(|l| [l.weights().shape(), l.bias().shape()])
            .collect();
        AdamState::new(&shapes)
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }

    /// Advances the timestep; call once per optimizer step, before updates.
    pub fn tick(&mut self) {
        self.t += 1;
    }

    pub fn first_moment(&self, param: usize) -> &Matrix {
        &self.first[param]
    }

    pub fn second_moment(&self, param: usize) -> &Matrix {
        &self.second[param]
    }

    /// Applies one Adam update to parameter number `param`.
    pub fn update(
        &mut self,
        param: usize,
        value: &mut Matrix,
        grad: &Matrix,
        hp: AdamParams,
    ) -> Result<()> {
        let shape = value.shape();
        if grad.shape() != shape || self.first[param].shape() != shape {
            return Err(NumericError::Shape {
                op: "adam",
                left_rows: shape.0,
                left_cols: shape.1,
                right_rows: grad.rows(),
                right_cols: grad.cols(),
            }
            .into());
        }
        let t = self.t.max(1) as i32;
        let c1 = 1.0 - hp.beta1.powi(t);
        let c2 = 1.0 - hp.beta2.powi(t);
        let m = self.first[param].data_mut();
        let v = self.second[param].data_mut();
        let p = value.data_mut();
        for (i, &g) in grad.as_slice().iter().enumerate() {
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.eps);
        }
        value.ensure_finite("adam")?;
        Ok(())
    }
}

/// Optimizer state carried across batches.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd,
    Adam(AdamState),
}

impl OptimizerState {
    pub fn new(config: &TrainConfig, model: &XbnetModel) -> Self {
        match config.base_optimizer {
            BaseOptimizer::Sgd => OptimizerState::Sgd,
            BaseOptimizer::Adam => OptimizerState::Adam(AdamState::for_model(model)),
        }
    }

    /// Marks the start of a new optimizer step.
    pub fn tick(&mut self) {
        if let OptimizerState::Adam(a) = self {
            a.tick();
        }
    }
}

/// Gradient update of layer `l` followed, when the layer is boosted, by
/// `w[j, k] += f[j] · φ(w)` with `φ` taken from the updated weights.
pub fn boosted_step(
    model: &mut XbnetModel,
    l: usize,
    grad: &LayerGradient,
    importance: Option<&ImportanceVector>,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    let layer = model.layer_mut(l);
    let n_out = layer.n_out();
    let boosted = layer.is_boosted();
    if boosted {
        match importance {
            None => return Err(TrainError::MissingImportance(l)),
            Some(f) if f.len() != n_out => {
                return Err(TrainError::ImportanceLength {
                    layer: l,
                    expected: n_out,
                    found: f.len(),
                })
            }
            Some(_) => {}
        }
    }
    let (w, b) = layer.params_mut();
    match state {
        OptimizerState::Sgd => {
            w.add_scaled(&grad.weights, -config.learning_rate)?;
            b.add_scaled(&grad.bias, -config.learning_rate)?;
        }
        OptimizerState::Adam(adam) => {
            let hp = AdamParams {
                learning_rate: config.learning_rate,
                beta1: config.adam_beta1,
                beta2: config.adam_beta2,
                eps: config.adam_eps,
            };
            adam.update(2 * l, w, &grad.weights, hp)?;
            adam.update(2 * l + 1, b, &grad.bias, hp)?;
        }
    }
    if let (true, Some(f)) = (boosted, importance) {
        let phi = phi_scale(w, config.phi_mode).ok_or(TrainError::ZeroWeights(l))?;
        let cols = w.cols();
        let data = w.data_mut();
        for (j, fj) in f.values().iter().enumerate() {
            for v in &mut data[j * cols..(j + 1) * cols] {
                *v += fj * phi;
            }
        }
        w.ensure_finite("importance boost")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

/// Running check of every importance vector the trainer produced.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImportanceAudit {
    pub vectors: u64,
    pub max_sum_error: f64,
    pub min_entry: Option<f64>,
}

impl ImportanceAudit {
    pub fn record(&mut self, v: &ImportanceVector) {
        self.vectors += 1;
        let sum: f64 = v.values().iter().sum();
        self.max_sum_error = self.max_sum_error.max((sum - 1.0).abs());
        let lo = v.values().iter().copied().fold(f64::INFINITY, f64::min);
        self.min_entry = Some(self.min_entry.map_or(lo, |m| m.min(lo)));
    }

    /// Every recorded vector summed to one within `tol` with no negative entry.
    pub fn holds(&self, tol: f64) -> bool {
        self.max_sum_error <= tol && self.min_entry.is_none_or(|m| m >= 0.0)
    }
}

/// Per-epoch losses (mean cross-entropy without the L2 term) and accuracies
/// on the full training and validation sets.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    pub importance_audit: ImportanceAudit,
    /// Number of tree fits performed during training.
    pub tree_fits: u64,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.train_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_loss.is_empty()
    }

    fn push(&mut self, r: &EpochRecord) {
        self.train_loss.push(r.train_loss);
        self.val_loss.push(r.val_loss);
        self.train_accuracy.push(r.train_accuracy);
        self.val_accuracy.push(r.val_accuracy);
    }

    pub fn records(&self) -> Vec<EpochRecord> {
        (0..self.len())
            .map(|i| EpochRecord {
                epoch: i + 1,
                train_loss: self.train_loss[i],
                val_loss: self.val_loss[i],
                train_accuracy: self.train_accuracy[i],
                val_accuracy: self.val_accuracy[i],
            })
            .collect()
    }

    /// `epoch,train_loss,val_loss,train_acc,val_acc` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,train_acc,val_acc\n");
        for r in self.records() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.val_loss, r.train_accuracy, r.val_accuracy
            ));
        }
        out
    }
}

/// Mean data loss and accuracy of `model` on `samples`.
pub fn evaluate(model: &XbnetModel, samples: &Samples) -> Result<(f64, f64)> {
    let out = model.forward(&samples.x)?;
    let target = encode_targets(&samples.y, model.n_classes())?;
    let m = samples.len() as f64;
    let loss = model.compute_cost(&out, &target, 0.0, m)?.data_loss;
    let predicted = model.predict(&samples.x)?.labels;
    let correct = predicted
        .iter()
        .zip(&samples.y)
        .filter(|(p, y)| p == y)
        .count();
    Ok((loss, correct as f64 / m))
}

/// Owns everything that lives only during training: the single tree slot,
/// optimizer state and the importance audit.
#[derive(Debug)]
pub struct Trainer {
    config: TrainConfig,
    tree: Option<ImportanceModel>,
    state: Option<OptimizerState>,
    batches_seen: u64,
    audit: ImportanceAudit,
    tree_fits: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Self {
        Trainer {
            config,
            tree: None,
            state: None,
            batches_seen: 0,
            audit: ImportanceAudit::default(),
            tree_fits: 0,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// The one tree kept by the trainer, refit in place for every layer.
    pub fn tree_slot(&self) -> Option<&ImportanceModel> {
        self.tree.as_ref()
    }

    pub fn audit(&self) -> &ImportanceAudit {
        &self.audit
    }

    fn check_samples(&self, model: &XbnetModel, s: &Samples, what: &'static str) -> Result<()> {
        if s.is_empty() {
            return Err(TrainError::Empty(what));
        }
        if s.n_features() != model.n_features() {
            return Err(TrainError::FeatureCount {
                expected: model.n_features(),
                found: s.n_features(),
            });
        }
        if s.n_classes != model.n_classes() {
            return Err(TrainError::ClassCount {
                expected: model.n_classes(),
                found: s.n_classes,
            });
        }
        Ok(())
    }

    /// Fits the tree on `(x, y)` into the shared slot and returns its raw
    /// importance. Batches too small to fit fall back to uniform importance.
    fn fit_tree(&mut self, x: &Matrix, y: &[usize], n_classes: usize) -> Result<ImportanceVector> {
        self.tree_fits += 1;
        match ImportanceModel::fit(x, y, n_classes, &self.config.tree) {
            Ok(tree) => {
                let f = tree.feature_importance();
                self.tree = Some(tree);
                Ok(f)
            }
            Err(GbtError::TooFewSamples(_)) => {
                self.tree = None;
                Ok(ImportanceVector::uniform(x.rows()))
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Sets every row of the first weight matrix to the tree importance of
    /// the input features plus `uniform(-0.01, 0.01)` noise; zeroes the bias.
    pub fn init_first_layer(&mut self, model: &mut XbnetModel, train: &Samples) -> Result<()> {
        self.check_samples(model, train, "training")?;
        let f = self.fit_tree(&train.x, &train.y, model.n_classes())?;
        self.audit.record(&f);
        let (n_out, n_in) = model.layers()[0].weights().shape();
        let mut rng = Rng::derive(self.config.seed, INIT_STREAM);
        let noise = rng.uniform_matrix(-INIT_NOISE, INIT_NOISE, n_out, n_in)?;
        let mut w = noise.into_vec();
        for row in w.chunks_mut(n_in) {
            for (v, fi) in row.iter_mut().zip(f.values()) {
                *v += fi;
            }
        }
        let layer = model.layer_mut(0);
        layer.set_weights(Matrix::from_vec(n_out, n_in, w)?)?;
        layer.set_bias(Matrix::zeros(n_out, 1))?;
        model.set_input_importance(f);
        Ok(())
    }

    /// Runs `config.epochs` epochs of boosted gradient descent.
    pub fn fit(
        &mut self,
        model: &mut XbnetModel,
        train: &Samples,
        val: &Samples,
        mut progress: Option<&mut dyn FnMut(&EpochRecord)>,
    ) -> Result<TrainTrace> {
        let cfg = self.config.clone();
        let n_layers = model.layers().len();
        cfg.validate(n_layers)?;
        self.check_samples(model, train, "training")?;
        self.check_samples(model, val, "validation")?;
        for l in 0..n_layers {
            model.layer_mut(l).set_boosted(l < cfg.boosted_layers);
        }
        let mut state = self
            .state
            .take()
            .unwrap_or_else(|| OptimizerState::new(&cfg, model));
        let mut trace = TrainTrace::default();
        let n_classes = model.n_classes();

        for epoch in 0..cfg.epochs {
            let diverged = |e: TrainError| match e {
                TrainError::Numeric(n) | TrainError::Network(NetworkError::Numeric(n)) => {
                    TrainError::Divergence {
                        epoch: epoch + 1,
                        detail: n.to_string(),
                    }
                }
                other => other,
            };
            for idx in batch_indices(train.len(), cfg.batch_size, cfg.seed, epoch)? {
                let batch = train.select(&idx);
                self.step(model, &batch, n_classes, &mut state, &cfg)
                    .map_err(diverged)?;
            }
            let (train_loss, train_accuracy) = evaluate(model, train).map_err(diverged)?;
            let (val_loss, val_accuracy) = evaluate(model, val).map_err(diverged)?;
            if !train_loss.is_finite() || !val_loss.is_finite() {
                return Err(TrainError::Divergence {
                    epoch: epoch + 1,
                    detail: "non-finite loss".into(),
                });
            }
            let record = EpochRecord {
                epoch: epoch + 1,
                train_loss,
                val_loss,
                train_accuracy,
                val_accuracy,
            };
            trace.push(&record);
            if let Some(cb) = progress.as_mut() {
                cb(&record);
            }
        }
        model.clear_cache();
        self.state = Some(state);
        trace.importance_audit = self.audit;
        trace.tree_fits = self.tree_fits;
        Ok(trace)
    }

    fn step(
        &mut self,
        model: &mut XbnetModel,
        batch: &Samples,
        n_classes: usize,
        state: &mut OptimizerState,
        cfg: &TrainConfig,
    ) -> Result<()> {
        let out = model.forward_train(&batch.x)?;
        if cfg.boosted_layers > 0
            && self
                .batches_seen
                .is_multiple_of(cfg.tree_refit_interval as u64)
        {
            for l in 0..cfg.boosted_layers {
                // Activations are copied out: the tree never sees gradients.
                let a = model.layers()[l]
                    .cached_output()
                    .expect("forward_train caches")
                    .clone();
                let f = smooth_importance(&self.fit_tree(&a, &batch.y, n_classes)?, cfg.epsilon);
                self.audit.record(&f);
                model.layer_mut(l).set_importance(Some(f))?;
            }
        }
        self.batches_seen += 1;

        let target = encode_targets(&batch.y, n_classes)?;
        let m = batch.len() as f64;
        let cost = model.compute_cost(&out, &target, cfg.l2_lambda, m)?;
        if !cost.total.is_finite() {
            return Err(NumericError::NonFinite("cost").into());
        }
        let grads = model.backward(&target, cfg.l2_lambda, m)?;
        state.tick();
        for (l, g) in grads.iter().enumerate() {
            let f = model.layers()[l].importance().cloned();
            boosted_step(model, l, g, f.as_ref(), state, cfg)?;
        }
        Ok(())
    }
}

/// First-layer initialization followed by training; stores the config in
/// the model.
pub fn train(
    model: &mut XbnetModel,
    train: &Samples,
    val: &Samples,
    config: &TrainConfig,
) -> Result<TrainTrace> {
    train_with_progress(model, train, val, config, None)
}

pub fn train_with_progress(
    model: &mut XbnetModel,
    train: &Samples,
    val: &Samples,
    config: &TrainConfig,
    progress: Option<&mut dyn FnMut(&EpochRecord)>,
) -> Result<TrainTrace> {
    config.validate(model.layers().len())?;
    let mut trainer = Trainer::new(config.clone());
    trainer.init_first_layer(model, train)?;
    let trace = trainer.fit(model, train, val, progress)?;
    model.set_config(config.clone());
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, DenseLayer};

    fn iv(v: &[f64]) -> ImportanceVector {
        ImportanceVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn smoothing_examples() {
        let s = smooth_importance(&iv(&[1.0, 0.0, 0.0]), 0.001);
        let expected = [1.001 / 1.003, 0.001 / 1.003, 0.001 / 1.003];
        for (a, b) in s.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((s.values()[0] - 0.998005).abs() < 1e-6);
        let f = iv(&[0.2, 0.3, 0.5]);
        assert_eq!(smooth_importance(&f, 0.0), f);
        let u = smooth_importance(&ImportanceVector::uniform(4), 0.01);
        assert!(u.values().iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn phi_examples() {
        let m = |rows: &[Vec<f64>]| Matrix::from_rows(rows).unwrap();
        assert_eq!(
            phi_scale(&m(&[vec![0.001, 0.5]]), PhiMode::Literal),
            Some(0.001)
        );
        assert_eq!(
            phi_scale(&m(&[vec![-0.02, 0.5]]), PhiMode::Literal),
            Some(0.02)
        );
        assert_eq!(phi_scale(&m(&[vec![0.0, 0.0]]), PhiMode::Literal), None);
        assert_eq!(
            phi_scale(&m(&[vec![-0.037, 2.0]]), PhiMode::FloorExponent),
            Some(0.01)
        );
    }

    fn layer(w: Matrix, boosted: bool) -> XbnetModel {
        let n_out = w.rows();
        let mut l = DenseLayer::new(w, Matrix::zeros(n_out, 1), Activation::Sigmoid).unwrap();
        l.set_boosted(boosted);
        XbnetModel::new(vec![l], 2, vec![]).unwrap()
    }

    fn zero_grad(w: &Matrix) -> LayerGradient {
        LayerGradient {
            weights: Matrix::zeros(w.rows(), w.cols()),
            bias: Matrix::zeros(w.rows(), 1),
        }
    }

    fn sgd(lr: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            base_optimizer: BaseOptimizer::Sgd,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn boost_with_uniform_importance() {
        let n = 3;
        let w = Matrix::filled(n, 2, 0.01).unwrap();
        let mut model = layer(w.clone(), true);
        let f = ImportanceVector::uniform(n);
        boosted_step(
            &mut model,
            0,
            &zero_grad(&w),
            Some(&f),
            &mut OptimizerState::Sgd,
            &sgd(1e-3),
        )
        .unwrap();
        for v in model.layers()[0].weights().as_slice() {
            assert!((v - (0.01 + 0.01 / n as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_importance_touches_one_row() {
        let w = Matrix::from_rows(&[vec![0.5, -0.2], vec![0.3, 0.1], vec![-0.4, 0.9]]).unwrap();
        let mut model = layer(w.clone(), true);
        let f = iv(&[0.0, 1.0, 0.0]);
        boosted_step(
            &mut model,
            0,
            &zero_grad(&w),
            Some(&f),
            &mut OptimizerState::Sgd,
            &sgd(1e-3),
        )
        .unwrap();
        let after = model.layers()[0].weights();
        assert_eq!(after.row(0), w.row(0));
        assert_eq!(after.row(2), w.row(2));
        assert_eq!(after.row(1), &[0.3 + 0.1, 0.1 + 0.1]);

        let bad = iv(&[0.5, 0.5]);
        assert!(matches!(
            boosted_step(
                &mut model,
                0,
                &zero_grad(&w),
                Some(&bad),
                &mut OptimizerState::Sgd,
                &sgd(1e-3)
            ),
            Err(TrainError::ImportanceLength {
                expected: 3,
                found: 2,
                ..
            })
        ));
    }

    #[test]
    fn unboosted_step_is_plain_sgd() {
        let w = Matrix::from_rows(&[vec![0.5, -0.2]]).unwrap();
        let mut model = layer(w.clone(), false);
        let g = LayerGradient {
            weights: Matrix::from_rows(&[vec![1.0, -2.0]]).unwrap(),
            bias: Matrix::from_rows(&[vec![0.5]]).unwrap(),
        };
        boosted_step(&mut model, 0, &g, None, &mut OptimizerState::Sgd, &sgd(0.1)).unwrap();
        assert_eq!(
            model.layers()[0].weights().as_slice(),
            &[0.5 - 0.1, -0.2 + 0.2]
        );
        assert_eq!(model.layers()[0].bias().as_slice(), &[-0.05]);
    }

    #[test]
    fn adam_first_step_and_zero_grad() {
        let hp = AdamParams {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut state = AdamState::new(&[(1, 3)]);
        let mut p = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        state.tick();
        state.update(0, &mut p, &Matrix::zeros(1, 3), hp).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 2.0, 3.0]);

        let mut state = AdamState::new(&[(1, 3)]);
        let mut p = Matrix::zeros(1, 3);
        state.tick();
        state
            .update(
                0,
                &mut p,
                &Matrix::from_rows(&[vec![0.5, -3.0, 1e-3]]).unwrap(),
                hp,
            )
            .unwrap();
        assert!((p.get(0, 0) + 0.01).abs() < 1e-9);
        assert!((p.get(0, 1) - 0.01).abs() < 1e-9);
        assert!((p.get(0, 2) + 0.01).abs() < 1e-6);
        assert_eq!(state.timestep(), 1);
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate(2).is_ok());
        assert!(TrainConfig {
            boosted_layers: 3,
            ..ok.clone()
        }
        .validate(2)
        .is_err());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..ok.clone()
        }
        .validate(2)
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..ok.clone()
        }
        .validate(2)
        .is_err());
        assert!(TrainConfig {
            tree_refit_interval: 0,
            ..ok.clone()
        }
        .validate(2)
        .is_err());
        assert!(TrainConfig {
            epsilon: -1.0,
            ..ok
        }
        .validate(2)
        .is_err());
    }
}
