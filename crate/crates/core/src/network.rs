//! Dense feed-forward classifier with hand-derived backpropagation.
//!
//! Layer `l` computes `z = W·A_prev + b` and `A = g(z)`, where every matrix
//! carries one sample per column. The cost is the mean cross-entropy over
//! the batch plus `λ/(2m)·Σ‖W‖²_F`.
//!
//! Inference touches only weights, biases and activations. Tree state and
//! stored importances are never read on that path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbdt::ImportanceVector;
use crate::numeric::{sigmoid, softmax_in_place, ElementwiseOp, Matrix, NumericError, Rng};
use crate::optimizer::TrainConfig;

/// Probabilities fed to the log are clamped to `[EPS, 1 - EPS]`.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("layer {layer} expects {expected} inputs but receives {found}")]
    Chain {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("model expects {expected} features, got {found}")]
    FeatureCount { expected: usize, found: usize },
    #[error("layer {0} has no cached activations; run a training forward pass first")]
    MissingCache(usize),
    #[error("output activation {0:?} has no matching classification loss")]
    UnsupportedHead(Activation),
    #[error("prediction shape {pred:?} does not match target shape {target:?}")]
    TargetShape {
        pred: (usize, usize),
        target: (usize, usize),
    },
    #[error("label {label} outside [0, {n_classes})")]
    Label { label: usize, n_classes: usize },
    #[error("invalid architecture: {0}")]
    Architecture(String),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
    Identity,
}

impl Activation {
    pub fn apply(self, z: &Matrix) -> Result<Matrix> {
        Ok(match self {
            Activation::Relu => z.map("relu", |v| v.max(0.0))?,
            Activation::Sigmoid => z.map("sigmoid", sigmoid)?,
            Activation::Identity => z.clone(),
            Activation::Softmax => {
                // Columns are samples.
                let t = z.transpose();
                let mut data = t.into_vec();
                for row in data.chunks_mut(z.rows().max(1)) {
                    softmax_in_place(row);
                }
                Matrix::from_vec(z.cols(), z.rows(), data)?.transpose()
            }
        })
    }

    /// Chain rule through the activation: `dL/dz` from `dL/dA`.
    fn backprop(self, z: &Matrix, a: &Matrix, da: &Matrix) -> Result<Matrix> {
        Ok(match self {
            Activation::Identity => da.clone(),
            Activation::Relu => {
                let mask = z.map("relu'", |v| if v > 0.0 { 1.0 } else { 0.0 })?;
                da.elementwise(&mask, ElementwiseOp::Mul)?
            }
            Activation::Sigmoid => {
                let d = a.map("sigmoid'", |s| s * (1.0 - s))?;
                da.elementwise(&d, ElementwiseOp::Mul)?
            }
            Activation::Softmax => {
                let (rows, cols) = a.shape();
                let mut out = vec![0.0; rows * cols];
                for c in 0..cols {
                    let dot: f64 = (0..rows).map(|r| a.get(r, c) * da.get(r, c)).sum();
                    for r in 0..rows {
                        out[r * cols + c] = a.get(r, c) * (da.get(r, c) - dot);
                    }
                }
                Matrix::from_vec(rows, cols, out)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerCache {
    input: Matrix,
    z: Matrix,
    output: Matrix,
}

/// One dense layer: `weights` is `n_out x n_in`, `bias` is `n_out x 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Matrix,
    activation: Activation,
    boosted: bool,
    /// Smoothed importance of this layer's output neurons from the most
    /// recent tree refit. Training-time data only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    importance: Option<ImportanceVector>,
    #[serde(skip)]
    cache: Option<LayerCache>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Matrix, activation: Activation) -> Result<Self> {
        if bias.shape() != (weights.rows(), 1) {
            return Err(NetworkError::Architecture(format!(
                "bias shape {:?} does not fit weights {:?}",
                bias.shape(),
                weights.shape()
            )));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
            boosted: false,
            importance: None,
            cache: None,
        })
    }

    /// Weights drawn uniformly from `±sqrt(1/n_in)`, zero bias.
    pub fn fan_in_uniform(
        n_in: usize,
        n_out: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let bound = (1.0 / n_in as f64).sqrt();
        let weights = rng.uniform_matrix(-bound, bound, n_out, n_in)?;
        DenseLayer::new(weights, Matrix::zeros(n_out, 1), activation)
    }

    pub fn n_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn n_out(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &Matrix {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn is_boosted(&self) -> bool {
        self.boosted
    }

    pub fn importance(&self) -> Option<&ImportanceVector> {
        self.importance.as_ref()
    }

    pub fn set_boosted(&mut self, boosted: bool) {
        self.boosted = boosted;
    }

    pub fn set_importance(&mut self, importance: Option<ImportanceVector>) -> Result<()> {
        if let Some(v) = &importance {
            if v.len() != self.n_out() {
                return Err(NetworkError::Architecture(format!(
                    "importance of length {} for a layer with {} outputs",
                    v.len(),
                    self.n_out()
                )));
            }
        }
        self.importance = importance;
        Ok(())
    }

    /// Replaces the weights, keeping the shape.
    pub fn set_weights(&mut self, weights: Matrix) -> Result<()> {
        if weights.shape() != self.weights.shape() {
            return Err(NetworkError::Architecture(format!(
                "weights {:?} cannot replace {:?}",
                weights.shape(),
                self.weights.shape()
            )));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn set_bias(&mut self, bias: Matrix) -> Result<()> {
        if bias.shape() != self.bias.shape() {
            return Err(NetworkError::Architecture(format!(
                "bias {:?} cannot replace {:?}",
                bias.shape(),
                self.bias.shape()
            )));
        }
        self.bias = bias;
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Matrix, &mut Matrix) {
        (&mut self.weights, &mut self.bias)
    }

    /// Post-activation output cached by the last training forward pass.
    pub fn cached_output(&self) -> Option<&Matrix> {
        self.cache.as_ref().map(|c| &c.output)
    }

    fn pre_activation(&self, input: &Matrix) -> Result<Matrix> {
        Ok(self.weights.matmul(input)?.add_bias_rows(&self.bias)?)
    }
}

/// Per-layer gradients of the cost.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub bias: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub data_loss: f64,
    pub reg_loss: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// One row per sample, one column per class.
    pub probabilities: Matrix,
}

/// Builds the target matrix for a batch: a `1 x m` row of 0/1 for binary
/// problems, a `k x m` one-hot block otherwise.
pub fn encode_targets(labels: &[usize], n_classes: usize) -> Result<Matrix> {
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(NetworkError::Label { label, n_classes });
    }
    let m = labels.len();
    if n_classes == 2 {
        let row = labels.iter().map(|&l| l as f64).collect();
        return Ok(Matrix::from_vec(1, m, row)?);
    }
    let mut data = vec![0.0; n_classes * m];
    for (i, &l) in labels.iter().enumerate() {
        data[l * m + i] = 1.0;
    }
    Ok(Matrix::from_vec(n_classes, m, data)?)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XbnetModel {
    layers: Vec<DenseLayer>,
    n_classes: usize,
    feature_names: Vec<String>,
    /// Input-feature importance used to initialize the first layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_importance: Option<ImportanceVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<TrainConfig>,
}

impl XbnetModel {
    /// Wraps layers whose dimensions chain. The output head is checked
    /// lazily by the loss, gradient and prediction paths.
    pub fn new(
        layers: Vec<DenseLayer>,
        n_classes: usize,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(NetworkError::Architecture("no layers".into()));
        }
        for l in 1..layers.len() {
            if layers[l].n_in() != layers[l - 1].n_out() {
                return Err(NetworkError::Chain {
                    layer: l,
                    expected: layers[l].n_in(),
                    found: layers[l - 1].n_out(),
                });
            }
        }
        if !feature_names.is_empty() && feature_names.len() != layers[0].n_in() {
            return Err(NetworkError::Architecture(format!(
                "{} feature names for {} inputs",
                feature_names.len(),
                layers[0].n_in()
            )));
        }
        Ok(XbnetModel {
            layers,
            n_classes,
            feature_names,
            input_importance: None,
            config: None,
        })
    }

    /// Classifier with `hidden` ReLU layers and a sigmoid (binary) or
    /// softmax head. The first `boosted_layers` layers are flagged boosted.
    /// Weights start uniform in `±sqrt(1/n_in)`, biases at zero.
    pub fn classifier(
        n_features: usize,
        hidden: &[usize],
        n_classes: usize,
        boosted_layers: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let activations = vec![Activation::Relu; hidden.len()];
        Self::classifier_with(
            n_features,
            hidden,
            &activations,
            n_classes,
            boosted_layers,
            rng,
        )
    }

    pub fn classifier_with(
        n_features: usize,
        hidden: &[usize],
        activations: &[Activation],
        n_classes: usize,
        boosted_layers: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(NetworkError::Architecture(format!("{n_classes} classes")));
        }
        if activations.len() != hidden.len() {
            return Err(NetworkError::Architecture(format!(
                "{} activations for {} hidden layers",
                activations.len(),
                hidden.len()
            )));
        }
        if n_features == 0 || hidden.contains(&0) {
            return Err(NetworkError::Architecture("zero-width layer".into()));
        }
        let (head_width, head) = if n_classes == 2 {
            (1, Activation::Sigmoid)
        } else {
            (n_classes, Activation::Softmax)
        };
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut n_in = n_features;
        for (&width, &activation) in hidden.iter().zip(activations) {
            layers.push(DenseLayer::fan_in_uniform(n_in, width, activation, rng)?);
            n_in = width;
        }
        layers.push(DenseLayer::fan_in_uniform(n_in, head_width, head, rng)?);
        if boosted_layers > layers.len() {
            return Err(NetworkError::Architecture(format!(
                "{boosted_layers} boosted layers requested for {} layers",
                layers.len()
            )));
        }
        for layer in layers.iter_mut().take(boosted_layers) {
            layer.boosted = true;
        }
        XbnetModel::new(layers, n_classes, Vec::new())
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut DenseLayer {
        &mut self.layers[l]
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn set_feature_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.n_features() {
            return Err(NetworkError::Architecture(format!(
                "{} feature names for {} inputs",
                names.len(),
                self.n_features()
            )));
        }
        self.feature_names = names;
        Ok(())
    }

    pub fn input_importance(&self) -> Option<&ImportanceVector> {
        self.input_importance.as_ref()
    }

    pub(crate) fn set_input_importance(&mut self, v: ImportanceVector) {
        self.input_importance = Some(v);
    }

    pub fn config(&self) -> Option<&TrainConfig> {
        self.config.as_ref()
    }

    pub fn set_config(&mut self, config: TrainConfig) {
        self.config = Some(config);
    }

    /// Number of layers flagged as boosted.
    pub fn boosted_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.boosted).count()
    }

    /// Drops every piece of training-time state: stored importances and
    /// cached activations. Predictions are unaffected.
    pub fn strip_training_state(&mut self) {
        self.input_importance = None;
        for layer in &mut self.layers {
            layer.importance = None;
            layer.cache = None;
        }
    }

    pub fn clear_cache(&mut self) {
        for layer in &mut self.layers {
            layer.cache = None;
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.rows() != self.n_features() {
            return Err(NetworkError::FeatureCount {
                expected: self.n_features(),
                found: x.rows(),
            });
        }
        Ok(())
    }

    /// Inference forward pass; never mutates the model.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut a = x.clone();
        for layer in &self.layers {
            a = layer.activation.apply(&layer.pre_activation(&a)?)?;
        }
        Ok(a)
    }

    /// Training forward pass: caches each layer's input, `z` and output.
    pub fn forward_train(&mut self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut a = x.clone();
        for layer in &mut self.layers {
            let z = layer.pre_activation(&a)?;
            let out = layer.activation.apply(&z)?;
            layer.cache = Some(LayerCache {
                input: a,
                z,
                output: out.clone(),
            });
            a = out;
        }
        Ok(a)
    }

    fn check_head(&self) -> Result<Activation> {
        let head = self.layers.last().expect("non-empty").activation;
        match head {
            Activation::Sigmoid | Activation::Softmax => Ok(head),
            other => Err(NetworkError::UnsupportedHead(other)),
        }
    }

    /// `J = (1/m)·Σ loss + λ/(2m)·Σ_l ‖W_l‖²_F`.
    pub fn compute_cost(
        &self,
        predicted: &Matrix,
        target: &Matrix,
        lambda: f64,
        m: f64,
    ) -> Result<LossValue> {
        if predicted.shape() != target.shape() {
            return Err(NetworkError::TargetShape {
                pred: predicted.shape(),
                target: target.shape(),
            });
        }
        let head = self.check_head()?;
        let mut total = 0.0;
        for (&p, &y) in predicted.as_slice().iter().zip(target.as_slice()) {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            total -= match head {
                Activation::Sigmoid => y * p.ln() + (1.0 - y) * (1.0 - p).ln(),
                _ => y * p.ln(),
            };
        }
        let data_loss = total / m;
        let reg_loss = lambda / (2.0 * m)
            * self
                .layers
                .iter()
                .map(|l| l.weights.frobenius_sq())
                .sum::<f64>();
        Ok(LossValue {
            data_loss,
            reg_loss,
            total: data_loss + reg_loss,
        })
    }

    /// Exact gradients of [`compute_cost`](Self::compute_cost) with respect to
    /// every weight and bias, using the activations cached by the last
    /// [`forward_train`](Self::forward_train).
    pub fn backward(&self, target: &Matrix, lambda: f64, m: f64) -> Result<Vec<LayerGradient>> {
        self.check_head()?;
        let n_layers = self.layers.len();
        let caches: Vec<&LayerCache> = self
            .layers
            .iter()
            .enumerate()
            .map(|(l, layer)| layer.cache.as_ref().ok_or(NetworkError::MissingCache(l)))
            .collect::<Result<_>>()?;
        let out = &caches[n_layers - 1].output;
        if out.shape() != target.shape() {
            return Err(NetworkError::TargetShape {
                pred: out.shape(),
                target: target.shape(),
            });
        }

        // Sigmoid + BCE and softmax + CE both reduce to (A - Y) / m.
        let mut delta = out
            .elementwise(target, ElementwiseOp::Sub)?
            .scale(1.0 / m)?;
        let mut grads = Vec::with_capacity(n_layers);
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let cache = caches[l];
            let mut dw = delta.matmul(&cache.input.transpose())?;
            dw.add_scaled(&layer.weights, lambda / m)?;
            let db = delta.sum_columns();
            if l > 0 {
                let da = layer.weights.transpose().matmul(&delta)?;
                let below = caches[l - 1];
                delta = self.layers[l - 1]
                    .activation
                    .backprop(&below.z, &below.output, &da)?;
            }
            grads.push(LayerGradient {
                weights: dw,
                bias: db,
            });
        }
        grads.reverse();
        Ok(grads)
    }

    /// Class labels and per-class probabilities. Binary heads emit
    /// `[1 - p, p]`; ties resolve to the lowest class index.
    pub fn predict(&self, x: &Matrix) -> Result<Prediction> {
        self.check_head()?;
        let out = self.forward(x)?;
        let n = out.cols();
        let k = self.n_classes;
        let mut probs = Vec::with_capacity(n * k);
        if out.rows() == 1 {
            for &p in out.row(0) {
                probs.push(1.0 - p);
                probs.push(p);
            }
        } else {
            probs = out.transpose().into_vec();
        }
        let probabilities = Matrix::from_vec(n, k, probs)?;
        let labels = (0..n).map(|i| argmax(probabilities.row(i))).collect();
        Ok(Prediction {
            labels,
            probabilities,
        })
    }
}
