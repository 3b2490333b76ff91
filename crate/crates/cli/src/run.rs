//! Run specification loaded from TOML.
//!
//! ```toml
//! dataset = "../data/breast_cancer.csv"
//! layers = [16, 1]            # hidden widths then the output width
//! activations = ["relu"]      # one per hidden layer, default relu
//!
//! [train]
//! epochs = 100
//! boosted_layers = 1
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xbnet::data::Schema;
use xbnet::network::Activation;
use xbnet::optimizer::TrainConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Xbnet,
    Gbt,
}

fn default_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub dataset: PathBuf,
    /// Schema file; defaults to `<dataset stem>.schema.toml` beside the data.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    /// Label column, used when no schema file is given or found.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub layers: Vec<usize>,
    #[serde(default)]
    pub activations: Vec<Activation>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
}

pub(crate) fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub(crate) fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Schema for `dataset`: an explicit file, a label name, or the
/// `<stem>.schema.toml` file next to the data.
pub fn schema_for(dataset: &Path, schema: Option<&Path>, label: Option<&str>) -> Result<Schema> {
    if let Some(path) = schema {
        return Ok(Schema::load(path)?);
    }
    if let Some(label) = label {
        return Ok(Schema::new(label));
    }
    let sibling = dataset.with_extension("schema.toml");
    if sibling.exists() {
        return Ok(Schema::load(&sibling)?);
    }
    Err(CliError::Invalid(format!(
        "no schema or label given for {} and {} does not exist",
        dataset.display(),
        sibling.display()
    )))
}

impl RunSpec {
    pub fn new(dataset: impl Into<PathBuf>, layers: Vec<usize>) -> Self {
        RunSpec {
            dataset: dataset.into(),
            schema: None,
            label: None,
            train_fraction: default_fraction(),
            model: ModelKind::Xbnet,
            layers,
            activations: Vec::new(),
            out_dir: None,
            train: TrainConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut spec: RunSpec = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.dataset = resolve(base, &spec.dataset);
        spec.schema = spec.schema.map(|s| resolve(base, &s));
        spec.out_dir = spec.out_dir.map(|o| resolve(base, &o));
        Ok(spec)
    }

    pub fn schema(&self) -> Result<Schema> {
        schema_for(&self.dataset, self.schema.as_deref(), self.label.as_deref())
    }

    /// Hidden widths and activations after checking that the layer list
    /// ends in the right head for `n_classes`.
    pub fn hidden_layers(&self, n_classes: usize) -> Result<(Vec<usize>, Vec<Activation>)> {
        let Some((&out, hidden)) = self.layers.split_last() else {
            return Err(CliError::Invalid(
                "`layers` must list at least the output layer".into(),
            ));
        };
        let expected = if n_classes == 2 { 1 } else { n_classes };
        if out != expected {
            return Err(CliError::Invalid(format!(
                "output layer has {out} units but {n_classes} classes need {expected}"
            )));
        }
        if hidden.contains(&0) {
            return Err(CliError::Invalid("layer widths must be positive".into()));
        }
        let activations = if self.activations.is_empty() {
            vec![Activation::Relu; hidden.len()]
        } else if self.activations.len() == hidden.len() {
            self.activations.clone()
        } else {
            return Err(CliError::Invalid(format!(
                "{} activations given for {} hidden layers",
                self.activations.len(),
                hidden.len()
            )));
        };
        Ok((hidden.to_vec(), activations))
    }
}
