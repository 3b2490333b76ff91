//! Versioned JSON model artifact.
//!
//! An XBNet artifact stores only layer weights, biases and activations
//! (plus optional training-time importances); it never carries trees.

use std::path::Path;

use serde::{Deserialize, Serialize};
use xbnet::data::{Dataset, Preprocessor, Schema};
use xbnet::gbdt::GbtModel;
use xbnet::network::{argmax, Prediction, XbnetModel};

use crate::error::{CliError, Result};
use crate::run::ModelKind;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSummary {
    pub trained: bool,
    pub epochs: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub test_log_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub kind: ModelKind,
    pub schema: Schema,
    pub preprocessing: Preprocessor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<XbnetModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trees: Option<GbtModel>,
    pub metrics: MetricsSummary,
}

impl ModelArtifact {
    fn check(&self) -> Result<()> {
        match (self.kind, &self.network, &self.trees) {
            (ModelKind::Xbnet, Some(_), None) | (ModelKind::Gbt, None, Some(_)) => Ok(()),
            (ModelKind::Xbnet, _, Some(_)) => Err(CliError::Artifact(
                "xbnet artifact carries a tree payload".into(),
            )),
            (kind, _, _) => Err(CliError::Artifact(format!(
                "{kind:?} artifact is missing its model payload"
            ))),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        self.check()?;
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Artifact(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Artifact(e.to_string()))?;
        let version = value.get("format_version");
        if version.and_then(serde_json::Value::as_u64) != Some(u64::from(FORMAT_VERSION)) {
            return Err(CliError::Version {
                found: version.map_or_else(|| "none".to_string(), ToString::to_string),
                expected: FORMAT_VERSION,
            });
        }
        let artifact: ModelArtifact =
            serde_json::from_str(text).map_err(|e| CliError::Artifact(e.to_string()))?;
        artifact.check()?;
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Copy without any training-time importance data.
    pub fn inference_only(&self) -> Self {
        let mut out = self.clone();
        if let Some(net) = out.network.as_mut() {
            net.strip_training_state();
        }
        out
    }

    pub fn class_names(&self) -> &[String] {
        &self.preprocessing.class_names
    }

    /// Applies the stored preprocessing to raw rows and predicts.
    pub fn predict(&self, raw: &Dataset) -> Result<(Vec<usize>, Prediction)> {
        let samples = self.preprocessing.transform(raw)?;
        let prediction = match (&self.network, &self.trees) {
            (Some(net), _) => net.predict(&samples.x)?,
            (None, Some(trees)) => {
                let probabilities = trees.predict_proba(&samples.x)?;
                let labels = (0..probabilities.rows())
                    .map(|i| argmax(probabilities.row(i)))
                    .collect();
                Prediction {
                    labels,
                    probabilities,
                }
            }
            (None, None) => return Err(CliError::Artifact("no model payload".into())),
        };
        Ok((samples.y, prediction))
    }
}
