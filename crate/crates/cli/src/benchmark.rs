//! Benchmark suite: XBNet and a standalone booster on every dataset row,
//! plus a set of loss configurations, checked against bounds stored in the
//! suite file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xbnet::optimizer::{ImportanceAudit, TrainConfig};

use crate::commands::{run, RunResult};
use crate::error::{CliError, Result};
use crate::report::{ensure_dir, write_file, write_json, Clock};
use crate::run::{read_toml, resolve, ModelKind, RunSpec};

fn default_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    /// CSV path; may be omitted for unsupported rows.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub layers: Vec<usize>,
    #[serde(default)]
    pub boosted_layers: Option<usize>,
    #[serde(default)]
    pub min_xbnet_test_accuracy: Option<f64>,
    #[serde(default)]
    pub min_gbt_test_accuracy: Option<f64>,
    #[serde(default)]
    pub min_test_auc: Option<f64>,
    #[serde(default)]
    pub min_weighted_f1: Option<f64>,
    /// Listed for completeness but not runnable.
    #[serde(default)]
    pub unsupported: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfigEntry {
    pub name: String,
    /// Name of a `[[dataset]]` entry supplying the data.
    pub dataset: String,
    pub layers: Vec<usize>,
    pub boosted_layers: usize,
    #[serde(default)]
    pub max_val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub dataset: Vec<DatasetEntry>,
    #[serde(default)]
    pub loss_config: Vec<LossConfigEntry>,
}

impl Suite {
    pub fn load(path: &Path) -> Result<Self> {
        let mut suite: Suite = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for d in &mut suite.dataset {
            d.path = d.path.as_ref().map(|p| resolve(base, p));
            d.schema = d.schema.as_ref().map(|p| resolve(base, p));
        }
        for c in &suite.loss_config {
            if !suite.dataset.iter().any(|d| d.name == c.dataset) {
                return Err(CliError::Config {
                    path: path.to_path_buf(),
                    message: format!(
                        "loss config `{}` names unknown dataset `{}`",
                        c.name, c.dataset
                    ),
                });
            }
        }
        Ok(suite)
    }

    fn spec(&self, d: &DatasetEntry, model: ModelKind) -> RunSpec {
        let mut train = self.train.clone();
        if let Some(b) = d.boosted_layers {
            train.boosted_layers = b;
        }
        RunSpec {
            dataset: d.path.clone().unwrap_or_default(),
            schema: d.schema.clone(),
            label: d.label.clone(),
            train_fraction: self.train_fraction,
            model,
            layers: d.layers.clone(),
            activations: Vec::new(),
            out_dir: None,
            train,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ran,
    Absent,
    Unsupported,
    Failed,
    Diverged,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ran => "ran",
            RowStatus::Absent => "absent",
            RowStatus::Unsupported => "unsupported",
            RowStatus::Failed => "failed",
            RowStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_auc: Option<f64>,
    pub test_weighted_f1: f64,
    pub test_log_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub name: String,
    pub status: RowStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xbnet: Option<ModelResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gbt: Option<ModelResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub name: String,
    pub dataset: String,
    pub layers: Vec<usize>,
    pub boosted_layers: usize,
    pub status: RowStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_val_loss: Option<f64>,
}

/// One bound comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `min` or `max`.
    pub kind: String,
    pub bound: f64,
    pub value: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub format_version: u32,
    pub generated_at: u64,
    pub seed: u64,
    pub epochs: usize,
    pub datasets: Vec<DatasetRow>,
    pub loss_configs: Vec<LossRow>,
    pub checks: Vec<Check>,
    pub importance_audit: ImportanceAudit,
    pub passed: bool,
    pub total_seconds: f64,
}

impl BenchmarkReport {
    /// Comparison table, one line per dataset row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "dataset,status,xbnet_train_acc,xbnet_test_acc,xbnet_test_auc,gbt_train_acc,gbt_test_acc,gbt_test_auc\n",
        );
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        for r in &self.datasets {
            let x = r.xbnet.as_ref();
            let g = r.gbt.as_ref();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.name,
                r.status.as_str(),
                opt(x.map(|m| m.train_accuracy)),
                opt(x.map(|m| m.test_accuracy)),
                opt(x.and_then(|m| m.test_auc)),
                opt(g.map(|m| m.train_accuracy)),
                opt(g.map(|m| m.test_accuracy)),
                opt(g.and_then(|m| m.test_auc)),
            );
        }
        out
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

enum Job<'a> {
    Model(&'a DatasetEntry, ModelKind),
    Loss(&'a LossConfigEntry, &'a DatasetEntry),
}

fn model_result(r: &RunResult) -> ModelResult {
    ModelResult {
        train_accuracy: r.report.train.accuracy,
        test_accuracy: r.report.test.accuracy,
        test_auc: r.report.test.auc,
        test_weighted_f1: r.report.test.report.weighted.f1,
        test_log_loss: r.report.test.log_loss,
        final_train_loss: r.report.final_train_loss,
        final_val_loss: r.report.final_val_loss,
        seconds: r.report.train_seconds,
    }
}

fn merge_audit(into: &mut ImportanceAudit, a: &ImportanceAudit) {
    into.vectors += a.vectors;
    into.max_sum_error = into.max_sum_error.max(a.max_sum_error);
    into.min_entry = match (into.min_entry, a.min_entry) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    };
}

fn status_of(e: &CliError) -> RowStatus {
    match e {
        CliError::Train(xbnet::optimizer::TrainError::Divergence { .. }) => RowStatus::Diverged,
        _ => RowStatus::Failed,
    }
}

fn check(
    checks: &mut Vec<Check>,
    name: String,
    kind: &str,
    bound: Option<f64>,
    value: Option<f64>,
) {
    let Some(bound) = bound else { return };
    let passed = match (kind, value) {
        ("min", Some(v)) => v >= bound,
        ("max", Some(v)) => v <= bound,
        _ => false,
    };
    checks.push(Check {
        name,
        kind: kind.to_string(),
        bound,
        value,
        passed,
    });
}

/// Runs every row of `suite`, writing `benchmark.csv`, `report.json`,
/// `loss_configs.csv` and per-dataset curves under `out_dir`.
pub fn cmd_benchmark(suite: &Suite, out_dir: &Path, clock: Clock) -> Result<BenchmarkReport> {
    let start = Instant::now();
    let runnable = |d: &DatasetEntry| !d.unsupported && d.path.as_ref().is_some_and(|p| p.exists());
    for d in &suite.dataset {
        if !d.unsupported && !runnable(d) {
            eprintln!("warning: dataset `{}` not found; marked absent", d.name);
        }
    }
    let mut jobs = Vec::new();
    for d in suite.dataset.iter().filter(|d| runnable(d)) {
        jobs.push(Job::Model(d, ModelKind::Xbnet));
        jobs.push(Job::Model(d, ModelKind::Gbt));
    }
    for c in &suite.loss_config {
        let d = suite
            .dataset
            .iter()
            .find(|d| d.name == c.dataset)
            .expect("validated on load");
        if runnable(d) {
            jobs.push(Job::Loss(c, d));
        }
    }
    let results: Vec<Result<RunResult>> = jobs
        .par_iter()
        .map(|job| {
            let spec = match job {
                Job::Model(d, kind) => suite.spec(d, *kind),
                Job::Loss(c, d) => {
                    let mut spec = suite.spec(d, ModelKind::Xbnet);
                    spec.layers = c.layers.clone();
                    spec.train.boosted_layers = c.boosted_layers;
                    spec
                }
            };
            run(&spec, clock, false)
        })
        .collect();

    ensure_dir(out_dir)?;
    let mut audit = ImportanceAudit::default();
    let mut datasets: Vec<DatasetRow> = suite
        .dataset
        .iter()
        .map(|d| DatasetRow {
            name: d.name.clone(),
            status: if d.unsupported {
                RowStatus::Unsupported
            } else if runnable(d) {
                RowStatus::Ran
            } else {
                RowStatus::Absent
            },
            message: d
                .unsupported
                .then(|| "dataset not identified; not reproduced".to_string()),
            xbnet: None,
            gbt: None,
        })
        .collect();
    let mut loss_configs = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        match job {
            Job::Model(d, kind) => {
                let row = datasets
                    .iter_mut()
                    .find(|r| r.name == d.name)
                    .expect("row per dataset");
                match result {
                    Ok(r) => {
                        if let Some(t) = &r.trace {
                            merge_audit(&mut audit, &t.importance_audit);
                        }
                        if let Some(trees) = &r.artifact.trees {
                            audit.record(&trees.feature_importance());
                        }
                        if *kind == ModelKind::Xbnet {
                            let dir = out_dir.join(&d.name);
                            ensure_dir(&dir)?;
                            write_file(&dir.join("roc.csv"), &r.roc_csv)?;
                            write_file(&dir.join("pr.csv"), &r.pr_csv)?;
                            if let Some(t) = &r.trace {
                                write_file(&dir.join("trace.csv"), &t.to_csv())?;
                            }
                            row.xbnet = Some(model_result(&r));
                        } else {
                            row.gbt = Some(model_result(&r));
                        }
                    }
                    Err(e) => {
                        row.status = status_of(&e);
                        let msg = format!("{kind:?}: {e}");
                        row.message = Some(
                            row.message
                                .take()
                                .map_or(msg.clone(), |m| format!("{m}; {msg}")),
                        );
                    }
                }
            }
            Job::Loss(c, d) => {
                let mut row = LossRow {
                    name: c.name.clone(),
                    dataset: d.name.clone(),
                    layers: c.layers.clone(),
                    boosted_layers: c.boosted_layers,
                    status: RowStatus::Ran,
                    message: None,
                    final_train_loss: None,
                    final_val_loss: None,
                };
                match result {
                    Ok(r) => {
                        if let Some(t) = &r.trace {
                            merge_audit(&mut audit, &t.importance_audit);
                        }
                        row.final_train_loss = r.report.final_train_loss;
                        row.final_val_loss = r.report.final_val_loss;
                    }
                    Err(e) => {
                        row.status = status_of(&e);
                        row.message = Some(e.to_string());
                    }
                }
                loss_configs.push(row);
            }
        }
    }
    datasets.sort_by(|a, b| a.name.cmp(&b.name));
    loss_configs.sort_by(|a, b| a.name.cmp(&b.name));

    let mut checks = Vec::new();
    for d in &suite.dataset {
        let row = datasets
            .iter()
            .find(|r| r.name == d.name)
            .expect("row per dataset");
        if row.status == RowStatus::Absent || row.status == RowStatus::Unsupported {
            continue;
        }
        let x = row.xbnet.as_ref();
        let g = row.gbt.as_ref();
        let n = &d.name;
        check(
            &mut checks,
            format!("{n}/xbnet_test_accuracy"),
            "min",
            d.min_xbnet_test_accuracy,
            x.map(|m| m.test_accuracy),
        );
        check(
            &mut checks,
            format!("{n}/gbt_test_accuracy"),
            "min",
            d.min_gbt_test_accuracy,
            g.map(|m| m.test_accuracy),
        );
        check(
            &mut checks,
            format!("{n}/xbnet_test_auc"),
            "min",
            d.min_test_auc,
            x.and_then(|m| m.test_auc),
        );
        check(
            &mut checks,
            format!("{n}/xbnet_weighted_f1"),
            "min",
            d.min_weighted_f1,
            x.map(|m| m.test_weighted_f1),
        );
    }
    for c in &suite.loss_config {
        if let Some(row) = loss_configs.iter().find(|r| r.name == c.name) {
            check(
                &mut checks,
                format!("{}/val_loss", c.name),
                "max",
                c.max_val_loss,
                row.final_val_loss,
            );
        }
    }
    checks.sort_by(|a, b| a.name.cmp(&b.name));

    let report = BenchmarkReport {
        format_version: crate::artifact::FORMAT_VERSION,
        generated_at: clock.now(),
        seed: suite.train.seed,
        epochs: suite.train.epochs,
        passed: checks.iter().all(|c| c.passed),
        datasets,
        loss_configs,
        checks,
        importance_audit: audit,
        total_seconds: clock.seconds_since(start),
    };
    write_file(&out_dir.join("benchmark.csv"), &report.to_csv())?;
    let mut loss_csv = String::from(
        "config,dataset,layers,boosted_layers,status,final_train_loss,final_val_loss\n",
    );
    for r in &report.loss_configs {
        let layers: Vec<String> = r.layers.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            loss_csv,
            "{},{},{},{},{},{},{}",
            r.name,
            r.dataset,
            layers.join(" "),
            r.boosted_layers,
            r.status.as_str(),
            r.final_train_loss
                .map_or_else(String::new, |v| v.to_string()),
            r.final_val_loss.map_or_else(String::new, |v| v.to_string()),
        );
    }
    write_file(&out_dir.join("loss_configs.csv"), &loss_csv)?;
    write_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}
