//! `train`, `eval` and `importance`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use xbnet::data::{
    load_csv, load_csv_with_classes, prepare, ColumnKind, DataError, FillValue, Prepared,
    Provenance, Schema,
};
use xbnet::gbdt::GbtModel;
use xbnet::network::XbnetModel;
use xbnet::numeric::Rng;
use xbnet::optimizer::{train_with_progress, EpochRecord, ImportanceAudit, TrainTrace};

use crate::artifact::{MetricsSummary, ModelArtifact, FORMAT_VERSION};
use crate::error::{CliError, Result};
use crate::report::{
    curve_csvs, ensure_dir, evaluate_split, write_file, write_json, Clock, SplitEvaluation,
};
use crate::run::{ModelKind, RunSpec};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out_dir: Option<PathBuf>,
    pub clock: Clock,
    /// Print one line per epoch to stderr.
    pub progress: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub format_version: u32,
    pub generated_at: u64,
    pub dataset: String,
    pub model: ModelKind,
    pub trained: bool,
    pub epochs: usize,
    pub seed: u64,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    /// Widths of every network layer, head included. Empty for tree models.
    pub layers: Vec<usize>,
    pub train: SplitEvaluation,
    pub test: SplitEvaluation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_val_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance_audit: Option<ImportanceAudit>,
    pub train_seconds: f64,
    pub provenance: Provenance,
    pub notes: Vec<String>,
}

/// Everything a training run produces, before anything is written.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub artifact: ModelArtifact,
    pub report: TrainReport,
    pub trace: Option<TrainTrace>,
    pub roc_csv: String,
    pub pr_csv: String,
    pub test_rows: Vec<usize>,
}

fn print_epoch(r: &EpochRecord) {
    eprintln!(
        "epoch {:>4}  train_loss {:.5}  val_loss {:.5}  train_acc {:.4}  val_acc {:.4}",
        r.epoch, r.train_loss, r.val_loss, r.train_accuracy, r.val_accuracy
    );
}

enum Fitted {
    Net(XbnetModel, TrainTrace),
    Trees(GbtModel),
}

/// load → impute → encode → split → standardize → train → evaluate.
pub fn run(spec: &RunSpec, clock: Clock, progress: bool) -> Result<RunResult> {
    let schema = spec.schema()?;
    let raw = load_csv(&spec.dataset, &schema)?;
    let seed = spec.train.seed;
    let Prepared {
        train,
        test,
        split,
        preprocessor,
        provenance,
    } = prepare(&raw, &schema.label, spec.train_fraction, seed)?;
    let n_classes = raw.n_classes();
    let start = Instant::now();

    let fitted = match spec.model {
        ModelKind::Xbnet => {
            let (hidden, activations) = spec.hidden_layers(n_classes)?;
            let mut rng = Rng::new(seed);
            let mut model = XbnetModel::classifier_with(
                train.n_features(),
                &hidden,
                &activations,
                n_classes,
                spec.train.boosted_layers,
                &mut rng,
            )?;
            model.set_feature_names(preprocessor.feature_names().to_vec())?;
            let mut cb = print_epoch;
            let progress: Option<&mut dyn FnMut(&EpochRecord)> =
                if progress { Some(&mut cb) } else { None };
            let trace = train_with_progress(&mut model, &train, &test, &spec.train, progress)?;
            Fitted::Net(model, trace)
        }
        ModelKind::Gbt => Fitted::Trees(GbtModel::fit(
            &train.x,
            &train.y,
            n_classes,
            &spec.train.tree,
        )?),
    };
    let train_seconds = clock.seconds_since(start);

    let (network, trees, trace) = match fitted {
        Fitted::Net(m, t) => (Some(m), None, Some(t)),
        Fitted::Trees(t) => (None, Some(t), None),
    };
    let mut artifact = ModelArtifact {
        format_version: FORMAT_VERSION,
        kind: spec.model,
        schema,
        preprocessing: preprocessor,
        network,
        trees,
        metrics: MetricsSummary {
            trained: false,
            epochs: 0,
            train_accuracy: 0.0,
            test_accuracy: 0.0,
            test_log_loss: 0.0,
            test_auc: None,
        },
    };

    let predict = |x| -> Result<_> {
        Ok(match (&artifact.network, &artifact.trees) {
            (Some(net), _) => net.predict(x)?,
            (None, Some(t)) => {
                let probabilities = t.predict_proba(x)?;
                let labels = (0..probabilities.rows())
                    .map(|i| xbnet::network::argmax(probabilities.row(i)))
                    .collect();
                xbnet::network::Prediction {
                    labels,
                    probabilities,
                }
            }
            (None, None) => unreachable!("a model was fitted above"),
        })
    };
    let train_pred = predict(&train.x)?;
    let test_pred = predict(&test.x)?;
    let train_eval = evaluate_split(&train_pred, &train.y, n_classes)?;
    let test_eval = evaluate_split(&test_pred, &test.y, n_classes)?;
    let (roc_csv, pr_csv) = curve_csvs(&test_pred, &test.y, raw.class_names())?;

    let (trained, epochs, layers) = match &artifact.network {
        Some(net) => (
            spec.train.epochs > 0,
            spec.train.epochs,
            net.layers().iter().map(|l| l.n_out()).collect(),
        ),
        None => (
            spec.train.tree.n_estimators > 0,
            spec.train.tree.n_estimators,
            Vec::new(),
        ),
    };
    let mut notes = Vec::new();
    if !trained {
        notes.push("untrained: zero epochs requested".to_string());
    }
    if let Some(t) = artifact.trees.as_ref().filter(|t| t.is_degenerate()) {
        notes.push(format!(
            "single-class training data; constant model over {} classes",
            t.n_classes()
        ));
    }
    artifact.metrics = MetricsSummary {
        trained,
        epochs,
        train_accuracy: train_eval.accuracy,
        test_accuracy: test_eval.accuracy,
        test_log_loss: test_eval.log_loss,
        test_auc: test_eval.auc,
    };
    let report = TrainReport {
        format_version: FORMAT_VERSION,
        generated_at: clock.now(),
        dataset: spec.dataset.display().to_string(),
        model: spec.model,
        trained,
        epochs,
        seed,
        class_names: raw.class_names().to_vec(),
        feature_names: artifact.preprocessing.feature_names().to_vec(),
        layers,
        train: train_eval,
        test: test_eval,
        final_train_loss: trace.as_ref().and_then(|t| t.train_loss.last().copied()),
        final_val_loss: trace.as_ref().and_then(|t| t.val_loss.last().copied()),
        importance_audit: trace.as_ref().map(|t| t.importance_audit),
        train_seconds,
        provenance,
        notes,
    };
    Ok(RunResult {
        artifact,
        report,
        trace,
        roc_csv,
        pr_csv,
        test_rows: split.test_indices,
    })
}

/// Copies the header and the given data rows of a CSV file verbatim.
pub fn copy_rows(src: &Path, rows: &[usize], dst: &Path) -> Result<()> {
    let read = |e| CliError::csv(src, e);
    let write = |e| CliError::csv(dst, e);
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(src)
        .map_err(read)?;
    let records: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(read)?;
    let mut wtr = csv::Writer::from_path(dst).map_err(write)?;
    wtr.write_record(rdr.headers().map_err(read)?)
        .map_err(write)?;
    for &r in rows {
        wtr.write_record(&records[r]).map_err(write)?;
    }
    wtr.flush().map_err(|e| CliError::io(dst, e))
}

impl RunResult {
    /// Writes model.json, report.json, trace.csv, roc.csv, pr.csv and
    /// test.csv (the raw held-out rows) into `dir`.
    pub fn write(&self, dir: &Path, dataset: &Path) -> Result<()> {
        ensure_dir(dir)?;
        self.artifact.save(&dir.join("model.json"))?;
        write_json(&dir.join("report.json"), &self.report)?;
        if let Some(trace) = &self.trace {
            write_file(&dir.join("trace.csv"), &trace.to_csv())?;
        }
        write_file(&dir.join("roc.csv"), &self.roc_csv)?;
        write_file(&dir.join("pr.csv"), &self.pr_csv)?;
        copy_rows(dataset, &self.test_rows, &dir.join("test.csv"))
    }
}

fn out_dir(opts: &Options, spec_dir: Option<&Path>) -> PathBuf {
    opts.out_dir
        .clone()
        .or_else(|| spec_dir.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn cmd_train(spec: &RunSpec, opts: &Options) -> Result<RunResult> {
    let result = run(spec, opts.clock, opts.progress)?;
    let dir = out_dir(opts, spec.out_dir.as_deref());
    result.write(&dir, &spec.dataset)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub generated_at: u64,
    pub model: String,
    pub dataset: String,
    pub kind: ModelKind,
    pub class_names: Vec<String>,
    pub evaluation: SplitEvaluation,
}

/// Schema for reading new data with an artifact: column kinds pinned to
/// those seen at training time, after checking the header.
fn eval_schema(artifact: &ModelArtifact, data: &Path) -> Result<Schema> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(data)
        .map_err(|e| CliError::csv(data, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::csv(data, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut schema = artifact.schema.clone();
    let expected = artifact.preprocessing.input_columns();
    let mut missing: Vec<String> = expected
        .iter()
        .filter(|c| !header.contains(c))
        .cloned()
        .collect();
    if !header.contains(&schema.label) {
        missing.push(schema.label.clone());
    }
    let extra: Vec<String> = header
        .iter()
        .filter(|h| **h != schema.label && !expected.contains(h))
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(DataError::ColumnMismatch { missing, extra }.into());
    }
    let plan = &artifact.preprocessing.impute;
    for (col, fill) in plan.columns.iter().zip(&plan.fills) {
        let kind = match fill {
            FillValue::Numeric(_) => ColumnKind::Numeric,
            FillValue::Categorical(_) => ColumnKind::Categorical,
        };
        schema.kinds.insert(col.clone(), kind);
    }
    Ok(schema)
}

/// Scores an artifact on a labelled CSV using only the stored
/// preprocessing and model payload.
pub fn cmd_eval(model: &Path, data: &Path, opts: &Options) -> Result<EvalReport> {
    let artifact = ModelArtifact::load(model)?;
    let schema = eval_schema(&artifact, data)?;
    let raw = load_csv_with_classes(data, &schema, artifact.class_names())?;
    let (y, prediction) = artifact.predict(&raw)?;
    let evaluation = evaluate_split(&prediction, &y, artifact.class_names().len())?;
    let report = EvalReport {
        format_version: FORMAT_VERSION,
        generated_at: opts.clock.now(),
        model: model.display().to_string(),
        dataset: data.display().to_string(),
        kind: artifact.kind,
        class_names: artifact.class_names().to_vec(),
        evaluation,
    };
    if let Some(dir) = &opts.out_dir {
        ensure_dir(dir)?;
        write_json(&dir.join("report.json"), &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRow {
    /// `input` for the input features, `layer<l>` for boosted layer `l`.
    pub scope: String,
    pub index: usize,
    pub name: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImportanceTable {
    Rows(Vec<ImportanceRow>),
    /// The artifact was stripped of training-time data.
    Absent,
}

pub const ABSENT_NOTICE: &str = "train-time data absent: the artifact stores no importance vectors";

impl ImportanceTable {
    pub fn from_artifact(artifact: &ModelArtifact) -> Self {
        let mut rows = Vec::new();
        let names = artifact.preprocessing.feature_names();
        let mut push = |scope: String, values: &[f64], name: &dyn Fn(usize) -> String| {
            for (index, &importance) in values.iter().enumerate() {
                rows.push(ImportanceRow {
                    scope: scope.clone(),
                    index,
                    name: name(index),
                    importance,
                });
            }
        };
        let feature = |i: usize| names.get(i).cloned().unwrap_or_else(|| format!("x{i}"));
        if let Some(net) = &artifact.network {
            if let Some(f) = net.input_importance() {
                push("input".into(), f.values(), &feature);
            }
            for (l, layer) in net.layers().iter().enumerate() {
                if let Some(f) = layer.importance() {
                    push(format!("layer{l}"), f.values(), &|j| {
                        format!("layer{l}_unit{j}")
                    });
                }
            }
        }
        if let Some(trees) = &artifact.trees {
            push(
                "input".into(),
                trees.feature_importance().values(),
                &feature,
            );
        }
        if rows.is_empty() {
            ImportanceTable::Absent
        } else {
            ImportanceTable::Rows(rows)
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,index,name,importance\n");
        if let ImportanceTable::Rows(rows) = self {
            for r in rows {
                let _ = writeln!(out, "{},{},{},{}", r.scope, r.index, r.name, r.importance);
            }
        }
        out
    }
}

pub enum ImportanceSource<'a> {
    Artifact(&'a Path),
    Spec(&'a RunSpec),
}

/// Importance table for a saved artifact, or for a model trained from a
/// spec on the spot. Writes `importance.csv` when an output directory is set.
pub fn cmd_importance(source: ImportanceSource<'_>, opts: &Options) -> Result<ImportanceTable> {
    let artifact = match source {
        ImportanceSource::Artifact(path) => ModelArtifact::load(path)?,
        ImportanceSource::Spec(spec) => run(spec, opts.clock, opts.progress)?.artifact,
    };
    let table = ImportanceTable::from_artifact(&artifact);
    if let (Some(dir), ImportanceTable::Rows(_)) = (&opts.out_dir, &table) {
        ensure_dir(dir)?;
        write_file(&dir.join("importance.csv"), &table.to_csv())?;
    }
    Ok(table)
}
