//! CSV ingestion and tabular preprocessing: imputation, categorical
//! encoding, standardization, stratified splitting and mini-batching.
//!
//! A [`Dataset`] keeps raw typed columns. Once every column is numeric and
//! complete it converts into [`Samples`], the `features x samples` matrix
//! consumed by the models.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{Matrix, NumericError, Rng};

/// Categorical columns with more distinct values than this are encoded as
/// a single ordinal column instead of one-hot indicators.
pub const ONE_HOT_LIMIT: usize = 16;

/// Columns whose training standard deviation is below this are only centered.
pub const MIN_STD: f64 = 1e-12;

const SPLIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: column `{column}` is numeric but holds `{value}`")]
    Parse {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: label is missing")]
    MissingLabel { line: u64 },
    #[error("unknown class label `{0}`")]
    UnknownClass(String),
    #[error("no data rows")]
    Empty,
    #[error("column `{0}` has no observed values")]
    AllMissing(String),
    #[error("column `{0}` still has missing values")]
    Unimputed(String),
    #[error("column `{0}` is categorical and must be encoded first")]
    Unencoded(String),
    #[error("unknown category `{value}` in ordinal column `{column}`")]
    UnknownCategory { column: String, value: String },
    #[error("column mismatch: missing [{}], extra [{}]", missing.join(", "), extra.join(", "))]
    ColumnMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("class `{class}` has {count} sample(s); a stratified split needs at least 2")]
    SingletonClass { class: String, count: usize },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    Fraction(f64),
    #[error("batch size must be at least 1")]
    BatchSize,
    #[error("label {label} outside [0, {n_classes})")]
    Label { label: usize, n_classes: usize },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

fn default_missing() -> Vec<String> {
    vec![String::new(), "NA".into(), "?".into()]
}

/// Describes how to read a CSV file. Stored as TOML:
///
/// ```toml
/// label = "species"
/// missing = ["", "NA", "?"]
///
/// [kinds]
/// pclass = "categorical"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub label: String,
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
    #[serde(default)]
    pub kinds: BTreeMap<String, ColumnKind>,
}

impl Schema {
    pub fn new(label: impl Into<String>) -> Self {
        Schema {
            label: label.into(),
            missing: default_missing(),
            kinds: BTreeMap::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| DataError::Schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    fn is_missing(&self, field: &str) -> bool {
        self.missing.iter().any(|m| m == field)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnValues {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnValues {
    pub fn len(&self) -> usize {
        match self {
            ColumnValues::Numeric(v) => v.len(),
            ColumnValues::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnValues::Numeric(_) => ColumnKind::Numeric,
            ColumnValues::Categorical(_) => ColumnKind::Categorical,
        }
    }

    pub fn missing_count(&self) -> usize {
        match self {
            ColumnValues::Numeric(v) => v.iter().filter(|x| x.is_none()).count(),
            ColumnValues::Categorical(v) => v.iter().filter(|x| x.is_none()).count(),
        }
    }

    fn select(&self, idx: &[usize]) -> ColumnValues {
        match self {
            ColumnValues::Numeric(v) => ColumnValues::Numeric(idx.iter().map(|&i| v[i]).collect()),
            ColumnValues::Categorical(v) => {
                ColumnValues::Categorical(idx.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: ColumnValues,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Column {
            name: name.into(),
            values: ColumnValues::Numeric(values),
        }
    }

    pub fn categorical(name: impl Into<String>, values: Vec<Option<String>>) -> Self {
        Column {
            name: name.into(),
            values: ColumnValues::Categorical(values),
        }
    }

    pub fn kind(&self) -> ColumnKind {
        self.values.kind()
    }
}

/// Where a dataset came from and what has been done to it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<String>,
    pub steps: Vec<String>,
}

/// Raw typed feature columns plus class-index labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        for c in &columns {
            if c.values.len() != labels.len() {
                return Err(DataError::Schema(format!(
                    "column `{}` has {} rows, labels have {}",
                    c.name,
                    c.values.len(),
                    labels.len()
                )));
            }
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(DataError::Label {
                label,
                n_classes: class_names.len(),
            });
        }
        Ok(Dataset {
            columns,
            labels,
            class_names,
            provenance: Provenance::default(),
        })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_kinds(&self) -> Vec<ColumnKind> {
        self.columns.iter().map(Column::kind).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    fn log(&mut self, step: String) {
        self.provenance.steps.push(step);
    }

    /// Rows `idx` in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    values: c.values.select(idx),
                })
                .collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Builds the `features x samples` matrix. Every column must be numeric
    /// and complete.
    pub fn to_samples(&self) -> Result<Samples> {
        let n = self.n_samples();
        let mut data = Vec::with_capacity(self.columns.len() * n);
        for c in &self.columns {
            match &c.values {
                ColumnValues::Categorical(_) => return Err(DataError::Unencoded(c.name.clone())),
                ColumnValues::Numeric(v) => {
                    for x in v {
                        data.push(x.ok_or_else(|| DataError::Unimputed(c.name.clone()))?);
                    }
                }
            }
        }
        let x = Matrix::from_vec(self.columns.len(), n, data)?;
        Samples::new(x, self.labels.clone(), self.n_classes())
    }
}

fn parse_number(field: &str) -> Option<f64> {
    field.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a CSV file. Class names are assigned in first-appearance order.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    load_csv_inner(path, schema, None)
}

/// Reads a CSV file whose labels must come from `class_names`; used when
/// scoring data against an existing model.
pub fn load_csv_with_classes(
    path: &Path,
    schema: &Schema,
    class_names: &[String],
) -> Result<Dataset> {
    load_csv_inner(path, schema, Some(class_names))
}

fn load_csv_inner(path: &Path, schema: &Schema, classes: Option<&[String]>) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut ds = read_csv(file, schema, classes)?;
    ds.provenance.source = Some(path.display().to_string());
    Ok(ds)
}

/// Parses CSV text from any reader.
pub fn read_csv<R: Read>(
    reader: R,
    schema: &Schema,
    classes: Option<&[String]>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let label_idx = header
        .iter()
        .position(|h| *h == schema.label)
        .ok_or_else(|| DataError::MissingLabelColumn(schema.label.clone()))?;
    if let Some(unknown) = schema.kinds.keys().find(|k| !header.contains(k)) {
        return Err(DataError::Schema(format!(
            "kind override for unknown column `{unknown}`"
        )));
    }

    let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); header.len()];
    let mut lines = Vec::new();
    let mut label_text = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(DataError::Ragged {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                if schema.is_missing(field) {
                    return Err(DataError::MissingLabel { line });
                }
                label_text.push(field.to_string());
            } else {
                raw[j].push((!schema.is_missing(field)).then(|| field.to_string()));
            }
        }
        lines.push(line);
    }
    if label_text.is_empty() {
        return Err(DataError::Empty);
    }

    let mut class_names: Vec<String> = classes.map(<[String]>::to_vec).unwrap_or_default();
    let mut class_index: HashMap<String, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i))
        .collect();
    let mut labels = Vec::with_capacity(label_text.len());
    for text in label_text {
        let id = match class_index.get(&text) {
            Some(&id) => id,
            None if classes.is_some() => return Err(DataError::UnknownClass(text)),
            None => {
                class_names.push(text.clone());
                class_index.insert(text, class_names.len() - 1);
                class_names.len() - 1
            }
        };
        labels.push(id);
    }

    let mut columns = Vec::with_capacity(header.len() - 1);
    for (j, name) in header.iter().enumerate() {
        if j == label_idx {
            continue;
        }
        let values = std::mem::take(&mut raw[j]);
        let kind = schema.kinds.get(name).copied().unwrap_or_else(|| {
            if values.iter().flatten().all(|v| parse_number(v).is_some()) {
                ColumnKind::Numeric
            } else {
                ColumnKind::Categorical
            }
        });
        let column = match kind {
            ColumnKind::Categorical => Column::categorical(name.clone(), values),
            ColumnKind::Numeric => {
                let mut parsed = Vec::with_capacity(values.len());
                for (row, v) in values.into_iter().enumerate() {
                    parsed.push(match v {
                        None => None,
                        Some(text) => {
                            Some(parse_number(&text).ok_or_else(|| DataError::Parse {
                                line: lines[row],
                                column: name.clone(),
                                value: text,
                            })?)
                        }
                    });
                }
                Column::numeric(name.clone(), parsed)
            }
        };
        columns.push(column);
    }
    let mut ds = Dataset::new(columns, labels, class_names)?;
    ds.log(format!(
        "loaded {} rows, {} feature columns, {} classes",
        ds.n_samples(),
        ds.n_features(),
        ds.n_classes()
    ));
    Ok(ds)
}

fn check_columns(expected: &[String], ds: &Dataset) -> Result<()> {
    let found = ds.feature_names();
    if found == expected {
        return Ok(());
    }
    let missing: Vec<String> = expected
        .iter()
        .filter(|e| !found.contains(e))
        .cloned()
        .collect();
    let extra: Vec<String> = found
        .iter()
        .filter(|f| !expected.contains(f))
        .cloned()
        .collect();
    Err(DataError::ColumnMismatch { missing, extra })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum FillValue {
    Numeric(f64),
    Categorical(String),
}

/// Per-column fill values: median for numeric, mode for categorical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputePlan {
    pub columns: Vec<String>,
    pub fills: Vec<FillValue>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Most frequent value; ties go to the value seen first.
fn mode(values: &[&String]) -> String {
    let mut counts: HashMap<&String, (usize, usize)> = HashMap::new();
    for (i, v) in values.iter().enumerate() {
        counts.entry(v).or_insert((0, i)).0 += 1;
    }
    let best = counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .expect("non-empty");
    best.0.clone()
}

impl ImputePlan {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let mut fills = Vec::with_capacity(ds.n_features());
        for c in ds.columns() {
            let fill = match &c.values {
                ColumnValues::Numeric(v) => {
                    let seen: Vec<f64> = v.iter().flatten().copied().collect();
                    if seen.is_empty() {
                        return Err(DataError::AllMissing(c.name.clone()));
                    }
                    FillValue::Numeric(median(&seen))
                }
                ColumnValues::Categorical(v) => {
                    let seen: Vec<&String> = v.iter().flatten().collect();
                    if seen.is_empty() {
                        return Err(DataError::AllMissing(c.name.clone()));
                    }
                    FillValue::Categorical(mode(&seen))
                }
            };
            fills.push(fill);
        }
        Ok(ImputePlan {
            columns: ds.feature_names(),
            fills,
        })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        check_columns(&self.columns, ds)?;
        let mut out = ds.clone();
        for (c, fill) in out.columns.iter_mut().zip(&self.fills) {
            let missing = c.values.missing_count();
            if missing == 0 {
                continue;
            }
            match (&mut c.values, fill) {
                (ColumnValues::Numeric(v), FillValue::Numeric(f)) => v.iter_mut().for_each(|x| {
                    x.get_or_insert(*f);
                }),
                (ColumnValues::Categorical(v), FillValue::Categorical(f)) => {
                    v.iter_mut().for_each(|x| {
                        x.get_or_insert_with(|| f.clone());
                    })
                }
                _ => {
                    return Err(DataError::Schema(format!(
                        "column `{}` changed kind since imputation was fitted",
                        c.name
                    )))
                }
            }
            let shown = match fill {
                FillValue::Numeric(f) => f.to_string(),
                FillValue::Categorical(s) => s.clone(),
            };
            out.provenance.steps.push(format!(
                "imputed {missing} missing value(s) in `{}` with {shown}",
                c.name
            ));
        }
        Ok(out)
    }
}

/// Fills missing values from the dataset's own medians and modes.
pub fn impute(ds: &Dataset) -> Result<Dataset> {
    ImputePlan::fit(ds)?.apply(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum ColumnEncoding {
    Passthrough,
    OneHot { categories: Vec<String> },
    Ordinal { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodePlan {
    pub columns: Vec<String>,
    pub encodings: Vec<ColumnEncoding>,
}

fn distinct_in_order(values: &[Option<String>]) -> Vec<String> {
    let mut seen = Vec::new();
    let mut set = std::collections::HashSet::new();
    for v in values.iter().flatten() {
        if set.insert(v) {
            seen.push(v.clone());
        }
    }
    seen
}

impl EncodePlan {
    pub fn fit(ds: &Dataset) -> Self {
        let encodings = ds
            .columns()
            .iter()
            .map(|c| match &c.values {
                ColumnValues::Numeric(_) => ColumnEncoding::Passthrough,
                ColumnValues::Categorical(v) => {
                    let categories = distinct_in_order(v);
                    if categories.len() <= ONE_HOT_LIMIT {
                        ColumnEncoding::OneHot { categories }
                    } else {
                        ColumnEncoding::Ordinal { categories }
                    }
                }
            })
            .collect();
        EncodePlan {
            columns: ds.feature_names(),
            encodings,
        }
    }

    /// Names of the encoded feature columns.
    pub fn output_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (name, enc) in self.columns.iter().zip(&self.encodings) {
            match enc {
                ColumnEncoding::OneHot { categories } => {
                    names.extend(categories.iter().map(|c| format!("{name}={c}")));
                }
                _ => names.push(name.clone()),
            }
        }
        names
    }

    /// Categories unseen at fit time get all-zero indicators; in ordinal
    /// columns they are an error.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        check_columns(&self.columns, ds)?;
        let mut columns = Vec::new();
        let mut changed = Vec::new();
        for (c, enc) in ds.columns().iter().zip(&self.encodings) {
            match (enc, &c.values) {
                (ColumnEncoding::Passthrough, ColumnValues::Numeric(_)) => columns.push(c.clone()),
                (ColumnEncoding::OneHot { categories }, ColumnValues::Categorical(v)) => {
                    for cat in categories {
                        let ind = v
                            .iter()
                            .map(|x| match x {
                                None => Err(DataError::Unimputed(c.name.clone())),
                                Some(x) => Ok(Some(if x == cat { 1.0 } else { 0.0 })),
                            })
                            .collect::<Result<_>>()?;
                        columns.push(Column::numeric(format!("{}={cat}", c.name), ind));
                    }
                    changed.push(format!("`{}` one-hot ({})", c.name, categories.len()));
                }
                (ColumnEncoding::Ordinal { categories }, ColumnValues::Categorical(v)) => {
                    let index: HashMap<&String, usize> =
                        categories.iter().enumerate().map(|(i, c)| (c, i)).collect();
                    let codes = v
                        .iter()
                        .map(|x| {
                            let x = x
                                .as_ref()
                                .ok_or_else(|| DataError::Unimputed(c.name.clone()))?;
                            index.get(x).map(|&i| Some(i as f64)).ok_or_else(|| {
                                DataError::UnknownCategory {
                                    column: c.name.clone(),
                                    value: x.clone(),
                                }
                            })
                        })
                        .collect::<Result<_>>()?;
                    columns.push(Column::numeric(c.name.clone(), codes));
                    changed.push(format!("`{}` ordinal ({})", c.name, categories.len()));
                }
                _ => {
                    return Err(DataError::Schema(format!(
                        "column `{}` changed kind since encoding was fitted",
                        c.name
                    )))
                }
            }
        }
        let mut out = Dataset {
            columns,
            labels: ds.labels.clone(),
            class_names: ds.class_names.clone(),
            provenance: ds.provenance.clone(),
        };
        if !changed.is_empty() {
            out.log(format!("encoded {}", changed.join(", ")));
        }
        Ok(out)
    }
}

/// One-hot encodes low-cardinality categorical columns and ordinal-encodes
/// the rest.
pub fn encode(ds: &Dataset) -> Result<Dataset> {
    EncodePlan::fit(ds).apply(ds)
}

/// Per-column z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<String>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

fn numeric_values(c: &Column) -> Result<&[Option<f64>]> {
    match &c.values {
        ColumnValues::Numeric(v) => Ok(v),
        ColumnValues::Categorical(_) => Err(DataError::Unencoded(c.name.clone())),
    }
}

impl Standardizer {
    /// Population mean and standard deviation of every column.
    pub fn fit(ds: &Dataset) -> Result<Self> {
        if ds.n_samples() == 0 {
            return Err(DataError::Empty);
        }
        let n = ds.n_samples() as f64;
        let mut means = Vec::new();
        let mut scales = Vec::new();
        for c in ds.columns() {
            let v = numeric_values(c)?;
            let mut vals = Vec::with_capacity(v.len());
            for x in v {
                vals.push(x.ok_or_else(|| DataError::Unimputed(c.name.clone()))?);
            }
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            means.push(mean);
            scales.push(if std < MIN_STD { 1.0 } else { std });
        }
        Ok(Standardizer {
            columns: ds.feature_names(),
            means,
            scales,
        })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        check_columns(&self.columns, ds)?;
        let mut out = ds.clone();
        for ((c, mean), scale) in out.columns.iter_mut().zip(&self.means).zip(&self.scales) {
            let name = c.name.clone();
            let ColumnValues::Numeric(v) = &mut c.values else {
                return Err(DataError::Unencoded(name));
            };
            for x in v.iter_mut() {
                let value = x.ok_or_else(|| DataError::Unimputed(name.clone()))?;
                *x = Some((value - mean) / scale);
            }
        }
        out.log(format!("standardized {} columns", self.columns.len()));
        Ok(out)
    }
}

/// Fits z-score statistics on `train` and applies them to both sets.
pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset)> {
    let s = Standardizer::fit(train)?;
    Ok((s.apply(train)?, s.apply(test)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    /// Row indices into the source dataset, ascending.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub train_fraction: f64,
}

/// Shuffles each class independently and sends `ceil(fraction · n_c)` of its
/// rows to train, keeping at least one row per class in test.
pub fn stratified_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitPair> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::Fraction(train_fraction));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = Rng::derive(seed, SPLIT_STREAM);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class, mut rows) in by_class.into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            return Err(DataError::SingletonClass {
                class: ds.class_names()[class].clone(),
                count: rows.len(),
            });
        }
        rng.shuffle(&mut rows);
        // The small offset keeps products such as 0.7 * 10 from rounding up.
        let n_train =
            ((train_fraction * rows.len() as f64 - 1e-9).ceil() as usize).clamp(1, rows.len() - 1);
        test_idx.extend_from_slice(&rows[n_train..]);
        rows.truncate(n_train);
        train_idx.extend(rows);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let mut train = ds.select_rows(&train_idx);
    let mut test = ds.select_rows(&test_idx);
    let note = format!("stratified split, fraction {train_fraction}, seed {seed}");
    train.log(format!("{note}: train part ({} rows)", train_idx.len()));
    test.log(format!("{note}: test part ({} rows)", test_idx.len()));
    Ok(SplitPair {
        train,
        test,
        train_indices: train_idx,
        test_indices: test_idx,
        seed,
        train_fraction,
    })
}

/// Numeric design matrix (`features x samples`) with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl Samples {
    pub fn new(x: Matrix, y: Vec<usize>, n_classes: usize) -> Result<Self> {
        if x.cols() != y.len() {
            return Err(DataError::Schema(format!(
                "{} sample columns but {} labels",
                x.cols(),
                y.len()
            )));
        }
        if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
            return Err(DataError::Label { label, n_classes });
        }
        Ok(Samples { x, y, n_classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.rows()
    }

    pub fn select(&self, idx: &[usize]) -> Samples {
        Samples {
            x: self.x.select_columns(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// Shuffled index batches for one epoch; the order depends only on
/// `(seed, epoch)` and the last batch may be short.
pub fn batch_indices(
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(DataError::BatchSize);
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::derive(seed, epoch as u64).shuffle(&mut order);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Mini-batches `(X_batch, y_batch)` for one epoch.
pub fn batches(
    samples: &Samples,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<(Matrix, Vec<usize>)>> {
    Ok(batch_indices(samples.len(), batch_size, seed, epoch)?
        .into_iter()
        .map(|idx| {
            let b = samples.select(&idx);
            (b.x, b.y)
        })
        .collect())
}

/// Fitted preprocessing: imputation and encoding fitted on the full
/// dataset, standardization on the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub label: String,
    pub class_names: Vec<String>,
    pub impute: ImputePlan,
    pub encode: EncodePlan,
    pub standardize: Standardizer,
}

impl Preprocessor {
    /// Raw feature columns expected in input files.
    pub fn input_columns(&self) -> &[String] {
        &self.impute.columns
    }

    /// Encoded, standardized feature names.
    pub fn feature_names(&self) -> &[String] {
        &self.standardize.columns
    }

    pub fn transform(&self, raw: &Dataset) -> Result<Samples> {
        let ds = self
            .standardize
            .apply(&self.encode.apply(&self.impute.apply(raw)?)?)?;
        ds.to_samples()
    }
}

/// Output of [`prepare`]: ready-to-train splits and the fitted pipeline.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Samples,
    pub test: Samples,
    pub split: SplitPair,
    pub preprocessor: Preprocessor,
    pub provenance: Provenance,
}

/// load → impute → encode → split → standardize.
pub fn prepare(raw: &Dataset, label: &str, train_fraction: f64, seed: u64) -> Result<Prepared> {
    let impute_plan = ImputePlan::fit(raw)?;
    let imputed = impute_plan.apply(raw)?;
    let encode_plan = EncodePlan::fit(&imputed);
    let encoded = encode_plan.apply(&imputed)?;
    let split = stratified_split(&encoded, train_fraction, seed)?;
    let scaler = Standardizer::fit(&split.train)?;
    let train_ds = scaler.apply(&split.train)?;
    let test_ds = scaler.apply(&split.test)?;
    Ok(Prepared {
        train: train_ds.to_samples()?,
        test: test_ds.to_samples()?,
        provenance: train_ds.provenance().clone(),
        split,
        preprocessor: Preprocessor {
            label: label.to_string(),
            class_names: raw.class_names().to_vec(),
            impute: impute_plan,
            encode: encode_plan,
            standardize: scaler,
        },
    })
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), &Schema::new("label"), None)
    }

    fn nums(ds: &Dataset, col: usize) -> Vec<Option<f64>> {
        match &ds.columns()[col].values {
            ColumnValues::Numeric(v) => v.clone(),
            _ => panic!("not numeric"),
        }
    }

    #[test]
    fn load_small_csv() {
        let ds = read("a,b,label\n1,x,yes\n2,y,no\n3,x,yes\n").unwrap();
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.class_names(), &["yes".to_string(), "no".to_string()]);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(
            ds.column_kinds(),
            vec![ColumnKind::Numeric, ColumnKind::Categorical]
        );
    }

    #[test]
    fn ragged_row_names_line() {
        match read("a,b,label\n1,2,yes\n1,no\n") {
            Err(DataError::Ragged {
                line: 3,
                expected: 3,
                found: 2,
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn declared_numeric_rejects_text() {
        let mut schema = Schema::new("label");
        schema.kinds.insert("a".into(), ColumnKind::Numeric);
        let err = read_csv("a,label\n1,x\nfoo,y\n".as_bytes(), &schema, None).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 3, .. }), "{err}");
        let err = read_csv("b,y\n1,x\n".as_bytes(), &Schema::new("label"), None).unwrap_err();
        assert!(matches!(err, DataError::MissingLabelColumn(_)));
    }

    #[test]
    fn missing_markers_and_overrides() {
        let schema =
            Schema::from_toml_str("label = \"label\"\n[kinds]\nb = \"categorical\"\n").unwrap();
        let ds = read_csv(
            "a,b,label\nNA,1,p\n?,2,q\n,3,p\n5,1,q\n".as_bytes(),
            &schema,
            None,
        )
        .unwrap();
        assert_eq!(nums(&ds, 0), vec![None, None, None, Some(5.0)]);
        assert_eq!(ds.columns()[1].kind(), ColumnKind::Categorical);
        assert!(Schema::from_toml_str("label = \"y\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn known_classes_are_enforced() {
        let classes = vec!["no".to_string(), "yes".to_string()];
        let ds = read_csv(
            "a,label\n1,yes\n".as_bytes(),
            &Schema::new("label"),
            Some(&classes),
        )
        .unwrap();
        assert_eq!(ds.labels(), &[1]);
        let err = read_csv(
            "a,label\n1,maybe\n".as_bytes(),
            &Schema::new("label"),
            Some(&classes),
        )
        .unwrap_err();
        assert!(matches!(err, DataError::UnknownClass(_)));
    }

    #[test]
    fn impute_examples() {
        let ds = read("a,label\n1,p\nNA,q\n3,p\n").unwrap();
        let out = impute(&ds).unwrap();
        assert_eq!(nums(&out, 0), vec![Some(1.0), Some(2.0), Some(3.0)]);
        assert_eq!(out.provenance().steps.len(), 2);

        let clean = read("a,label\n1,p\n2,q\n").unwrap();
        assert_eq!(impute(&clean).unwrap(), clean);

        let empty = read("a,b,label\nNA,1,p\n?,2,q\n").unwrap();
        assert!(matches!(impute(&empty), Err(DataError::AllMissing(c)) if c == "a"));

        let cat = read("c,label\nx,p\nNA,q\ny,p\ny,q\n").unwrap();
        match &impute(&cat).unwrap().columns()[0].values {
            ColumnValues::Categorical(v) => assert_eq!(v[1].as_deref(), Some("y")),
            _ => unreachable!(),
        }
    }

    #[test]
    fn encode_examples() {
        let ds = read("color,label\nred,p\nblue,q\nred,q\n").unwrap();
        let out = encode(&ds).unwrap();
        assert_eq!(out.feature_names(), vec!["color=red", "color=blue"]);
        assert_eq!(nums(&out, 0), vec![Some(1.0), Some(0.0), Some(1.0)]);
        assert_eq!(nums(&out, 1), vec![Some(0.0), Some(1.0), Some(0.0)]);

        let numeric = read("a,b,label\n1,2,p\n3,4,q\n").unwrap();
        assert_eq!(encode(&numeric).unwrap(), numeric);

        let mut text = String::from("id,label\n");
        for i in 0..20 {
            text.push_str(&format!("v{i},{}\n", if i % 2 == 0 { "p" } else { "q" }));
        }
        let out = encode(&read(&text).unwrap()).unwrap();
        assert_eq!(out.n_features(), 1);
        let codes: Vec<f64> = nums(&out, 0).into_iter().flatten().collect();
        assert_eq!(codes, (0..20).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn standardize_examples() {
        let train = read("a,b,label\n0,5,p\n2,5,q\n").unwrap();
        let test = read("a,b,label\n4,7,p\n").unwrap();
        let (tr, te) = standardize(&train, &test).unwrap();
        assert_eq!(nums(&tr, 0), vec![Some(-1.0), Some(1.0)]);
        assert_eq!(nums(&te, 0), vec![Some(3.0)]);
        assert_eq!(nums(&tr, 1), vec![Some(0.0), Some(0.0)]);
        assert_eq!(nums(&te, 1), vec![Some(2.0)]);

        let renamed = read("a,c,label\n1,2,p\n").unwrap();
        assert!(matches!(
            standardize(&train, &renamed),
            Err(DataError::ColumnMismatch { .. })
        ));
    }

    fn two_class(n_per: usize) -> Dataset {
        let labels: Vec<usize> = (0..2 * n_per).map(|i| i % 2).collect();
        let col = Column::numeric("i", (0..2 * n_per).map(|i| Some(i as f64)).collect());
        Dataset::new(vec![col], labels, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn split_examples() {
        let ds = two_class(50);
        let s = stratified_split(&ds, 0.8, 42).unwrap();
        assert_eq!(s.train.class_counts(), vec![40, 40]);
        assert_eq!(s.test.class_counts(), vec![10, 10]);
        let again = stratified_split(&ds, 0.8, 42).unwrap();
        assert_eq!(s.train_indices, again.train_indices);
        assert_ne!(
            s.train_indices,
            stratified_split(&ds, 0.8, 7).unwrap().train_indices
        );

        let lone = Dataset::new(
            vec![Column::numeric("x", vec![Some(1.0), Some(2.0), Some(3.0)])],
            vec![0, 0, 1],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert!(matches!(
            stratified_split(&lone, 0.8, 1),
            Err(DataError::SingletonClass { count: 1, .. })
        ));
        assert!(matches!(
            stratified_split(&ds, 1.0, 1),
            Err(DataError::Fraction(_))
        ));
    }

    #[test]
    fn split_rounds_toward_train() {
        let ds = two_class(5);
        let s = stratified_split(&ds, 0.7, 3).unwrap();
        // 0.7 * 5 = 3.5 rounds up to 4 per class.
        assert_eq!(s.train.class_counts(), vec![4, 4]);
    }

    #[test]
    fn batch_examples() {
        let sizes: Vec<usize> = batch_indices(10, 4, 1, 0)
            .unwrap()
            .iter()
            .map(Vec::len)
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let single = batch_indices(10, 32, 1, 0).unwrap();
        assert_eq!(single.len(), 1);
        let mut all = single[0].clone();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_ne!(
            batch_indices(50, 50, 1, 1).unwrap(),
            batch_indices(50, 50, 1, 2).unwrap()
        );
        assert!(matches!(
            batch_indices(3, 0, 1, 0),
            Err(DataError::BatchSize)
        ));
    }

    #[test]
    fn samples_reject_categorical() {
        let ds = read("c,label\nx,p\n").unwrap();
        assert!(matches!(ds.to_samples(), Err(DataError::Unencoded(_))));
    }
}
