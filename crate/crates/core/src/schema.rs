//! Tabular data model: typed, bounded, mutability- and dependency-annotated
//! feature descriptions, validated datasets, and the generic preprocessing
//! operations the pipeline needs (correlation pruning, splits, oversampling).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Feature value kind. Discrete kinds constrain values to integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "cardinality")]
pub enum FeatureKind {
    Continuous,
    Integer,
    Categorical(u32),
    Binary,
}

/// One feature's description: type, valid range, whether the attacker may
/// edit it directly, and whether its value is determined by other features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub min: f64,
    pub max: f64,
    pub mutable: bool,
    pub dependent: bool,
}

impl FeatureSpec {
    pub fn continuous(name: &str, min: f64, max: f64) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
            min,
            max,
            mutable: true,
            dependent: false,
        }
    }

    pub fn integer(name: &str, min: f64, max: f64) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Integer,
            min,
            max,
            mutable: true,
            dependent: false,
        }
    }

    pub fn categorical(name: &str, cardinality: u32) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical(cardinality),
            min: 0.0,
            max: f64::from(cardinality.saturating_sub(1)),
            mutable: true,
            dependent: false,
        }
    }

    pub fn binary(name: &str) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Binary,
            min: 0.0,
            max: 1.0,
            mutable: true,
            dependent: false,
        }
    }

    pub fn immutable(mut self) -> Self {
        self.mutable = false;
        self
    }

    pub fn dependent(mut self) -> Self {
        self.dependent = true;
        self
    }

    /// Whether the kind only admits integral values.
    pub fn is_discrete(&self) -> bool {
        !matches!(self.kind, FeatureKind::Continuous)
    }

    fn validate(&self) -> Result<(), SchemaError> {
        if !self.min.is_finite() || !self.max.is_finite() || self.min > self.max {
            return Err(SchemaError::InvalidRange {
                feature: self.name.clone(),
            });
        }
        match self.kind {
            FeatureKind::Binary => {
                if self.min != 0.0 || self.max != 1.0 {
                    return Err(SchemaError::InvalidRange {
                        feature: self.name.clone(),
                    });
                }
            }
            FeatureKind::Categorical(card) => {
                if card < 2 || self.min != 0.0 || self.max != f64::from(card - 1) {
                    return Err(SchemaError::InvalidRange {
                        feature: self.name.clone(),
                    });
                }
            }
            FeatureKind::Integer => {
                if self.min.fract() != 0.0 || self.max.fract() != 0.0 {
                    return Err(SchemaError::InvalidRange {
                        feature: self.name.clone(),
                    });
                }
            }
            FeatureKind::Continuous => {}
        }
        Ok(())
    }
}

/// Ordered feature list plus the label column description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    pub label_name: String,
    pub n_classes: usize,
}

impl Schema {
    pub fn new(
        features: Vec<FeatureSpec>,
        label_name: &str,
        n_classes: usize,
    ) -> Result<Self, SchemaError> {
        let schema = Schema {
            features,
            label_name: label_name.to_string(),
            n_classes,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.n_classes < 2 {
            return Err(SchemaError::TooFewClasses(self.n_classes));
        }
        let mut seen = BTreeMap::new();
        for spec in &self.features {
            spec.validate()?;
            if seen.insert(spec.name.clone(), ()).is_some() {
                return Err(SchemaError::DuplicateFeature(spec.name.clone()));
            }
        }
        if seen.contains_key(&self.label_name) {
            return Err(SchemaError::DuplicateFeature(self.label_name.clone()));
        }
        if !self
            .features
            .iter()
            .any(|spec| spec.mutable && !spec.dependent)
        {
            return Err(SchemaError::NoMutableFeature);
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|spec| spec.name == name)
    }

    pub fn dependent_indices(&self) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, spec)| spec.dependent)
            .map(|(idx, _)| idx)
            .collect()
    }

    pub fn mutable_indices(&self) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, spec)| spec.mutable && !spec.dependent)
            .map(|(idx, _)| idx)
            .collect()
    }

    /// Parse the textual schema document (see the runner docs for key names).
    pub fn from_toml_str(text: &str) -> Result<Self, SchemaError> {
        let doc: SchemaDoc = toml::from_str(text).map_err(|e| SchemaError::Parse(e.to_string()))?;
        let mut features = Vec::with_capacity(doc.feature.len());
        for f in doc.feature {
            let kind = match f.kind.as_str() {
                "continuous" => FeatureKind::Continuous,
                "integer" => FeatureKind::Integer,
                "binary" => FeatureKind::Binary,
                "categorical" => {
                    let card = f.cardinality.ok_or_else(|| {
                        SchemaError::Parse(format!(
                            "feature {}: categorical needs cardinality",
                            f.name
                        ))
                    })?;
                    FeatureKind::Categorical(card)
                }
                other => {
                    return Err(SchemaError::Parse(format!(
                        "feature {}: unknown kind {other}",
                        f.name
                    )))
                }
            };
            let (min, max) = match kind {
                FeatureKind::Binary => (0.0, 1.0),
                FeatureKind::Categorical(card) => (0.0, f64::from(card - 1)),
                _ => (
                    f.min.ok_or_else(|| {
                        SchemaError::Parse(format!("feature {}: missing min", f.name))
                    })?,
                    f.max.ok_or_else(|| {
                        SchemaError::Parse(format!("feature {}: missing max", f.name))
                    })?,
                ),
            };
            features.push(FeatureSpec {
                name: f.name,
                kind,
                min,
                max,
                mutable: f.mutable,
                dependent: f.dependent,
            });
        }
        Schema::new(features, &doc.label_name, doc.n_classes)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchemaError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let doc = SchemaDoc {
            label_name: self.label_name.clone(),
            n_classes: self.n_classes,
            feature: self
                .features
                .iter()
                .map(|spec| FeatureDoc {
                    name: spec.name.clone(),
                    kind: match spec.kind {
                        FeatureKind::Continuous => "continuous".into(),
                        FeatureKind::Integer => "integer".into(),
                        FeatureKind::Categorical(_) => "categorical".into(),
                        FeatureKind::Binary => "binary".into(),
                    },
                    cardinality: match spec.kind {
                        FeatureKind::Categorical(card) => Some(card),
                        _ => None,
                    },
                    min: Some(spec.min),
                    max: Some(spec.max),
                    mutable: spec.mutable,
                    dependent: spec.dependent,
                })
                .collect(),
        };
        toml::to_string(&doc).expect("schema document serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    label_name: String,
    n_classes: usize,
    feature: Vec<FeatureDoc>,
}

#[derive(Serialize, Deserialize)]
struct FeatureDoc {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cardinality: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<f64>,
    #[serde(default = "default_true")]
    mutable: bool,
    #[serde(default)]
    dependent: bool,
}

fn default_true() -> bool {
    true
}

/// Validated dataset: row-major values in schema column order plus one
/// integer class label per row. Values are never mutated after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Schema,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        schema: Schema,
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
    ) -> Result<Self, SchemaError> {
        if rows.len() != labels.len() {
            return Err(SchemaError::Shape {
                detail: format!("{} rows but {} labels", rows.len(), labels.len()),
            });
        }
        for (r, row) in rows.iter().enumerate() {
            validate_row(&schema, row).map_err(|e| e.at_row(r))?;
        }
        for (r, &label) in labels.iter().enumerate() {
            if label >= schema.n_classes {
                return Err(SchemaError::LabelOutOfRange { row: r, label });
            }
        }
        Ok(Dataset {
            schema,
            rows,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|row| row[idx]).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.schema.n_classes];
        for &label in &self.labels {
            counts[label] += 1;
        }
        counts
    }

    /// Rows whose label equals `class`.
    pub fn rows_of_class(&self, class: usize) -> Vec<&[f64]> {
        self.rows
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == class)
            .map(|(row, _)| row.as_slice())
            .collect()
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

fn validate_row(schema: &Schema, row: &[f64]) -> Result<(), SchemaError> {
    if row.len() != schema.n_features() {
        return Err(SchemaError::Shape {
            detail: format!(
                "row has {} values, schema has {} features",
                row.len(),
                schema.n_features()
            ),
        });
    }
    for (spec, &v) in schema.features.iter().zip(row) {
        if !v.is_finite() {
            return Err(SchemaError::NonFinite {
                feature: spec.name.clone(),
                row: 0,
            });
        }
        if spec.is_discrete() && v.fract() != 0.0 {
            return Err(SchemaError::NonIntegral {
                feature: spec.name.clone(),
                row: 0,
                value: v,
            });
        }
        if v < spec.min || v > spec.max {
            return Err(SchemaError::OutOfRange {
                feature: spec.name.clone(),
                row: 0,
                value: v,
            });
        }
    }
    Ok(())
}

/// Errors raised by schema construction, ingestion, and preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemaError {
    Io(String),
    Parse(String),
    MissingColumn(String),
    UnexpectedColumn(String),
    EmptyFile,
    Shape {
        detail: String,
    },
    InvalidRange {
        feature: String,
    },
    DuplicateFeature(String),
    TooFewClasses(usize),
    NoMutableFeature,
    OutOfRange {
        feature: String,
        row: usize,
        value: f64,
    },
    NonIntegral {
        feature: String,
        row: usize,
        value: f64,
    },
    NonFinite {
        feature: String,
        row: usize,
    },
    LabelOutOfRange {
        row: usize,
        label: usize,
    },
    ZeroVariance,
    LengthMismatch {
        left: usize,
        right: usize,
    },
    BadFraction(f64),
    PartitionTooSmall,
    ClassAbsent(usize),
    BadThreshold(f64),
}

impl SchemaError {
    fn at_row(self, row: usize) -> SchemaError {
        match self {
            SchemaError::OutOfRange { feature, value, .. } => SchemaError::OutOfRange {
                feature,
                row,
                value,
            },
            SchemaError::NonIntegral { feature, value, .. } => SchemaError::NonIntegral {
                feature,
                row,
                value,
            },
            SchemaError::NonFinite { feature, .. } => SchemaError::NonFinite { feature, row },
            other => other,
        }
    }
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaError::Io(detail) => write!(f, "io error: {detail}"),
            SchemaError::Parse(detail) => write!(f, "parse error: {detail}"),
            SchemaError::MissingColumn(name) => write!(f, "missing column: {name}"),
            SchemaError::UnexpectedColumn(name) => write!(f, "unexpected column: {name}"),
            SchemaError::EmptyFile => write!(f, "empty file"),
            SchemaError::Shape { detail } => write!(f, "shape mismatch: {detail}"),
            SchemaError::InvalidRange { feature } => {
                write!(f, "invalid range for feature {feature}")
            }
            SchemaError::DuplicateFeature(name) => write!(f, "duplicate feature name: {name}"),
            SchemaError::TooFewClasses(n) => write!(f, "need at least 2 classes, got {n}"),
            SchemaError::NoMutableFeature => {
                write!(
                    f,
                    "schema needs at least one mutable, non-dependent feature"
                )
            }
            SchemaError::OutOfRange {
                feature,
                row,
                value,
            } => {
                write!(
                    f,
                    "value {value} out of range for feature {feature} at row {row}"
                )
            }
            SchemaError::NonIntegral {
                feature,
                row,
                value,
            } => {
                write!(
                    f,
                    "non-integral value {value} in discrete column {feature} at row {row}"
                )
            }
            SchemaError::NonFinite { feature, row } => {
                write!(f, "non-finite value in column {feature} at row {row}")
            }
            SchemaError::LabelOutOfRange { row, label } => {
                write!(f, "label {label} out of range at row {row}")
            }
            SchemaError::ZeroVariance => write!(f, "zero variance input"),
            SchemaError::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            SchemaError::BadFraction(v) => write!(f, "train fraction {v} not in (0, 1)"),
            SchemaError::PartitionTooSmall => write!(f, "partition too small"),
            SchemaError::ClassAbsent(c) => write!(f, "class {c} absent from dataset"),
            SchemaError::BadThreshold(v) => write!(f, "correlation threshold {v} not in (0, 1]"),
        }
    }
}

impl std::error::Error for SchemaError {}

/// Load a CSV file (UTF-8, header row, '.' decimal separator) under `schema`.
/// The header must contain exactly the schema feature names plus the label.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset, SchemaError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SchemaError::Io(format!("{}: {e}", path.display())))?;
    load_csv_str(&text, schema)
}

/// In-memory variant of [`load_csv`].
pub fn load_csv_str(text: &str, schema: &Schema) -> Result<Dataset, SchemaError> {
    let mut lines = text.lines().filter(|line| !line.trim().is_empty());
    let header = lines.next().ok_or(SchemaError::EmptyFile)?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();

    let mut feature_cols = vec![usize::MAX; schema.n_features()];
    let mut label_col = usize::MAX;
    for (c, name) in columns.iter().enumerate() {
        if *name == schema.label_name {
            label_col = c;
        } else if let Some(idx) = schema.feature_index(name) {
            feature_cols[idx] = c;
        } else {
            return Err(SchemaError::UnexpectedColumn((*name).to_string()));
        }
    }
    if label_col == usize::MAX {
        return Err(SchemaError::MissingColumn(schema.label_name.clone()));
    }
    for (idx, &col) in feature_cols.iter().enumerate() {
        if col == usize::MAX {
            return Err(SchemaError::MissingColumn(
                schema.features[idx].name.clone(),
            ));
        }
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(SchemaError::Shape {
                detail: format!(
                    "row {r} has {} cells, header has {}",
                    cells.len(),
                    columns.len()
                ),
            });
        }
        let mut row = vec![0.0; schema.n_features()];
        for (idx, &col) in feature_cols.iter().enumerate() {
            row[idx] = cells[col].parse::<f64>().map_err(|_| {
                SchemaError::Parse(format!(
                    "row {r}, column {}: cannot parse {:?}",
                    schema.features[idx].name, cells[col]
                ))
            })?;
        }
        let label_raw = cells[label_col].parse::<f64>().map_err(|_| {
            SchemaError::Parse(format!(
                "row {r}: cannot parse label {:?}",
                cells[label_col]
            ))
        })?;
        if label_raw.fract() != 0.0 || label_raw < 0.0 {
            return Err(SchemaError::Parse(format!(
                "row {r}: non-integral label {label_raw}"
            )));
        }
        rows.push(row);
        labels.push(label_raw as usize);
    }
    if rows.is_empty() {
        return Err(SchemaError::EmptyFile);
    }
    Dataset::new(schema.clone(), rows, labels)
}

/// Write a dataset back out as CSV. Discrete columns print as integers,
/// continuous columns with the shortest representation that parses back to
/// the same bits.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<(), SchemaError> {
    std::fs::write(path, dataset_to_csv(ds))
        .map_err(|e| SchemaError::Io(format!("{}: {e}", path.display())))
}

pub fn dataset_to_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    let names: Vec<&str> = ds
        .schema
        .features
        .iter()
        .map(|spec| spec.name.as_str())
        .collect();
    out.push_str(&names.join(","));
    out.push(',');
    out.push_str(&ds.schema.label_name);
    out.push('\n');
    for (row, &label) in ds.rows.iter().zip(&ds.labels) {
        for (spec, &v) in ds.schema.features.iter().zip(row) {
            if spec.is_discrete() {
                out.push_str(&format!("{}", v as i64));
            } else {
                out.push_str(&format!("{v}"));
            }
            out.push(',');
        }
        out.push_str(&format!("{label}\n"));
    }
    out
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, SchemaError> {
    if x.len() != y.len() {
        return Err(SchemaError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(SchemaError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(SchemaError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Result of correlation-based feature pruning.
#[derive(Debug, Clone)]
pub struct CorrelationDrop {
    pub dataset: Dataset,
    pub dropped: Vec<String>,
    pub seed: u64,
}

/// Within every connected component of the |pearson| > threshold graph,
/// retain exactly one feature chosen uniformly at random.
pub fn drop_correlated(
    ds: &Dataset,
    threshold: f64,
    seed: u64,
) -> Result<CorrelationDrop, SchemaError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(SchemaError::BadThreshold(threshold));
    }
    let d = ds.n_features();
    let columns: Vec<Vec<f64>> = (0..d).map(|i| ds.column(i)).collect();

    // Union-find over features; zero-variance columns carry no edges.
    let mut parent: Vec<usize> = (0..d).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let r = match pearson(&columns[i], &columns[j]) {
                Ok(r) => r,
                Err(SchemaError::ZeroVariance) => continue,
                Err(e) => return Err(e),
            };
            if r.abs() > threshold {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }

    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..d {
        let root = find(&mut parent, i);
        components.entry(root).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drop = vec![false; d];
    let mut dropped = Vec::new();
    for members in components.values() {
        if members.len() < 2 {
            continue;
        }
        let keep = *members
            .choose(&mut rng)
            .expect("component has at least two members");
        for &m in members {
            if m != keep {
                drop[m] = true;
                dropped.push(ds.schema.features[m].name.clone());
            }
        }
    }

    let kept: Vec<usize> = (0..d).filter(|&i| !drop[i]).collect();
    let features: Vec<FeatureSpec> = kept
        .iter()
        .map(|&i| ds.schema.features[i].clone())
        .collect();
    let schema = Schema::new(features, &ds.schema.label_name, ds.schema.n_classes)?;
    let rows: Vec<Vec<f64>> = ds
        .rows
        .iter()
        .map(|row| kept.iter().map(|&i| row[i]).collect())
        .collect();
    let dataset = Dataset::new(schema, rows, ds.labels.clone())?;
    Ok(CorrelationDrop {
        dataset,
        dropped,
        seed,
    })
}

/// Seeded shuffle-then-cut split into disjoint, exhaustive train/test parts.
pub fn train_test_split(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), SchemaError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SchemaError::BadFraction(train_fraction));
    }
    let n = ds.n_rows();
    let train_n = (train_fraction * n as f64).round() as usize;
    if train_n == 0 || train_n >= n {
        return Err(SchemaError::PartitionTooSmall);
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let (train_idx, test_idx) = indices.split_at(train_n);
    Ok((ds.subset(train_idx), ds.subset(test_idx)))
}

/// Duplicate rows of `minority_class`, cycling in order, until its count
/// equals the largest class count. Never synthesizes values.
pub fn oversample_minority(ds: &Dataset, minority_class: usize) -> Result<Dataset, SchemaError> {
    let counts = ds.class_counts();
    if minority_class >= counts.len() || counts[minority_class] == 0 {
        return Err(SchemaError::ClassAbsent(minority_class));
    }
    let majority = *counts.iter().max().expect("non-empty counts");
    let minority_rows: Vec<usize> = (0..ds.n_rows())
        .filter(|&i| ds.labels[i] == minority_class)
        .collect();
    let mut rows = ds.rows.clone();
    let mut labels = ds.labels.clone();
    let mut need = majority - counts[minority_class];
    let mut cursor = 0usize;
    while need > 0 {
        let src = minority_rows[cursor % minority_rows.len()];
        rows.push(ds.rows[src].clone());
        labels.push(minority_class);
        cursor += 1;
        need -= 1;
    }
    Dataset::new(ds.schema.clone(), rows, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_schema() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::continuous("a", -10.0, 10.0),
                FeatureSpec::binary("b"),
                FeatureSpec::integer("c", 0.0, 5.0),
            ],
            "label",
            2,
        )
        .unwrap()
    }

    #[test]
    fn load_csv_in_range() {
        let csv = "a,b,c,label\n1.5,0,2,0\n-3.25,1,5,1\n0.0,0,0,0\n";
        let ds = load_csv_str(csv, &toy_schema()).unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.rows[1], vec![-3.25, 1.0, 5.0]);
        assert_eq!(ds.labels, vec![0, 1, 0]);
    }

    #[test]
    fn load_csv_rejects_non_integral_binary() {
        let csv = "a,b,c,label\n1.0,1.5,2,0\n";
        let err = load_csv_str(csv, &toy_schema()).unwrap_err();
        assert!(matches!(err, SchemaError::NonIntegral { .. }), "{err}");
    }

    #[test]
    fn load_csv_missing_label_column() {
        let csv = "a,b,c\n1.0,1,2\n";
        let err = load_csv_str(csv, &toy_schema()).unwrap_err();
        assert_eq!(err, SchemaError::MissingColumn("label".into()));
    }

    #[test]
    fn load_csv_out_of_range() {
        let csv = "a,b,c,label\n99.0,0,2,0\n";
        let err = load_csv_str(csv, &toy_schema()).unwrap_err();
        assert!(matches!(err, SchemaError::OutOfRange { .. }));
    }

    #[test]
    fn csv_round_trip_exact() {
        let csv = "a,b,c,label\n1.0000000000000002,0,2,0\n-9.999999999999998,1,5,1\n";
        let ds = load_csv_str(csv, &toy_schema()).unwrap();
        let back = load_csv_str(&dataset_to_csv(&ds), &toy_schema()).unwrap();
        assert_eq!(ds.rows, back.rows);
        assert_eq!(ds.labels, back.labels);
    }

    #[test]
    fn pearson_perfect_lines() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_zero_variance() {
        assert_eq!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            SchemaError::ZeroVariance
        );
    }

    #[test]
    fn pearson_length_mismatch() {
        assert!(matches!(
            pearson(&[1.0], &[1.0, 2.0]).unwrap_err(),
            SchemaError::LengthMismatch { .. }
        ));
    }

    fn wide_dataset(columns: Vec<Vec<f64>>) -> Dataset {
        let n = columns[0].len();
        let features = (0..columns.len())
            .map(|i| FeatureSpec::continuous(&format!("f{i}"), -1e6, 1e6))
            .collect();
        let schema = Schema::new(features, "label", 2).unwrap();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|r| columns.iter().map(|col| col[r]).collect())
            .collect();
        Dataset::new(schema, rows, vec![0; n]).unwrap()
    }

    #[test]
    fn drop_correlated_identical_columns() {
        let base: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ds = wide_dataset(vec![base.clone(), base]);
        let out = drop_correlated(&ds, 0.9, 3).unwrap();
        assert_eq!(out.dropped.len(), 1);
        assert_eq!(out.dataset.n_features(), 1);
    }

    #[test]
    fn drop_correlated_keeps_independent_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        use rand::Rng;
        let a: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = pearson(&a, &b).unwrap();
        assert!(r.abs() < 0.9, "sanity: independent columns, r = {r}");
        let ds = wide_dataset(vec![a, b]);
        let out = drop_correlated(&ds, 0.9, 3).unwrap();
        assert!(out.dropped.is_empty());
    }

    #[test]
    fn drop_correlated_component_of_three() {
        // x, 2x + noise, 3x + noise form one component; exactly one survives.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        let x: Vec<f64> = (0..300).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| 2.0 * v + rng.gen_range(-0.01..0.01))
            .collect();
        let z: Vec<f64> = x
            .iter()
            .map(|&v| 3.0 * v + rng.gen_range(-0.01..0.01))
            .collect();

        // Brute-force check of the pairwise structure the component logic uses.
        for (p, q) in [(&x, &y), (&x, &z), (&y, &z)] {
            assert!(pearson(p, q).unwrap().abs() > 0.9);
        }

        let ds = wide_dataset(vec![x, y, z]);
        let out = drop_correlated(&ds, 0.9, 7).unwrap();
        assert_eq!(out.dropped.len(), 2);
        assert_eq!(out.dataset.n_features(), 1);

        // Retained set has no pair above threshold (there is only one column).
        assert_eq!(out.seed, 7);
    }

    #[test]
    fn split_basic_and_deterministic() {
        let ds = wide_dataset(vec![(0..100).map(|i| i as f64).collect()]);
        let (train, test) = train_test_split(&ds, 0.75, 9).unwrap();
        assert_eq!(train.n_rows(), 75);
        assert_eq!(test.n_rows(), 25);
        let (train2, test2) = train_test_split(&ds, 0.75, 9).unwrap();
        assert_eq!(train.rows, train2.rows);
        assert_eq!(test.rows, test2.rows);

        // Disjoint and exhaustive.
        let mut all: Vec<f64> = train.rows.iter().chain(&test.rows).map(|r| r[0]).collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all, (0..100).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn split_single_row_rejected() {
        let ds = wide_dataset(vec![vec![1.0]]);
        assert_eq!(
            train_test_split(&ds, 0.75, 0).unwrap_err(),
            SchemaError::PartitionTooSmall
        );
    }

    #[test]
    fn oversample_balances_by_cycling() {
        let schema = toy_schema();
        let rows = vec![
            vec![1.0, 0.0, 1.0],
            vec![2.0, 0.0, 2.0],
            vec![3.0, 0.0, 3.0],
            vec![4.0, 0.0, 4.0],
            vec![5.0, 1.0, 5.0],
        ];
        let ds = Dataset::new(schema, rows, vec![0, 0, 0, 0, 1]).unwrap();
        let out = oversample_minority(&ds, 1).unwrap();
        assert_eq!(out.class_counts(), vec![4, 4]);
        // The three duplicates are exact copies of the single minority row.
        for row in out.rows.iter().skip(5) {
            assert_eq!(row, &vec![5.0, 1.0, 5.0]);
        }
    }

    #[test]
    fn oversample_balanced_is_fixed_point() {
        let schema = toy_schema();
        let rows = vec![vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 2.0]];
        let ds = Dataset::new(schema, rows, vec![0, 1]).unwrap();
        let out = oversample_minority(&ds, 1).unwrap();
        assert_eq!(out, ds);
    }

    #[test]
    fn oversample_absent_class_errors() {
        let schema = toy_schema();
        let ds = Dataset::new(schema, vec![vec![1.0, 0.0, 1.0]], vec![0]).unwrap();
        assert_eq!(
            oversample_minority(&ds, 1).unwrap_err(),
            SchemaError::ClassAbsent(1)
        );
    }

    #[test]
    fn oversample_never_synthesizes() {
        let schema = toy_schema();
        let rows = vec![
            vec![1.0, 0.0, 1.0],
            vec![2.0, 0.0, 2.0],
            vec![3.0, 1.0, 3.0],
            vec![4.0, 1.0, 4.0],
            vec![5.0, 1.0, 5.0],
        ];
        let ds = Dataset::new(schema, rows.clone(), vec![0, 0, 1, 1, 1]).unwrap();
        let out = oversample_minority(&ds, 0).unwrap();
        for row in &out.rows {
            assert!(rows.contains(row));
        }
    }

    #[test]
    fn schema_toml_round_trip() {
        let schema = Schema::new(
            vec![
                FeatureSpec::continuous("age", 0.0, 120.0).immutable(),
                FeatureSpec::categorical("region", 4),
                FeatureSpec::continuous("bmi", 5.0, 80.0).dependent(),
            ],
            "outcome",
            2,
        )
        .unwrap();
        let text = schema.to_toml_string();
        let back = Schema::from_toml_str(&text).unwrap();
        assert_eq!(schema, back);
    }
}
