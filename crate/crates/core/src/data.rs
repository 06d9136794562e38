//! Schema-driven CSV ingestion and one-hot encoding into the extended matrix.
//!
//! A [`Schema`] names every column the analysis uses, its kind, and the label.
//! [`load_dataset`] reads a CSV against it, drops rows with missing cells and
//! maps the label onto `{-1, +1}`. [`encode`] expands categorical columns into
//! one indicator per declared category, binary columns into a single 0/1
//! column and passes numeric columns through unchanged.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Cell values treated as missing when the schema does not override them.
pub const DEFAULT_NA_VALUES: &[&str] = &["", "?", "NA", "N/A", "NaN", "nan", "null", "NULL"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindTag {
    Numeric,
    Binary,
    Categorical,
}

/// One column as declared in the schema file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: KindTag,
    /// Ordered category list. Required order for determinism; inferred (sorted) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_sensitive: Option<bool>,
    /// Raw value -> category rewrites applied before category lookup.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub recode: BTreeMap<String, String>,
    /// Interior bin edges for a numeric source recoded into categories;
    /// bin `i` is `[edges[i-1], edges[i])`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<Vec<f64>>,
}

impl ColumnSpec {
    pub fn numeric(name: &str) -> Self {
        Self::new(name, KindTag::Numeric, None)
    }

    pub fn binary(name: &str, categories: Option<[&str; 2]>) -> Self {
        Self::new(
            name,
            KindTag::Binary,
            categories.map(|c| c.iter().map(|s| s.to_string()).collect()),
        )
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        Self::new(
            name,
            KindTag::Categorical,
            Some(categories.iter().map(|s| s.to_string()).collect()),
        )
    }

    fn new(name: &str, kind: KindTag, categories: Option<Vec<String>>) -> Self {
        Self {
            name: name.to_string(),
            kind,
            categories,
            candidate_sensitive: None,
            recode: BTreeMap::new(),
            bins: None,
        }
    }

    pub fn candidate(mut self, flag: bool) -> Self {
        self.candidate_sensitive = Some(flag);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub name: String,
    /// Raw value mapped to `+1`.
    pub positive: String,
    /// Raw value mapped to `-1`; when absent, the single other observed value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    pub label: LabelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub na_values: Option<Vec<String>>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>, label: &str, positive: &str) -> Self {
        Self {
            columns,
            label: LabelSpec {
                name: label.to_string(),
                positive: positive.to_string(),
                negative: None,
            },
            na_values: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let schema: Schema =
            serde_json::from_str(text).map_err(|e| DataError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(DataError::Schema(format!("duplicate column `{}`", c.name)));
            }
            if c.name == self.label.name {
                return Err(DataError::Schema(format!(
                    "label column `{}` is also listed as a feature",
                    c.name
                )));
            }
            if let Some(cats) = &c.categories {
                let unique: HashSet<_> = cats.iter().collect();
                if unique.len() != cats.len() {
                    return Err(DataError::Schema(format!(
                        "column `{}` declares a category twice",
                        c.name
                    )));
                }
            }
            match c.kind {
                KindTag::Numeric => {
                    if c.categories.is_some() || c.bins.is_some() || !c.recode.is_empty() {
                        return Err(DataError::Schema(format!(
                            "numeric column `{}` cannot declare categories, bins or recode",
                            c.name
                        )));
                    }
                }
                KindTag::Binary => {
                    if let Some(cats) = &c.categories {
                        if cats.len() != 2 {
                            return Err(DataError::Schema(format!(
                                "binary column `{}` must declare exactly 2 categories",
                                c.name
                            )));
                        }
                    }
                }
                KindTag::Categorical => {
                    if let Some(cats) = &c.categories {
                        if cats.len() < 2 {
                            return Err(DataError::Schema(format!(
                                "categorical column `{}` needs at least 2 categories",
                                c.name
                            )));
                        }
                    }
                }
            }
            if let Some(edges) = &c.bins {
                let cats = c.categories.as_ref().ok_or_else(|| {
                    DataError::Schema(format!("column `{}` uses bins without categories", c.name))
                })?;
                if cats.len() != edges.len() + 1 {
                    return Err(DataError::Schema(format!(
                        "column `{}`: {} bin edges need {} categories, found {}",
                        c.name,
                        edges.len(),
                        edges.len() + 1,
                        cats.len()
                    )));
                }
                if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
                    return Err(DataError::Schema(format!(
                        "column `{}`: bin edges must be finite and strictly increasing",
                        c.name
                    )));
                }
            }
            if let Some(cats) = &c.categories {
                for target in c.recode.values() {
                    if !cats.contains(target) {
                        return Err(DataError::Schema(format!(
                            "column `{}`: recode target `{target}` is not a declared category",
                            c.name
                        )));
                    }
                }
            }
        }
        if let Some(neg) = &self.label.negative {
            if *neg == self.label.positive {
                return Err(DataError::Schema(
                    "label positive and negative values are identical".into(),
                ));
            }
        }
        Ok(())
    }

    fn na_set(&self) -> HashSet<String> {
        match &self.na_values {
            Some(v) => v.iter().cloned().collect(),
            None => DEFAULT_NA_VALUES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Resolved column kind after ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    /// The indicator column is 1 for `categories[1]`.
    Binary { categories: [String; 2] },
    Categorical { categories: Vec<String> },
}

impl ColumnKind {
    pub fn tag(&self) -> KindTag {
        match self {
            ColumnKind::Numeric => KindTag::Numeric,
            ColumnKind::Binary { .. } => KindTag::Binary,
            ColumnKind::Categorical { .. } => KindTag::Categorical,
        }
    }

    pub fn categories(&self) -> &[String] {
        match self {
            ColumnKind::Numeric => &[],
            ColumnKind::Binary { categories } => categories,
            ColumnKind::Categorical { categories } => categories,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnValues {
    /// Parsed values together with their source text.
    Numeric { values: Vec<f64>, text: Vec<String> },
    /// Category index per row.
    Codes(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub candidate_sensitive: Option<bool>,
    pub values: ColumnValues,
}

impl Column {
    fn select(&self, rows: &[usize]) -> Column {
        let values = match &self.values {
            ColumnValues::Numeric { values, text } => ColumnValues::Numeric {
                values: rows.iter().map(|&r| values[r]).collect(),
                text: rows.iter().map(|&r| text[r].clone()).collect(),
            },
            ColumnValues::Codes(c) => ColumnValues::Codes(rows.iter().map(|&r| c[r]).collect()),
        };
        Column {
            name: self.name.clone(),
            kind: self.kind.clone(),
            candidate_sensitive: self.candidate_sensitive,
            values,
        }
    }
}

/// `n` validated rows of `m` feature columns with a `{-1, +1}` label.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    labels: Vec<i8>,
    label_name: String,
    positive: String,
    negative: String,
    dropped_rows: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&Column, DataError> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    /// Raw label text for `+1` and `-1`.
    pub fn label_values(&self) -> (&str, &str) {
        (&self.positive, &self.negative)
    }

    /// Rows removed during ingestion because of missing cells.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            label_name: self.label_name.clone(),
            positive: self.positive.clone(),
            negative: self.negative.clone(),
            dropped_rows: self.dropped_rows,
        }
    }
}

pub fn load_dataset_path(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset, DataError> {
    load_dataset(File::open(path.as_ref())?, schema)
}

/// Reads a headed CSV and validates it against `schema`. Columns absent from
/// the schema are ignored.
pub fn load_dataset(source: impl Read, schema: &Schema) -> Result<Dataset, DataError> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers()?.clone();
    let index_of = |name: &str| -> Result<usize, DataError> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn {
                column: name.to_string(),
            })
    };
    let feature_idx: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| index_of(&c.name))
        .collect::<Result<_, _>>()?;
    let label_idx = index_of(&schema.label.name)?;
    let na = schema.na_set();

    // first pass: keep raw text of complete rows
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); feature_idx.len()];
    let mut raw_labels = Vec::new();
    let mut row_numbers = Vec::new();
    let mut dropped = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |k: usize| record.get(k).unwrap_or("");
        let missing = feature_idx
            .iter()
            .chain(std::iter::once(&label_idx))
            .any(|&k| na.contains(cell(k)));
        if missing {
            dropped += 1;
            continue;
        }
        for (dst, &k) in raw.iter_mut().zip(&feature_idx) {
            dst.push(cell(k).to_string());
        }
        raw_labels.push(cell(label_idx).to_string());
        row_numbers.push(i + 1);
    }
    if raw_labels.len() < 2 {
        return Err(DataError::TooFewRows(raw_labels.len()));
    }

    let (labels, negative) = map_labels(&schema.label, &raw_labels)?;

    let columns = schema
        .columns
        .iter()
        .zip(raw)
        .map(|(spec, cells)| build_column(spec, cells, &row_numbers))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Dataset {
        columns,
        labels,
        label_name: schema.label.name.clone(),
        positive: schema.label.positive.clone(),
        negative,
        dropped_rows: dropped,
    })
}

fn map_labels(spec: &LabelSpec, raw: &[String]) -> Result<(Vec<i8>, String), DataError> {
    let mut negative = spec.negative.clone();
    let mut labels = Vec::with_capacity(raw.len());
    for v in raw.iter() {
        if same_value(v, &spec.positive) {
            labels.push(1);
            continue;
        }
        match &negative {
            Some(neg) if same_value(neg, v) => labels.push(-1),
            Some(_) => {
                return Err(DataError::UnmappableLabel {
                    column: spec.name.clone(),
                    value: v.clone(),
                })
            }
            None => {
                negative = Some(v.clone());
                labels.push(-1);
            }
        }
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(DataError::DegenerateLabels(labels[0]));
    }
    Ok((labels, negative.expect("at least one negative label")))
}

/// Text equality, or numeric equality when both sides parse (`1` matches `1.0`).
fn same_value(a: &str, b: &str) -> bool {
    a == b
        || matches!((a.parse::<f64>(), b.parse::<f64>()), (Ok(x), Ok(y)) if x == y)
}

fn build_column(
    spec: &ColumnSpec,
    cells: Vec<String>,
    rows: &[usize],
) -> Result<Column, DataError> {
    let values_and_kind = match spec.kind {
        KindTag::Numeric => {
            let values = cells
                .iter()
                .zip(rows)
                .map(|(c, &row)| parse_number(&spec.name, row, c))
                .collect::<Result<Vec<_>, _>>()?;
            (
                ColumnValues::Numeric {
                    values,
                    text: cells,
                },
                ColumnKind::Numeric,
            )
        }
        KindTag::Binary | KindTag::Categorical => {
            let mapped: Vec<String> = cells
                .iter()
                .zip(rows)
                .map(|(c, &row)| categorize(spec, row, c))
                .collect::<Result<_, _>>()?;
            let categories = match &spec.categories {
                Some(c) => c.clone(),
                None => mapped
                    .iter()
                    .cloned()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            };
            let codes = mapped
                .iter()
                .zip(rows)
                .map(|(v, &row)| {
                    categories
                        .iter()
                        .position(|c| c == v)
                        .map(|p| p as u32)
                        .ok_or_else(|| DataError::UndeclaredCategory {
                            column: spec.name.clone(),
                            row,
                            value: v.clone(),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let kind = if spec.kind == KindTag::Binary {
                let observed: BTreeSet<u32> = codes.iter().copied().collect();
                if categories.len() != 2 || observed.len() != 2 {
                    let found: BTreeSet<&String> = mapped.iter().collect();
                    return Err(DataError::NotBinary {
                        column: spec.name.clone(),
                        found: found.into_iter().cloned().collect(),
                    });
                }
                ColumnKind::Binary {
                    categories: [categories[0].clone(), categories[1].clone()],
                }
            } else {
                if categories.len() < 2 {
                    return Err(DataError::Schema(format!(
                        "categorical column `{}` has fewer than 2 categories",
                        spec.name
                    )));
                }
                ColumnKind::Categorical { categories }
            };
            (ColumnValues::Codes(codes), kind)
        }
    };
    let (values, kind) = values_and_kind;
    Ok(Column {
        name: spec.name.clone(),
        kind,
        candidate_sensitive: spec.candidate_sensitive,
        values,
    })
}

fn parse_number(column: &str, row: usize, text: &str) -> Result<f64, DataError> {
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DataError::NotNumeric {
            column: column.to_string(),
            row,
            value: text.to_string(),
        })
}

fn categorize(spec: &ColumnSpec, row: usize, text: &str) -> Result<String, DataError> {
    if let Some(edges) = &spec.bins {
        let v = parse_number(&spec.name, row, text)?;
        let bin = edges.iter().take_while(|&&e| v >= e).count();
        let cats = spec.categories.as_ref().expect("validated: bins imply categories");
        return Ok(cats[bin].clone());
    }
    Ok(spec
        .recode
        .get(text)
        .cloned()
        .unwrap_or_else(|| text.to_string()))
}

/// Kind of an original feature after encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Binary,
    Categorical,
}

/// An original feature `G_j` and the extended columns it owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    pub categories: Vec<String>,
    /// Indices into the extended matrix.
    pub columns: Vec<usize>,
    pub candidate: bool,
}

/// One column of the extended matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subfeature {
    pub name: String,
    pub parent: usize,
    /// Category index for indicator columns; `None` for numeric pass-through.
    pub category: Option<usize>,
}

impl Subfeature {
    pub fn is_indicator(&self) -> bool {
        self.category.is_some()
    }
}

/// The extended `n x m~` matrix, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    n: usize,
    columns: Vec<Vec<f64>>,
    /// Source text for numeric pass-through columns, dropped once values are transformed.
    text: Vec<Option<Vec<String>>>,
    subfeatures: Vec<Subfeature>,
    features: Vec<Feature>,
    labels: Vec<f64>,
    label_name: String,
    label_text: (String, String),
}

/// Default candidacy: group-splitting features are candidates, numeric ones are not.
pub fn default_candidacy(kind: &FeatureKind) -> bool {
    !matches!(kind, FeatureKind::Numeric)
}

pub fn encode(dataset: &Dataset) -> EncodedDataset {
    let n = dataset.n();
    let mut columns = Vec::new();
    let mut text = Vec::new();
    let mut subfeatures = Vec::new();
    let mut features = Vec::new();
    for (j, col) in dataset.columns.iter().enumerate() {
        let start = columns.len();
        let kind = match (&col.kind, &col.values) {
            (ColumnKind::Numeric, ColumnValues::Numeric { values, text: t }) => {
                columns.push(values.clone());
                text.push(Some(t.clone()));
                subfeatures.push(Subfeature {
                    name: col.name.clone(),
                    parent: j,
                    category: None,
                });
                FeatureKind::Numeric
            }
            (ColumnKind::Binary { categories }, ColumnValues::Codes(codes)) => {
                columns.push(codes.iter().map(|&c| c as f64).collect());
                text.push(None);
                subfeatures.push(Subfeature {
                    name: format!("{}_{}", col.name, categories[1]),
                    parent: j,
                    category: Some(1),
                });
                FeatureKind::Binary
            }
            (ColumnKind::Categorical { categories }, ColumnValues::Codes(codes)) => {
                for (k, cat) in categories.iter().enumerate() {
                    columns.push(
                        codes
                            .iter()
                            .map(|&c| if c as usize == k { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    text.push(None);
                    subfeatures.push(Subfeature {
                        name: format!("{}_{}", col.name, cat),
                        parent: j,
                        category: Some(k),
                    });
                }
                FeatureKind::Categorical
            }
            _ => unreachable!("column kind and values are built together"),
        };
        let candidate = col
            .candidate_sensitive
            .unwrap_or_else(|| default_candidacy(&kind));
        features.push(Feature {
            name: col.name.clone(),
            kind,
            categories: col.kind.categories().to_vec(),
            columns: (start..columns.len()).collect(),
            candidate,
        });
    }
    EncodedDataset {
        n,
        columns,
        text,
        subfeatures,
        features,
        labels: dataset.labels.iter().map(|&l| f64::from(l)).collect(),
        label_name: dataset.label_name.clone(),
        label_text: (dataset.positive.clone(), dataset.negative.clone()),
    }
}

impl EncodedDataset {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of extended columns `m~`.
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn subfeatures(&self) -> &[Subfeature] {
        &self.subfeatures
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn feature_index(&self, name: &str) -> Result<usize, DataError> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    pub fn subfeature_index(&self, name: &str) -> Result<usize, DataError> {
        self.subfeatures
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    /// Value at `(row, column)` of the extended matrix.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    /// Row-major copy of the extended matrix.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.columns.iter().map(|c| c[i]).collect())
            .collect()
    }

    /// Category of feature `j` in `row`, recovered from its indicator block.
    pub fn decode_category(&self, feature: usize, row: usize) -> Option<&str> {
        let f = &self.features[feature];
        match f.kind {
            FeatureKind::Numeric => None,
            FeatureKind::Binary => {
                let v = self.columns[f.columns[0]][row];
                Some(&f.categories[if v == 1.0 { 1 } else { 0 }])
            }
            FeatureKind::Categorical => f
                .columns
                .iter()
                .position(|&c| self.columns[c][row] == 1.0)
                .map(|k| f.categories[k].as_str()),
        }
    }

    /// Every categorical indicator block has exactly one 1 per row.
    pub fn check_one_hot(&self) -> Result<(), DataError> {
        for f in self.features.iter().filter(|f| f.kind == FeatureKind::Categorical) {
            for i in 0..self.n {
                let s: f64 = f.columns.iter().map(|&c| self.columns[c][i]).sum();
                if s != 1.0 {
                    return Err(DataError::Invalid(format!(
                        "feature `{}`: row {i} indicator block sums to {s}",
                        f.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Z-scores numeric pass-through columns in place (constant columns become 0).
    pub fn standardize_numeric(&mut self) {
        for (k, sub) in self.subfeatures.iter().enumerate() {
            if sub.is_indicator() {
                continue;
            }
            let col = &mut self.columns[k];
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            for v in col.iter_mut() {
                *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
            }
            self.text[k] = None;
        }
    }

    /// Keeps only the given extended columns (used to drop features from training).
    pub fn without_features(&self, drop: &[usize]) -> EncodedDataset {
        let keep_feature: Vec<bool> = (0..self.features.len())
            .map(|j| !drop.contains(&j))
            .collect();
        let mut out = EncodedDataset {
            n: self.n,
            columns: Vec::new(),
            text: Vec::new(),
            subfeatures: Vec::new(),
            features: Vec::new(),
            labels: self.labels.clone(),
            label_name: self.label_name.clone(),
            label_text: self.label_text.clone(),
        };
        for (j, f) in self.features.iter().enumerate() {
            if !keep_feature[j] {
                continue;
            }
            let new_j = out.features.len();
            let start = out.columns.len();
            for &c in &f.columns {
                out.columns.push(self.columns[c].clone());
                out.text.push(self.text[c].clone());
                let mut s = self.subfeatures[c].clone();
                s.parent = new_j;
                out.subfeatures.push(s);
            }
            let mut nf = f.clone();
            nf.columns = (start..out.columns.len()).collect();
            out.features.push(nf);
        }
        out
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> EncodedDataset {
        EncodedDataset {
            n: rows.len(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            text: self
                .text
                .iter()
                .map(|t| t.as_ref().map(|t| rows.iter().map(|&r| t[r].clone()).collect()))
                .collect(),
            subfeatures: self.subfeatures.clone(),
            features: self.features.clone(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            label_name: self.label_name.clone(),
            label_text: self.label_text.clone(),
        }
    }

    /// Writes the extended matrix with `parent_category` headers and the raw label column last.
    pub fn write_csv(&self, sink: impl Write) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header: Vec<&str> = self.subfeatures.iter().map(|s| s.name.as_str()).collect();
        header.push(&self.label_name);
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n {
            record.clear();
            for (k, col) in self.columns.iter().enumerate() {
                record.push(match &self.text[k] {
                    Some(t) => t[i].clone(),
                    None if self.subfeatures[k].is_indicator() => {
                        if col[i] == 1.0 { "1" } else { "0" }.to_string()
                    }
                    None => format!("{}", col[i]),
                });
            }
            record.push(if self.labels[i] > 0.0 {
                self.label_text.0.clone()
            } else {
                self.label_text.1.clone()
            });
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TOY_CSV: &str = "gender,ncrimes,age,recidivist\n\
        male,2,30-60,yes\n\
        female,0,<30,no\n\
        female,1,>60,yes\n";

    fn toy_schema() -> Schema {
        Schema::new(
            vec![
                ColumnSpec::categorical("gender", &["male", "female"]),
                ColumnSpec::numeric("ncrimes"),
                ColumnSpec::categorical("age", &["<30", "30-60", ">60"]),
            ],
            "recidivist",
            "yes",
        )
    }

    #[test]
    fn toy_dataset_encodes_to_extended_matrix() {
        let ds = load_dataset(TOY_CSV.as_bytes(), &toy_schema()).unwrap();
        assert_eq!((ds.n(), ds.m()), (3, 3));
        assert_eq!(ds.labels(), &[1, -1, 1]);
        let enc = encode(&ds);
        let expected = [
            [1.0, 0.0, 2.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0, 0.0, 0.0],
            [0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
        ];
        let rows = enc.to_rows();
        for (r, e) in rows.iter().zip(expected.iter()) {
            assert_eq!(r.as_slice(), e.as_slice());
        }
        let names: Vec<_> = enc.subfeatures().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            ["gender_male", "gender_female", "ncrimes", "age_<30", "age_30-60", "age_>60"]
        );
        assert_eq!(enc.features()[2].columns, vec![3, 4, 5]);
        enc.check_one_hot().unwrap();
    }

    #[test]
    fn missing_cells_drop_rows() {
        let csv = "a,b,y\n1,x,1\n,x,0\n3,z,0\n4,?,1\n";
        let schema = Schema::new(
            vec![ColumnSpec::numeric("a"), ColumnSpec::binary("b", None)],
            "y",
            "1",
        );
        let ds = load_dataset(csv.as_bytes(), &schema).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.dropped_rows(), 2);
    }

    #[test]
    fn numeric_labels_match_by_value() {
        let csv = "a,y\n1,1.0\n2,0.0\n3,1\n";
        let schema = Schema::new(vec![ColumnSpec::numeric("a")], "y", "1");
        let ds = load_dataset(csv.as_bytes(), &schema).unwrap();
        assert_eq!(ds.labels(), &[1, -1, 1]);
        assert_eq!(ds.label_values(), ("1", "0.0"));
    }

    #[test]
    fn single_class_labels_are_rejected() {
        let csv = "a,y\n1,1\n2,1\n3,1\n";
        let schema = Schema::new(vec![ColumnSpec::numeric("a")], "y", "1");
        assert!(matches!(
            load_dataset(csv.as_bytes(), &schema),
            Err(DataError::DegenerateLabels(1))
        ));
    }

    #[test]
    fn ingestion_errors() {
        let schema = Schema::new(
            vec![ColumnSpec::categorical("c", &["a", "b"])],
            "y",
            "1",
        );
        assert!(matches!(
            load_dataset("c,y\na,1\nq,0\n".as_bytes(), &schema),
            Err(DataError::UndeclaredCategory { row: 2, .. })
        ));
        assert!(matches!(
            load_dataset("d,y\na,1\nb,0\n".as_bytes(), &schema),
            Err(DataError::MissingColumn { .. })
        ));
        assert!(matches!(
            load_dataset("c,y\na,1\nb,0\nb,2\n".as_bytes(), &schema),
            Err(DataError::UnmappableLabel { .. })
        ));
        assert!(matches!(
            load_dataset("c,y\na,1\n,0\n".as_bytes(), &schema),
            Err(DataError::TooFewRows(1))
        ));
        let num = Schema::new(vec![ColumnSpec::numeric("c")], "y", "1");
        assert!(matches!(
            load_dataset("c,y\n1,1\nx,0\n".as_bytes(), &num),
            Err(DataError::NotNumeric { .. })
        ));
        let bin = Schema::new(vec![ColumnSpec::binary("c", None)], "y", "1");
        assert!(matches!(
            load_dataset("c,y\na,1\nb,0\nc,0\n".as_bytes(), &bin),
            Err(DataError::NotBinary { .. })
        ));
    }

    #[test]
    fn schema_validation() {
        let dup = Schema::new(
            vec![ColumnSpec::numeric("a"), ColumnSpec::numeric("a")],
            "y",
            "1",
        );
        assert!(dup.validate().is_err());
        let one_cat = Schema::new(vec![ColumnSpec::categorical("a", &["x"])], "y", "1");
        assert!(one_cat.validate().is_err());
        let label_clash = Schema::new(vec![ColumnSpec::numeric("y")], "y", "1");
        assert!(label_clash.validate().is_err());
        let json = r#"{"columns":[{"name":"age","kind":"categorical","categories":["<25","25-60",">60"],"bins":[25,61]}],
                       "label":{"name":"y","positive":"1"}}"#;
        let s = Schema::from_json(json).unwrap();
        let ds = load_dataset("age,y\n24,1\n25,0\n60,1\n61,0\n".as_bytes(), &s).unwrap();
        let enc = encode(&ds);
        let cats: Vec<_> = (0..4).map(|r| enc.decode_category(0, r).unwrap()).collect();
        assert_eq!(cats, ["<25", "25-60", "25-60", ">60"]);
    }

    #[test]
    fn recode_merges_categories() {
        let mut race = ColumnSpec::categorical("race", &["Caucasian", "African-American", "Other"]);
        race.recode.insert("Hispanic".into(), "Other".into());
        race.recode.insert("Asian".into(), "Other".into());
        let s = Schema::new(vec![race], "y", "1");
        let ds = load_dataset(
            "race,y\nCaucasian,1\nHispanic,0\nAsian,1\nAfrican-American,0\n".as_bytes(),
            &s,
        )
        .unwrap();
        let enc = encode(&ds);
        assert_eq!(enc.column(2), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn numeric_only_passes_through() {
        let csv = "a,b,y\n1.50,-2,1\n3,4e2,0\n";
        let s = Schema::new(
            vec![ColumnSpec::numeric("a"), ColumnSpec::numeric("b")],
            "y",
            "1",
        );
        let enc = encode(&load_dataset(csv.as_bytes(), &s).unwrap());
        assert_eq!(enc.column(0), &[1.5, 3.0]);
        assert_eq!(enc.column(1), &[-2.0, 400.0]);
        let mut out = Vec::new();
        enc.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
        assert!(enc.features().iter().all(|f| !f.candidate));
    }

    #[test]
    fn binary_indicator_and_complement() {
        let csv = "g,y\nmale,1\nfemale,0\nfemale,1\n";
        let s = Schema::new(vec![ColumnSpec::binary("g", Some(["female", "male"]))], "y", "1");
        let enc = encode(&load_dataset(csv.as_bytes(), &s).unwrap());
        assert_eq!(enc.width(), 1);
        assert_eq!(enc.subfeatures()[0].name, "g_male");
        assert_eq!(enc.column(0), &[1.0, 0.0, 0.0]);
        let s2 = Schema::new(vec![ColumnSpec::binary("g", Some(["male", "female"]))], "y", "1");
        let enc2 = encode(&load_dataset(csv.as_bytes(), &s2).unwrap());
        let complement: Vec<f64> = enc.column(0).iter().map(|v| 1.0 - v).collect();
        assert_eq!(enc2.column(0), complement.as_slice());
        assert!(enc.features()[0].candidate);
    }

    #[test]
    fn one_hot_round_trip() {
        let ds = load_dataset(TOY_CSV.as_bytes(), &toy_schema()).unwrap();
        let enc = encode(&ds);
        let ColumnValues::Codes(codes) = &ds.columns()[2].values else {
            panic!("categorical codes expected")
        };
        for (row, &code) in codes.iter().enumerate() {
            assert_eq!(
                enc.decode_category(2, row).unwrap(),
                enc.features()[2].categories[code as usize]
            );
        }
    }
}
