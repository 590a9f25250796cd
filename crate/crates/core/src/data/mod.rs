//! Tabular datasets with typed columns, optional cells and optional labels.
//!
//! Every other module consumes data through [`TabularDataset`]. Cells are
//! `Option<f64>`: `None` is a missing value, and binary columns only ever hold
//! `Some(0.0)` or `Some(1.0)`.

mod csv_io;
mod labels;
mod preprocess;
mod split;
mod standardize;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use labels::{derive_labels, load_followup_csv, EventType, FollowupRecord, DEFAULT_HORIZON_YEARS};
pub use preprocess::{preprocess, OutlierBounds};
pub use split::{split, DataSplits, SelectionData, TEST_FRACTION, VALIDATION_FRACTION};
pub use standardize::{ColumnStats, StandardizationStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Binary,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: FeatureKind,
}

impl Column {
    pub fn binary(name: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            kind: FeatureKind::Binary,
        }
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            kind: FeatureKind::Continuous,
        }
    }
}

/// Ordered, typed column list shared by every dataset and model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct FeatureSchema {
    columns: Vec<Column>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    columns: Vec<Column>,
}

impl TryFrom<RawSchema> for FeatureSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        FeatureSchema::new(raw.columns)
    }
}

impl From<FeatureSchema> for RawSchema {
    fn from(schema: FeatureSchema) -> Self {
        RawSchema {
            columns: schema.columns,
        }
    }
}

impl FeatureSchema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Schema("schema must have at least one column".into()));
        }
        let mut seen = HashSet::new();
        for column in &columns {
            if column.name == LABEL_COLUMN {
                return Err(Error::Schema(format!(
                    "`{LABEL_COLUMN}` is reserved for the label column"
                )));
            }
            if !seen.insert(column.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", column.name)));
            }
        }
        Ok(FeatureSchema { columns })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn n_binary(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| c.kind == FeatureKind::Binary)
            .count()
    }

    pub fn n_continuous(&self) -> usize {
        self.len() - self.n_binary()
    }

    pub fn kind(&self, index: usize) -> FeatureKind {
        self.columns[index].kind
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.columns.iter().map(|c| c.kind).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Name of the optional trailing label column in CSV files.
pub const LABEL_COLUMN: &str = "label";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Positive,
    Unlabelled,
}

impl Label {
    pub fn from_class(class: u8) -> Option<Label> {
        match class {
            0 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }

    /// 0 / 1 for labelled rows.
    pub fn class(self) -> Option<u8> {
        match self {
            Label::Negative => Some(0),
            Label::Positive => Some(1),
            Label::Unlabelled => None,
        }
    }

    pub fn is_labelled(self) -> bool {
        self != Label::Unlabelled
    }
}

/// Row-major matrix of optional values plus one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularDataset {
    schema: FeatureSchema,
    values: Vec<Vec<Option<f64>>>,
    labels: Vec<Label>,
}

impl TabularDataset {
    pub fn new(schema: FeatureSchema, values: Vec<Vec<Option<f64>>>, labels: Vec<Label>) -> Result<Self> {
        if values.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                values.len(),
                labels.len()
            )));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::Shape(format!(
                    "row {i} has {} cells, schema has {} columns",
                    row.len(),
                    schema.len()
                )));
            }
            for (j, cell) in row.iter().enumerate() {
                if let Some(v) = *cell {
                    if !v.is_finite() {
                        return Err(Error::Validation(format!(
                            "row {i}, column `{}`: non-finite value",
                            schema.columns[j].name
                        )));
                    }
                    if schema.kind(j) == FeatureKind::Binary && v != 0.0 && v != 1.0 {
                        return Err(Error::Validation(format!(
                            "row {i}, column `{}`: binary cell must be 0 or 1, got {v}",
                            schema.columns[j].name
                        )));
                    }
                }
            }
        }
        Ok(TabularDataset {
            schema,
            values,
            labels,
        })
    }

    /// All rows unlabelled.
    pub fn unlabelled(schema: FeatureSchema, values: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let labels = vec![Label::Unlabelled; values.len()];
        Self::new(schema, values, labels)
    }

    pub fn empty(schema: FeatureSchema) -> Self {
        TabularDataset {
            schema,
            values: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        &self.values[i]
    }

    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.values
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    /// 0/1 classes of every row; errors if any row is unlabelled.
    pub fn classes(&self) -> Result<Vec<u8>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.class()
                    .ok_or_else(|| Error::Validation(format!("row {i} is unlabelled")))
            })
            .collect()
    }

    pub fn n_labelled(&self) -> usize {
        self.labels.iter().filter(|l| l.is_labelled()).count()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// New dataset with the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        TabularDataset {
            schema: self.schema.clone(),
            values: indices.iter().map(|&i| self.values[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn labelled_part(&self) -> Self {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| self.labels[i].is_labelled()).collect();
        self.subset(&idx)
    }

    pub fn concat(&self, other: &TabularDataset) -> Result<Self> {
        if self.schema != other.schema {
            return Err(Error::Schema("cannot concatenate datasets with different schemas".into()));
        }
        let mut out = self.clone();
        out.values.extend(other.values.iter().cloned());
        out.labels.extend(other.labels.iter().copied());
        Ok(out)
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.n_rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                self.n_rows()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Fraction of absent cells over the whole matrix.
    pub fn missing_fraction(&self) -> f64 {
        let total = self.n_rows() * self.n_cols();
        if total == 0 {
            return 0.0;
        }
        let missing = self.values.iter().flatten().filter(|c| c.is_none()).count();
        missing as f64 / total as f64
    }

    pub(crate) fn map_cells(&self, mut f: impl FnMut(usize, Option<f64>) -> Option<f64>) -> Self {
        let values = self
            .values
            .iter()
            .map(|row| row.iter().enumerate().map(|(j, &c)| f(j, c)).collect())
            .collect();
        TabularDataset {
            schema: self.schema.clone(),
            values,
            labels: self.labels.clone(),
        }
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Self> {
        csv_io::load_csv(path.as_ref(), schema)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R, schema: &FeatureSchema) -> Result<Self> {
        csv_io::read_csv(reader, schema)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        csv_io::write_csv(self, path.as_ref())
    }

    pub fn to_csv_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        csv_io::write_to(self, writer)
    }
}

/// Observedness of every cell: `true` iff the value is present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskMatrix {
    n_rows: usize,
    n_cols: usize,
    observed: Vec<bool>,
}

impl MaskMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.n_cols + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.observed[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn observed_fraction(&self) -> f64 {
        if self.observed.is_empty() {
            return 1.0;
        }
        self.observed.iter().filter(|&&o| o).count() as f64 / self.observed.len() as f64
    }
}

pub fn null_mask(ds: &TabularDataset) -> MaskMatrix {
    MaskMatrix {
        n_rows: ds.n_rows(),
        n_cols: ds.n_cols(),
        observed: ds.values.iter().flatten().map(Option::is_some).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema3() -> FeatureSchema {
        FeatureSchema::new(vec![Column::binary("a"), Column::binary("b"), Column::continuous("c")]).unwrap()
    }

    #[test]
    fn schema_rejects_duplicates_and_empty() {
        assert!(FeatureSchema::new(vec![]).is_err());
        assert!(FeatureSchema::new(vec![Column::binary("a"), Column::continuous("a")]).is_err());
        assert!(FeatureSchema::new(vec![Column::binary("label")]).is_err());
        let s = schema3();
        assert_eq!((s.n_binary(), s.n_continuous(), s.len()), (2, 1, 3));
    }

    #[test]
    fn schema_json_validates() {
        let bad = r#"{"columns":[{"name":"x","kind":"binary"},{"name":"x","kind":"binary"}]}"#;
        assert!(serde_json::from_str::<FeatureSchema>(bad).is_err());
        let good = r#"{"columns":[{"name":"x","kind":"continuous"}]}"#;
        let s: FeatureSchema = serde_json::from_str(good).unwrap();
        assert_eq!(s.kind(0), FeatureKind::Continuous);
    }

    #[test]
    fn dataset_rejects_non_binary_cells() {
        let err = TabularDataset::unlabelled(schema3(), vec![vec![Some(2.0), None, Some(1.0)]]).unwrap_err();
        assert!(err.to_string().contains("`a`"));
    }

    #[test]
    fn null_mask_matches_presence() {
        let ds = TabularDataset::unlabelled(schema3(), vec![vec![Some(1.0), None, Some(2.3)]]).unwrap();
        let mask = null_mask(&ds);
        assert_eq!(mask.row(0), &[true, false, true]);

        let full = TabularDataset::unlabelled(schema3(), vec![vec![Some(0.0), Some(1.0), Some(0.5)]; 4]).unwrap();
        assert_eq!(null_mask(&full).observed_fraction(), 1.0);
    }

    #[test]
    fn null_mask_fraction_tracks_missingness() {
        // 2.98% of 10000 cells absent.
        let schema = FeatureSchema::new((0..100).map(|j| Column::continuous(format!("c{j}"))).collect()).unwrap();
        let mut values = vec![vec![Some(1.0); 100]; 100];
        for k in 0..298 {
            values[k / 100][k % 100] = None;
        }
        let ds = TabularDataset::unlabelled(schema, values).unwrap();
        let mask = null_mask(&ds);
        assert!((1.0 - mask.observed_fraction() - 0.0298).abs() < 1e-12);
        assert!((ds.missing_fraction() - 0.0298).abs() < 1e-12);
    }
}
