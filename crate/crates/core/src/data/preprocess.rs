use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureKind, TabularDataset};
use crate::error::{Error, Result};

/// Per-column admissible ranges `[low, high]`; values outside become missing.
///
/// Serialized as a JSON object mapping column names to `[low, high]` pairs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutlierBounds(pub BTreeMap<String, (f64, f64)>);

impl OutlierBounds {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, column: impl Into<String>, low: f64, high: f64) -> Self {
        self.0.insert(column.into(), (low, high));
        self
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Sets every continuous cell outside its column bounds to missing.
pub fn preprocess(ds: &TabularDataset, bounds: &OutlierBounds) -> Result<TabularDataset> {
    let schema = ds.schema();
    let mut per_column: Vec<Option<(f64, f64)>> = vec![None; schema.len()];
    for (name, &(low, high)) in &bounds.0 {
        let j = schema
            .index_of(name)
            .ok_or_else(|| Error::Validation(format!("bounds given for unknown column `{name}`")))?;
        if schema.kind(j) != FeatureKind::Continuous {
            return Err(Error::Validation(format!("bounds given for binary column `{name}`")));
        }
        if !(low < high) {
            return Err(Error::Validation(format!(
                "bounds for `{name}` must satisfy low < high, got ({low}, {high})"
            )));
        }
        per_column[j] = Some((low, high));
    }
    Ok(ds.map_cells(|j, cell| match (cell, per_column[j]) {
        (Some(v), Some((low, high))) if v < low || v > high => None,
        _ => cell,
    }))
}
