use serde::{Deserialize, Serialize};

use super::{FeatureKind, FeatureSchema, TabularDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub column: String,
    pub index: usize,
    pub mean: f64,
    pub std: f64,
}

/// z-score parameters for the continuous columns of a schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub columns: Vec<ColumnStats>,
}

impl StandardizationStats {
    /// Mean 0, std 1 for every continuous column.
    pub fn identity(schema: &FeatureSchema) -> Self {
        let columns = schema
            .columns()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == FeatureKind::Continuous)
            .map(|(index, c)| ColumnStats {
                column: c.name.clone(),
                index,
                mean: 0.0,
                std: 1.0,
            })
            .collect();
        StandardizationStats { columns }
    }

    /// Population mean/std over the observed cells of each continuous column.
    /// Columns without spread (or without observations) get std 1.
    pub fn fit(train: &TabularDataset) -> Self {
        let mut stats = Self::identity(train.schema());
        for col in &mut stats.columns {
            let observed: Vec<f64> = train.rows().iter().filter_map(|r| r[col.index]).collect();
            if observed.is_empty() {
                continue;
            }
            let n = observed.len() as f64;
            let mean = observed.iter().sum::<f64>() / n;
            let var = observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            col.mean = mean;
            col.std = if std > 0.0 && std.is_finite() { std } else { 1.0 };
        }
        stats
    }

    fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        let expected = Self::identity(schema);
        let same = expected.columns.len() == self.columns.len()
            && expected
                .columns
                .iter()
                .zip(&self.columns)
                .all(|(a, b)| a.index == b.index && a.column == b.column);
        if same {
            Ok(())
        } else {
            Err(Error::Schema(
                "standardization statistics were fitted on a different schema".into(),
            ))
        }
    }

    /// Per-column `(mean, std)`, `None` for binary columns.
    pub fn per_column(&self, n_cols: usize) -> Vec<Option<(f64, f64)>> {
        let mut out = vec![None; n_cols];
        for c in &self.columns {
            out[c.index] = Some((c.mean, c.std));
        }
        out
    }

    pub fn apply(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        self.check_schema(ds.schema())?;
        let params = self.per_column(ds.n_cols());
        Ok(ds.map_cells(|j, cell| match (cell, params[j]) {
            (Some(v), Some((mean, std))) => Some((v - mean) / std),
            _ => cell,
        }))
    }

    pub fn invert(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        self.check_schema(ds.schema())?;
        let params = self.per_column(ds.n_cols());
        Ok(ds.map_cells(|j, cell| match (cell, params[j]) {
            (Some(v), Some((mean, std))) => Some(v * std + mean),
            _ => cell,
        }))
    }
}
