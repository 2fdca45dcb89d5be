//! CSV-backed tables and their resolution against a schema.
//!
//! [`TabularData`] keeps cells as the strings found in the file, so saving
//! reproduces the input byte for byte. [`resolve`] turns a table plus a
//! [`DatasetSchema`] into typed columns: labels, optional predictions,
//! features, group masks, and the group system with proxy error rates
//! (declared, or measured against the true mask when one exists).

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::schema::{DatasetSchema, GroupDef, GroupRole};
use crate::dataset::{GroupEntry, GroupSystem, LabeledDataset};
use crate::error::{Error, Result};
use crate::metrics;

/// Header plus rows of raw cells.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularData {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TabularData {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
            })
    }
}

pub fn load_table(path: &Path) -> Result<TabularData> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let columns = reader
        .headers()?
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(record.iter().map(|s| s.to_string()).collect());
    }
    Ok(TabularData { columns, rows })
}

pub fn save_table(table: &TabularData, path: &Path) -> Result<()> {
    let mut writer = ::csv::WriterBuilder::new().from_path(path)?;
    writer.write_record(&table.columns)?;
    for row in &table.rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// A table resolved against a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCsv {
    pub table: TabularData,
    pub labels: Vec<u8>,
    pub predictions: Option<Vec<f64>>,
    pub feature_names: Vec<String>,
    /// Row-major: `features[row][feature]`.
    pub features: Vec<Vec<f64>>,
    pub true_masks: BTreeMap<String, Vec<bool>>,
    pub proxy_masks: BTreeMap<String, Vec<bool>>,
    pub system: GroupSystem,
}

fn parse_cell(table: &TabularData, row: usize, col: usize) -> Result<f64> {
    let cell = &table.rows[row][col];
    cell.trim().parse::<f64>().map_err(|_| Error::BadCell {
        row: row + 1,
        column: table.columns[col].clone(),
        reason: format!("{cell:?} is not a number"),
    })
}

fn eval_group(table: &TabularData, def: &GroupDef) -> Result<Vec<bool>> {
    let indices: Vec<usize> = def
        .predicate
        .columns()
        .map(|c| table.column_index(c))
        .collect::<Result<_>>()?;
    let mut mask = Vec::with_capacity(table.rows.len());
    for row in 0..table.rows.len() {
        let mut hit = true;
        for (clause, &col) in def.predicate.clauses.iter().zip(&indices) {
            let value = parse_cell(table, row, col)?;
            if !clause.op.eval(value, clause.value) {
                hit = false;
                break;
            }
        }
        mask.push(hit);
    }
    Ok(mask)
}

/// Resolve a raw table against a schema.
pub fn resolve(table: &TabularData, schema: &DatasetSchema) -> Result<LoadedCsv> {
    for (i, row) in table.rows.iter().enumerate() {
        if row.len() != table.columns.len() {
            return Err(Error::LengthMismatch {
                what: "csv row",
                expected: table.columns.len(),
                actual: row.len(),
            });
        }
        let _ = i;
    }
    let label_col = table.column_index(&schema.label_column)?;
    let mut labels = Vec::with_capacity(table.rows.len());
    for row in 0..table.rows.len() {
        let v = parse_cell(table, row, label_col)?;
        if v != 0.0 && v != 1.0 {
            return Err(Error::BadCell {
                row: row + 1,
                column: schema.label_column.clone(),
                reason: format!("label {v} is not 0 or 1"),
            });
        }
        labels.push(v as u8);
    }
    let predictions = match &schema.prediction_column {
        None => None,
        Some(name) => {
            let col = table.column_index(name)?;
            let mut preds = Vec::with_capacity(table.rows.len());
            for row in 0..table.rows.len() {
                let v = parse_cell(table, row, col)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::BadCell {
                        row: row + 1,
                        column: name.clone(),
                        reason: format!("prediction {v} is not in [0, 1]"),
                    });
                }
                preds.push(v);
            }
            Some(preds)
        }
    };
    let mut features = vec![Vec::with_capacity(schema.feature_columns.len()); table.rows.len()];
    for name in &schema.feature_columns {
        let col = table.column_index(name)?;
        for (row, slot) in features.iter_mut().enumerate() {
            let v = parse_cell(table, row, col)?;
            if !v.is_finite() {
                return Err(Error::BadCell {
                    row: row + 1,
                    column: name.clone(),
                    reason: format!("feature {v} is not finite"),
                });
            }
            slot.push(v);
        }
    }
    let mut true_masks = BTreeMap::new();
    let mut proxy_masks = BTreeMap::new();
    for def in &schema.groups {
        let mask = eval_group(table, def)?;
        match def.role {
            GroupRole::True => true_masks.insert(def.name.clone(), mask),
            GroupRole::Proxy => proxy_masks.insert(def.name.clone(), mask),
        };
    }
    let mut entries = Vec::new();
    for name in schema.group_names() {
        let declared = schema
            .def(name, GroupRole::Proxy)
            .and_then(|d| d.declared_err);
        let has_true = true_masks.contains_key(name);
        // Declared rates win; measurement fills the gap when a true mask
        // exists.
        let proxy_error = match declared {
            Some(e) => Some(e),
            None if has_true => Some(metrics::proxy_error(
                &true_masks[name],
                &proxy_masks[name],
            )?),
            None => None,
        };
        entries.push(GroupEntry {
            name: name.to_string(),
            has_true,
            proxy_error,
        });
    }
    Ok(LoadedCsv {
        table: table.clone(),
        labels,
        predictions,
        feature_names: schema.feature_columns.clone(),
        features,
        true_masks,
        proxy_masks,
        system: GroupSystem::new(entries)?,
    })
}

pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<LoadedCsv> {
    let table = load_table(path)?;
    resolve(&table, schema)
}

impl LoadedCsv {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    fn attach_masks(&self, mut ds: LabeledDataset) -> Result<LabeledDataset> {
        for (name, mask) in &self.true_masks {
            ds.add_true_group(name.clone(), mask.clone())?;
        }
        for (name, mask) in &self.proxy_masks {
            ds.add_proxy_group(name.clone(), mask.clone())?;
        }
        Ok(ds)
    }

    /// Dataset with fresh predictions in `[0, 1]`.
    pub fn dataset_with(&self, predictions: Vec<f64>) -> Result<LabeledDataset> {
        self.attach_masks(LabeledDataset::new(predictions, self.labels.clone())?)
    }

    /// Dataset with possibly out-of-range (but finite) predictions.
    pub fn dataset_with_unbounded(&self, predictions: Vec<f64>) -> Result<LabeledDataset> {
        let ds = LabeledDataset::new(vec![0.0; self.n()], self.labels.clone())?;
        let ds = self.attach_masks(ds)?;
        ds.with_predictions_unbounded(predictions)
    }

    /// Dataset from the stored prediction column.
    pub fn dataset(&self) -> Result<LabeledDataset> {
        let preds = self.predictions.clone().ok_or(Error::InvalidParameter {
            name: "prediction",
            reason: "schema declares no prediction column".into(),
        })?;
        self.dataset_with(preds)
    }

    /// Proxy masks as a `(name, mask)` list in name order.
    pub fn proxy_mask_list(&self) -> Vec<(String, Vec<bool>)> {
        self.proxy_masks
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// Rows at the given indices, in that order. The group system (with its
    /// declared or already-measured error rates) carries over unchanged.
    pub fn subset(&self, indices: &[usize]) -> LoadedCsv {
        let pick_rows = |rows: &[Vec<String>]| {
            indices
                .iter()
                .map(|&i| rows[i].clone())
                .collect::<Vec<_>>()
        };
        let pick_mask =
            |m: &Vec<bool>| indices.iter().map(|&i| m[i]).collect::<Vec<bool>>();
        LoadedCsv {
            table: TabularData {
                columns: self.table.columns.clone(),
                rows: pick_rows(&self.table.rows),
            },
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            predictions: self
                .predictions
                .as_ref()
                .map(|p| indices.iter().map(|&i| p[i]).collect()),
            feature_names: self.feature_names.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            true_masks: self
                .true_masks
                .iter()
                .map(|(k, v)| (k.clone(), pick_mask(v)))
                .collect(),
            proxy_masks: self
                .proxy_masks
                .iter()
                .map(|(k, v)| (k.clone(), pick_mask(v)))
                .collect(),
            system: self.system.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::DatasetSchema;

    fn sample_table() -> TabularData {
        TabularData {
            columns: ["y", "score", "age", "age_reported"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            rows: vec![
                vec!["1".into(), "0.8".into(), "70".into(), "66".into()],
                vec!["0".into(), "0.2".into(), "30".into(), "64".into()],
                vec!["1".into(), "0.6".into(), "66".into(), "70".into()],
                vec!["0".into(), "0.4".into(), "64".into(), "66".into()],
            ],
        }
    }

    fn sample_schema() -> DatasetSchema {
        DatasetSchema::parse(
            "label = y\nprediction = score\nfeatures = age\n\
             group senior true: age >= 65\n\
             group senior proxy: age_reported >= 65\n",
        )
        .unwrap()
    }

    #[test]
    fn resolve_builds_masks_and_measures_err() {
        let loaded = resolve(&sample_table(), &sample_schema()).unwrap();
        assert_eq!(loaded.labels, vec![1, 0, 1, 0]);
        assert_eq!(loaded.predictions.as_deref(), Some(&[0.8, 0.2, 0.6, 0.4][..]));
        assert_eq!(loaded.true_masks["senior"], vec![true, false, true, false]);
        assert_eq!(loaded.proxy_masks["senior"], vec![true, false, true, true]);
        // One disagreement out of four rows.
        assert_eq!(loaded.system.get("senior").unwrap().proxy_error, Some(0.25));
        assert!(loaded.system.get("senior").unwrap().has_true);
    }

    #[test]
    fn declared_err_wins_over_measurement() {
        let schema = DatasetSchema::parse(
            "label = y\nprediction = score\n\
             group senior true: age >= 65\n\
             group senior proxy err=0.5: age_reported >= 65\n",
        )
        .unwrap();
        let loaded = resolve(&sample_table(), &schema).unwrap();
        assert_eq!(loaded.system.get("senior").unwrap().proxy_error, Some(0.5));
    }

    #[test]
    fn missing_column_and_bad_cells_are_reported() {
        let schema = DatasetSchema::parse("label = missing\n").unwrap();
        assert!(matches!(
            resolve(&sample_table(), &schema),
            Err(Error::MissingColumn { .. })
        ));
        let mut table = sample_table();
        table.rows[2][0] = "2".into();
        match resolve(&table, &sample_schema()) {
            Err(Error::BadCell { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = std::env::temp_dir().join("mcaudit-table-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sample.csv");
        let table = sample_table();
        save_table(&table, &path).unwrap();
        let back = load_table(&path).unwrap();
        assert_eq!(table, back);
        let loaded = load_csv(&path, &sample_schema()).unwrap();
        assert_eq!(loaded.labels.len(), 4);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn subset_carries_system_and_reorders() {
        let loaded = resolve(&sample_table(), &sample_schema()).unwrap();
        let sub = loaded.subset(&[3, 0]);
        assert_eq!(sub.labels, vec![0, 1]);
        assert_eq!(sub.proxy_masks["senior"], vec![true, true]);
        assert_eq!(sub.system, loaded.system);
        let ds = sub.dataset().unwrap();
        assert_eq!(ds.predictions(), &[0.4, 0.8]);
    }
}
