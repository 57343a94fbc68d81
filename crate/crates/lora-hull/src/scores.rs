//! Externally computed attribute scores joined onto sweep rows by id.
//!
//! The file is a CSV with a `row_id` column and `score_1..score_n` columns;
//! other columns are ignored, so a sweep table with filled-in scores can be
//! fed back directly. Rows whose score cells are empty count as unscored.

use std::collections::BTreeMap;
use std::path::Path;

use lora_hull_core::interpolation::CompositeAdapter;
use lora_hull_core::sweep::{ScoreError, Scorer, SweepRow};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreTable {
    pub scores: BTreeMap<String, Vec<f64>>,
}

impl ScoreTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
        let headers = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
        let id_col = headers
            .iter()
            .position(|h| h == "row_id")
            .ok_or_else(|| Error::parse(path, "missing row_id column"))?;
        let mut score_cols = Vec::new();
        for i in 1.. {
            match headers.iter().position(|h| h == format!("score_{i}")) {
                Some(c) => score_cols.push(c),
                None => break,
            }
        }
        if score_cols.is_empty() {
            return Err(Error::parse(path, "no score_1.. columns"));
        }
        let mut scores = BTreeMap::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::parse(path, e))?;
            let id = record.get(id_col).unwrap_or_default().to_string();
            let cells: Vec<&str> = score_cols.iter().map(|&c| record.get(c).unwrap_or_default().trim()).collect();
            if cells.iter().all(|c| c.is_empty()) {
                continue;
            }
            let values = cells
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    c.parse::<f64>()
                        .map_err(|_| Error::parse(path, format!("record {}: score_{} = {c:?} is not a number", line + 1, k + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            if scores.insert(id.clone(), values).is_some() {
                return Err(Error::parse(path, format!("row_id {id} appears twice")));
            }
        }
        Ok(Self { scores })
    }
}

impl Scorer for ScoreTable {
    fn score(&self, row: &SweepRow, _composite: &CompositeAdapter<'_>) -> Result<Vec<f64>, ScoreError> {
        let s = self
            .scores
            .get(&row.id)
            .ok_or_else(|| ScoreError(format!("no scores for row {}", row.id)))?;
        if s.len() != row.alpha.len() {
            return Err(ScoreError(format!(
                "row {}: {} scores for {} attributes",
                row.id,
                s.len(),
                row.alpha.len()
            )));
        }
        Ok(s.clone())
    }
}
