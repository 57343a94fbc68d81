//! Plot-ready CSV and JSON tables.

use std::fs;
use std::path::Path;

use lora_hull_core::diagnostics::{Embedding, SimilarityMatrix, SkippedLayer};
use lora_hull_core::sweep::SweepResult;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// JSON for a `.json` extension, CSV otherwise.
    pub fn infer(path: &Path, explicit: Option<Format>) -> Format {
        explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        })
    }
}

/// Nine significant digits, trailing zeros trimmed, exponent form outside
/// `[1e-4, 1e9)` (the C `%.9g` convention).
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn csv_bytes(header: Vec<String>, rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("table serializes");
    v.push(b'\n');
    v
}

/// Columns `row_id, alpha_1..n, lambda_1..n, score_1..n, delta_norm`; score
/// cells are empty for unscored rows.
pub fn sweep_csv(result: &SweepResult) -> Vec<u8> {
    let n = result.attributes.len();
    let mut header = vec!["row_id".to_string()];
    for prefix in ["alpha", "lambda", "score"] {
        header.extend((1..=n).map(|i| format!("{prefix}_{i}")));
    }
    header.push("delta_norm".into());
    let rows = result
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.row_id.clone()];
            row.extend(r.alpha.iter().map(|&a| fmt_num(f64::from(a))));
            row.extend(r.lambda.iter().map(|&l| fmt_num(f64::from(l))));
            match &r.scores {
                Some(s) => row.extend(s.iter().map(|&x| fmt_num(x))),
                None => row.extend(std::iter::repeat_n(String::new(), n)),
            }
            row.push(fmt_num(r.delta_norm));
            row
        })
        .collect();
    csv_bytes(header, rows)
}

pub fn sweep_json(result: &SweepResult) -> Vec<u8> {
    json_bytes(result)
}

/// Square table with a leading `label` column.
pub fn similarity_csv(m: &SimilarityMatrix) -> Vec<u8> {
    let mut header = vec!["label".to_string()];
    header.extend(m.labels().iter().cloned());
    let rows = m
        .labels()
        .iter()
        .enumerate()
        .map(|(p, label)| {
            let mut row = vec![label.clone()];
            row.extend((0..m.len()).map(|q| fmt_num(m.get(p, q))));
            row
        })
        .collect();
    csv_bytes(header, rows)
}

#[derive(Serialize)]
struct SimilarityDoc<'a> {
    #[serde(flatten)]
    matrix: &'a SimilarityMatrix,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    skipped: &'a [SkippedLayer],
}

pub fn similarity_json(m: &SimilarityMatrix, skipped: &[SkippedLayer]) -> Vec<u8> {
    json_bytes(&SimilarityDoc { matrix: m, skipped })
}

/// Columns `label, x1..x<dim>`.
pub fn embedding_csv(e: &Embedding) -> Vec<u8> {
    let mut header = vec!["label".to_string()];
    header.extend((1..=e.dim).map(|i| format!("x{i}")));
    let rows = e
        .labels
        .iter()
        .zip(&e.coords)
        .map(|(l, c)| {
            let mut row = vec![l.clone()];
            row.extend(c.iter().map(|&x| fmt_num(x)));
            row
        })
        .collect();
    csv_bytes(header, rows)
}

pub fn embedding_json(e: &Embedding) -> Vec<u8> {
    json_bytes(e)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
