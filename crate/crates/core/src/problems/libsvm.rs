//! LIBSVM text format: `label idx:val idx:val ...` with 1-based indices.
//!
//! Binary labels are accepted in any one of the encodings `{-1, +1}`,
//! `{0, 1}` or `{1, 2}` and mapped to `-1 / +1`. Blank lines and `#`
//! comments are skipped. Indices within a row may come in any order but
//! must not repeat.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("input contains no samples")]
    EmptyInput,
    #[error("line {line}: invalid label `{token}`")]
    BadLabel { line: usize, token: String },
    #[error("line {line}: label `{token}` does not fit a binary encoding of the labels seen so far")]
    UnsupportedLabels { line: usize, token: String },
    #[error("line {line}: expected `index:value`, got `{token}`")]
    BadToken { line: usize, token: String },
    #[error("line {line}: invalid feature index `{token}` (indices are 1-based integers)")]
    BadIndex { line: usize, token: String },
    #[error("line {line}: invalid feature value `{token}`")]
    BadValue { line: usize, token: String },
    #[error("line {line}: feature index {index} appears more than once")]
    DuplicateIndex { line: usize, index: usize },
    #[error("line {line}: feature index {index} exceeds dimension {dim}")]
    IndexExceedsDim { line: usize, index: usize, dim: usize },
}

impl ParseError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::EmptyInput => None,
            ParseError::BadLabel { line, .. }
            | ParseError::UnsupportedLabels { line, .. }
            | ParseError::BadToken { line, .. }
            | ParseError::BadIndex { line, .. }
            | ParseError::BadValue { line, .. }
            | ParseError::DuplicateIndex { line, .. }
            | ParseError::IndexExceedsDim { line, .. } => Some(*line),
        }
    }
}

const ENCODINGS: [[i64; 2]; 3] = [[-1, 1], [0, 1], [1, 2]];

pub fn parse_libsvm(input: &str, d_hint: Option<usize>) -> Result<Dataset, ParseError> {
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut seen: Vec<i64> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, raw) in input.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label = parse_label(label_tok).ok_or_else(|| ParseError::BadLabel { line, token: label_tok.into() })?;
        if !seen.contains(&label) {
            seen.push(label);
            if !ENCODINGS.iter().any(|enc| seen.iter().all(|l| enc.contains(l))) {
                return Err(ParseError::UnsupportedLabels { line, token: label_tok.into() });
            }
        }

        let mut row: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| ParseError::BadToken { line, token: tok.into() })?;
            let index: usize = match idx_s.parse() {
                Ok(i) if i >= 1 => i,
                _ => return Err(ParseError::BadIndex { line, token: idx_s.into() }),
            };
            let value: f64 = match val_s.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => return Err(ParseError::BadValue { line, token: val_s.into() }),
            };
            if let Some(dim) = d_hint {
                if index > dim {
                    return Err(ParseError::IndexExceedsDim { line, index, dim });
                }
            }
            max_index = max_index.max(index);
            row.push((index - 1, value));
        }
        row.sort_by_key(|(i, _)| *i);
        if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(ParseError::DuplicateIndex { line, index: w[0].0 + 1 });
        }
        rows.push(row);
        raw_labels.push(label);
    }

    if rows.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let encoding = ENCODINGS
        .iter()
        .find(|enc| seen.iter().all(|l| enc.contains(l)))
        .copied()
        .unwrap_or([-1, 1]);
    let labels = raw_labels
        .into_iter()
        .map(|l| if l == encoding[1] { 1.0 } else { -1.0 })
        .collect();
    let dim = d_hint.unwrap_or(max_index);
    Ok(Dataset::from_rows(dim, rows, labels).expect("rows validated during parsing"))
}

fn parse_label(tok: &str) -> Option<i64> {
    let v: f64 = tok.parse().ok()?;
    (v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15).then_some(v as i64)
}

pub fn read_libsvm(path: &Path, d_hint: Option<usize>) -> crate::Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_libsvm(&text, d_hint)?)
}

/// Canonical text form: `+1`/`-1` labels, sorted 1-based indices, values in
/// shortest round-trip decimal form, one sample per line.
pub fn to_libsvm_string(data: &Dataset) -> String {
    let mut out = String::new();
    for row in data.rows() {
        out.push_str(if row.label > 0.0 { "+1" } else { "-1" });
        for (&i, &v) in row.indices.iter().zip(row.values) {
            let _ = write!(out, " {}:{}", i + 1, v);
        }
        out.push('\n');
    }
    out
}
