//! Dataset text format: one sample per line, integer label first, then the
//! feature values, comma separated, no header. CRLF is accepted on input;
//! output always uses LF.

use std::fmt::Write as _;
use std::path::Path;

use super::{DataError, Dataset, Result};
use crate::nn::Tensor;

pub fn load_csv(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, num_classes)
}

/// Parses dataset text. Line numbers in errors are 1-based. Blank lines are
/// skipped. `num_classes` defaults to `1 + max label`.
pub fn parse_csv(text: &str, num_classes: Option<usize>) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label_field = fields.next().unwrap_or_default().trim();
        let label: usize = label_field
            .parse()
            .map_err(|_| DataError::BadLabel { line: line_no })?;
        if num_classes.is_some_and(|c| label >= c) {
            return Err(DataError::BadLabel { line: line_no });
        }
        let start = data.len();
        for field in fields {
            let value: f64 = field.trim().parse().map_err(|_| DataError::Parse {
                line: line_no,
                what: format!("feature value {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(DataError::Parse {
                    line: line_no,
                    what: format!("non-finite value {field:?}"),
                });
            }
            data.push(value);
        }
        let found = data.len() - start;
        match width {
            None if found == 0 => {
                return Err(DataError::Parse {
                    line: line_no,
                    what: "row without features".into(),
                })
            }
            None => width = Some(found),
            Some(expected) if expected != found => {
                return Err(DataError::RaggedRow {
                    line: line_no,
                    expected,
                    found,
                })
            }
            Some(_) => {}
        }
        labels.push(label);
    }
    let dim = width.ok_or(DataError::NoSamples)?;
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let features = Tensor::new(vec![labels.len(), dim], data)?;
    Dataset::new(features, labels, classes)
}

/// Writes `dataset` with shortest round-trip decimal formatting.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_csv_string(dataset))?;
    Ok(())
}

pub(crate) fn to_csv_string(dataset: &Dataset) -> String {
    let mut out = String::new();
    for (i, label) in dataset.labels().iter().enumerate() {
        let _ = write!(out, "{label}");
        for v in dataset.features().row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
