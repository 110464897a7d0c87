//! CSV pool format: header `x,z1,...,zd[,y]`, one row per record.
//!
//! The label column is optional per file and per row; present labels
//! must be `-1` or `1` (empty fields mean unlabeled). Parsing validates
//! the header shape strictly and names the offending column on
//! mismatch.

use crate::error::{Error, Result};
use crate::sampling::{LabelOracle, UnlabeledPool};
use ndarray::Array2;
use std::io::Write;
use std::path::Path;

/// A parsed dataset: covariates plus per-row optional labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub z: Array2<f64>,
    pub y: Vec<Option<i8>>,
    pub has_label_column: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn labeled_rows(&self) -> usize {
        self.y.iter().filter(|l| l.is_some()).count()
    }

    /// Covariate pool for sampling (labels stay behind the oracle).
    pub fn pool(&self) -> Result<UnlabeledPool> {
        UnlabeledPool::new(self.x.clone(), self.z.clone())
    }

    /// Lazily-reading oracle over the label column.
    pub fn oracle(&self, budget: f64) -> LabelOracle {
        LabelOracle::new(self.y.clone(), budget)
    }
}

/// Parse a dataset from CSV bytes.
pub fn parse_csv_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Config("empty CSV header".into()));
    }
    if headers.get(0) != Some("x") {
        return Err(Error::Config(format!(
            "first column must be `x`, found `{}`",
            headers.get(0).unwrap_or("")
        )));
    }
    let mut has_label_column = false;
    let mut d = 0usize;
    for (i, name) in headers.iter().enumerate().skip(1) {
        let expect = format!("z{}", i);
        if name == expect {
            d += 1;
            continue;
        }
        if name == "y" && i == headers.len() - 1 {
            has_label_column = true;
            break;
        }
        return Err(Error::Config(format!(
            "unexpected column `{name}` at position {i} (expected `{expect}`{})",
            if i == headers.len() - 1 { " or `y`" } else { "" }
        )));
    }
    if d == 0 {
        return Err(Error::Config("dataset needs at least one z column".into()));
    }

    let mut x = Vec::new();
    let mut zrows: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let expect_fields = 1 + d + usize::from(has_label_column);
        if record.len() != expect_fields {
            return Err(Error::Config(format!(
                "row {} has {} fields, expected {expect_fields}",
                row_idx + 1,
                record.len()
            )));
        }
        let parse_f = |field: &str, what: &str| -> Result<f64> {
            let v: f64 = field.parse().map_err(|_| {
                Error::Config(format!("row {}: bad {what} value `{field}`", row_idx + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Config(format!(
                    "row {}: non-finite {what} value `{field}`",
                    row_idx + 1
                )));
            }
            Ok(v)
        };
        x.push(parse_f(&record[0], "x")?);
        for j in 0..d {
            zrows.push(parse_f(&record[1 + j], &format!("z{}", j + 1))?);
        }
        if has_label_column {
            let field = &record[1 + d];
            if field.is_empty() {
                y.push(None);
            } else {
                match field {
                    "1" | "+1" => y.push(Some(1)),
                    "-1" => y.push(Some(-1)),
                    _ => {
                        return Err(Error::Config(format!(
                            "row {}: label `{field}` is not -1 or 1",
                            row_idx + 1
                        )))
                    }
                }
            }
        } else {
            y.push(None);
        }
    }
    let n = x.len();
    let z = Array2::from_shape_vec((n, d), zrows)
        .map_err(|e| Error::Config(format!("bad matrix shape: {e}")))?;
    Ok(Dataset {
        x,
        z,
        y,
        has_label_column,
    })
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    parse_csv_bytes(&bytes)
}

/// Write a pool (with its sealed labels, when present) as CSV.
pub fn write_pool_csv<W: Write>(out: &mut W, pool: &UnlabeledPool) -> Result<()> {
    let d = pool.dim();
    let labels = pool.labels_for_evaluation();
    write!(out, "x")?;
    for j in 1..=d {
        write!(out, ",z{j}")?;
    }
    if labels.is_some() {
        write!(out, ",y")?;
    }
    writeln!(out)?;
    for i in 0..pool.len() {
        write!(out, "{}", format_float(pool.x[i]))?;
        for j in 0..d {
            write!(out, ",{}", format_float(pool.z[(i, j)]))?;
        }
        if let Some(y) = labels {
            write!(out, ",{}", y[i])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Shortest round-trippable float representation.
fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_labeled_csv() {
        let text = "x,z1,z2,y\n1.5,0.0,-2.0,1\n-0.5,1.0,3.0,-1\n0.25,0.5,0.5,\n";
        let ds = parse_csv_bytes(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert!(ds.has_label_column);
        assert_eq!(ds.y, vec![Some(1), Some(-1), None]);
        assert_eq!(ds.labeled_rows(), 2);
        assert_eq!(ds.z[(1, 1)], 3.0);
    }

    #[test]
    fn parses_unlabeled_csv() {
        let text = "x,z1\n0.1,0.2\n0.3,0.4\n";
        let ds = parse_csv_bytes(text.as_bytes()).unwrap();
        assert!(!ds.has_label_column);
        assert_eq!(ds.labeled_rows(), 0);
    }

    #[test]
    fn rejects_malformed_headers_and_rows() {
        for bad in [
            "a,z1,y\n1,2,1\n",
            "x,z2,y\n1,2,1\n",
            "x,z1,w\n1,2,1\n",
            "x\n1\n",
            "x,z1,y\n1,2,5\n",
            "x,z1,y\n1,foo,1\n",
            "x,z1,y\nnan,2.0,1\n",
        ] {
            let r = parse_csv_bytes(bad.as_bytes());
            assert!(r.is_err(), "accepted: {bad}");
        }
        // header error names the column
        let err = parse_csv_bytes("x,z1,q7,y\n1,2,3,1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("q7"), "{err}");
    }

    #[test]
    fn round_trips_through_write() {
        let truth = crate::datagen::TruthSpec::new(
            3,
            2,
            crate::datagen::ModelKind::Logistic,
            1,
        )
        .unwrap();
        let pool = crate::datagen::generate(50, &truth, 2);
        let mut buf = Vec::new();
        write_pool_csv(&mut buf, &pool).unwrap();
        let ds = parse_csv_bytes(&buf).unwrap();
        assert_eq!(ds.len(), 50);
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.labeled_rows(), 50);
        for i in 0..50 {
            assert_eq!(ds.x[i], pool.x[i]);
            assert_eq!(ds.y[i], pool.labels_for_evaluation().map(|y| y[i]));
        }
    }
}
