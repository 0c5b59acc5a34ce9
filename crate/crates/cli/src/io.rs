//! Numeric CSV files: one optional header line, then one row per observation.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsvMatrix {
    pub header: Option<Vec<String>>,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Seventeen significant digits, enough to round-trip every `f64`. Negative zero prints as zero.
pub fn fmt_float(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

pub fn read_matrix(path: &Path) -> Result<CsvMatrix> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .with_context(|| format!("reading {}", path.display()))?;
    parse_matrix(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Parses numeric CSV text. The first line is a header when none of its cells
/// is a number. Errors cite `(line, column)`, both counted from 1 in the file.
pub fn parse_matrix(text: &str) -> Result<CsvMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut values = Vec::new();
    let mut cols = 0;
    let mut rows = 0;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| anyhow!("malformed CSV: {e}"))?;
        let line = record.position().map_or(k as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if k == 0 && record.iter().all(|c| c.parse::<f64>().is_err()) {
            header = Some(record.iter().map(str::to_owned).collect::<Vec<_>>());
            cols = record.len();
            continue;
        }
        if cols == 0 {
            cols = record.len();
        }
        if record.len() != cols {
            bail!("row {line} has {} cells, expected {cols}", record.len());
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| anyhow!("cell ({line},{}): cannot parse {cell:?} as a number", j + 1))?;
            if !v.is_finite() {
                bail!("cell ({line},{}): value {cell:?} is not finite", j + 1);
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        bail!("no data rows");
    }
    Ok(CsvMatrix {
        header,
        rows,
        cols,
        values,
    })
}

pub fn write_matrix(path: &Path, header: &[String], cols: usize, values: &[f64]) -> Result<()> {
    assert_eq!(header.len(), cols);
    assert_eq!(values.len() % cols.max(1), 0);
    let mut out = String::with_capacity(values.len() * 24);
    out.push_str(&header.join(","));
    out.push('\n');
    for row in values.chunks(cols) {
        let cells: Vec<String> = row.iter().map(|&v| fmt_float(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .with_context(|| format!("writing {}", path.display()))
}

pub fn default_header(prefix: &str, cols: usize) -> Vec<String> {
    (1..=cols).map(|j| format!("{prefix}{j}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_detected() {
        let m = parse_matrix("a,b\n1,2\n3,4\n").unwrap();
        assert_eq!(m.header.as_deref(), Some(&["a".to_string(), "b".to_string()][..]));
        assert_eq!((m.rows, m.cols), (2, 2));
        assert_eq!(m.values, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(parse_matrix("1,2\n3,4").unwrap().header.is_none());
    }

    #[test]
    fn bad_cell_cites_line_and_column() {
        let err = parse_matrix("1,2\n3,4\n5,abc\n").unwrap_err().to_string();
        assert!(err.contains("(3,2)") && err.contains("abc"), "{err}");
        let err = parse_matrix("1,2\n3\n").unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        assert!(parse_matrix("1,nan\n").is_err());
        assert!(parse_matrix("x,y\n").is_err());
    }

    #[test]
    fn seventeen_digits_round_trip() {
        let vals = [0.1, -1.0 / 3.0, 6.02214076e23, f64::MIN_POSITIVE, 1.0 - f64::EPSILON, 0.0];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_matrix(&path, &default_header("x", 3), 3, &vals).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back = read_matrix(&path).unwrap();
        assert!(back.values.iter().zip(&vals).all(|(a, b)| a.to_bits() == b.to_bits()));
        let again = dir.path().join("n.csv");
        write_matrix(&again, back.header.as_ref().unwrap(), 3, &back.values).unwrap();
        assert_eq!(text, std::fs::read_to_string(&again).unwrap());
        assert!(text.lines().nth(1).unwrap().starts_with("1.0000000000000001e-1,"));
    }
}
