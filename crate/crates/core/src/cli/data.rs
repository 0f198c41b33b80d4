use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Reads a returns table: a header row, then one row per period with a date
/// (or any label) in the first column and one numeric column per asset.
/// Rows and columns in errors are 1-based and count the header.
pub fn load_returns_csv(path: &Path, percent_units: bool) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_returns(file, percent_units)
}

pub fn parse_returns<R: std::io::Read>(reader: R, percent_units: bool) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |row: usize, column: usize, message: String| Error::Parse { row, column, message };
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(parse_err(1, 1, "file is empty".into())),
        Some(h) => h.map_err(|e| parse_err(1, 1, e.to_string()))?,
    };
    let width = header.len();
    if width < 2 {
        return Err(parse_err(1, 1, "need a label column and at least one asset column".into()));
    }
    if header.iter().skip(1).all(|c| c.parse::<f64>().is_ok()) {
        return Err(parse_err(1, 2, "missing header row (first row is numeric)".into()));
    }
    let scale = if percent_units { 0.01 } else { 1.0 };
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(row, 1, e.to_string()))?;
        if rec.len() != width {
            return Err(parse_err(row, rec.len().min(width) + 1, format!("expected {width} fields, found {}", rec.len())));
        }
        for (j, cell) in rec.iter().enumerate().skip(1) {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(row, j + 1, format!("not a finite number: '{cell}'")))?;
            values.push(v * scale);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(2, 1, "no data rows".into()));
    }
    Ok(DMatrix::from_row_slice(rows, width - 1, &values))
}
