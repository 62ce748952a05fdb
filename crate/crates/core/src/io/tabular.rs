//! Matrices as CSV: one header row of column indices, then one row per matrix row.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Writes with 17 significant digits, enough for an exact `f64` round trip.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let fail = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record((0..m.cols()).map(|k| k.to_string()))
        .map_err(fail)?;
    for i in 0..m.rows() {
        w.write_record((0..m.cols()).map(|j| format!("{:.16e}", m.get(i, j))))
            .map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a matrix written by [`write_matrix_csv`]; the first row is taken as
/// a header and skipped.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let fail = |m: String| Error::format(path, m);
    let mut r = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
    let cols = r.headers().map_err(|e| fail(e.to_string()))?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        for field in record.iter() {
            let v = field
                .trim()
                .parse::<f64>()
                .map_err(|_| fail(format!("row {}: '{field}' is not a number", i + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 || cols == 0 {
        return Err(fail("no data rows".into()));
    }
    Matrix::from_row_major(rows, cols, &values)
}
