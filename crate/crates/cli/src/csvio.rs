//! CSV ingestion and emission for time-series datasets: a header row of
//! variable names followed by one strictly rectangular numeric row per
//! time step.

use std::path::Path;

use ndarray::Array2;
use tvsem::model::TimeSeriesDataset;
use tvsem::{Error, Result};

/// Loads a dataset; parse failures name the offending row and column
/// (1-based, counting the header as row 1).
pub fn load_csv(path: &Path) -> Result<TimeSeriesDataset<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { row: 1, col: 1, msg: e.to_string() })?
        .iter()
        .map(str::to_owned)
        .collect();
    if names.is_empty() {
        return Err(Error::Parse { row: 1, col: 1, msg: "empty header".into() });
    }
    let m = names.len();
    let mut rows: Vec<f64> = Vec::new();
    let mut t_len = 0;
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2;
        let record = record.map_err(|e| Error::Parse { row, col: 1, msg: e.to_string() })?;
        if record.len() != m {
            return Err(Error::Parse {
                row,
                col: record.len().min(m) + 1,
                msg: format!("expected {m} cells, found {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                col: j + 1,
                msg: format!("not a number: {cell:?}"),
            })?;
            rows.push(value);
        }
        t_len += 1;
    }
    if t_len == 0 {
        return Err(Error::Parse { row: 2, col: 1, msg: "no data rows".into() });
    }
    let values = Array2::from_shape_vec((t_len, m), rows)
        .expect("row-major cells match the recorded shape");
    TimeSeriesDataset::new(values, names)
}

/// Writes a dataset with shortest round-trip float formatting, so
/// save-then-load is exact.
pub fn save_csv(path: &Path, data: &TimeSeriesDataset<f64>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", path.display())))?;
    writer
        .write_record(&data.names)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    for row in data.values.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writer
            .write_record(&cells)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
