//! CSV ingestion (RFC-4180 with a header row) and prediction output.

use std::path::Path;

use gpdistill_core::{Dataset, DenseMatrix, Dataset64, Matrix64};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, Result};

/// Parsed numeric CSV: header names plus a dense row-major value matrix.
pub struct NumericCsv {
    pub headers: Vec<String>,
    pub rows: usize,
    pub values: Vec<f64>,
}

pub fn read_numeric_csv(path: &Path) -> Result<NumericCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| HarnessError::File {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| HarnessError::config(format!("cannot read header of {path:?}: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.is_empty() {
        return Err(HarnessError::config(format!("{path:?} has no columns")));
    }
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (r, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| HarnessError::config(format!("csv parse error: {e}")))?;
        if record.len() != headers.len() {
            return Err(HarnessError::Csv {
                path: path.to_path_buf(),
                row: r + 2,
                column: "-".into(),
                message: format!(
                    "expected {} fields, found {}",
                    headers.len(),
                    record.len()
                ),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| HarnessError::Csv {
                path: path.to_path_buf(),
                row: r + 2,
                column: headers[c].clone(),
                message: format!("non-numeric cell {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(HarnessError::Csv {
                    path: path.to_path_buf(),
                    row: r + 2,
                    column: headers[c].clone(),
                    message: "non-finite value".into(),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(HarnessError::config(format!("{path:?} has no data rows")));
    }
    Ok(NumericCsv {
        headers,
        rows,
        values,
    })
}

fn split_target(csv: &NumericCsv, target: &str) -> Result<(Matrix64, Vec<f64>)> {
    let t = csv
        .headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| {
            HarnessError::config(format!(
                "target column {target:?} not found (columns: {:?})",
                csv.headers
            ))
        })?;
    let d = csv.headers.len() - 1;
    if d == 0 {
        return Err(HarnessError::config("no feature columns besides the target"));
    }
    let cols = csv.headers.len();
    let mut x = Vec::with_capacity(csv.rows * d);
    let mut y = Vec::with_capacity(csv.rows);
    for r in 0..csv.rows {
        for c in 0..cols {
            let v = csv.values[r * cols + c];
            if c == t {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    Ok((DenseMatrix::from_vec(csv.rows, d, x)?, y))
}

/// Load a CSV, shuffle deterministically, split into train/test, and
/// (optionally) standardize with statistics fitted on the train part only.
pub fn load_csv(
    path: &Path,
    target: &str,
    standardize: bool,
    seed: u64,
    split: f64,
) -> Result<(Dataset64, Dataset64)> {
    if !(split > 0.0 && split < 1.0) {
        return Err(HarnessError::config(format!(
            "split fraction must lie in (0, 1), got {split}"
        )));
    }
    let csv = read_numeric_csv(path)?;
    let (x, y) = split_target(&csv, target)?;
    let n = x.rows();
    if n < 4 {
        return Err(HarnessError::config("need at least 4 rows to split"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = ((split * n as f64).round() as usize).clamp(2, n - 1);

    let take = |ids: &[usize]| -> (Matrix64, Vec<f64>) {
        let xm = DenseMatrix::from_fn(ids.len(), x.cols(), |i, j| x.get(ids[i], j));
        let yv = ids.iter().map(|&i| y[i]).collect();
        (xm, yv)
    };
    let (x_tr, y_tr) = take(&order[..n_train]);
    let (x_te, y_te) = take(&order[n_train..]);

    if standardize {
        let train = Dataset::standardized(x_tr, y_tr)?;
        let test = Dataset::standardized_like(x_te, y_te, &train)?;
        Ok((train, test))
    } else {
        Ok((Dataset::new(x_tr, y_tr)?, Dataset::new(x_te, y_te)?))
    }
}

/// Load a whole CSV as one dataset (the `train` subcommand path).
pub fn load_csv_full(path: &Path, target: &str, standardize: bool) -> Result<Dataset64> {
    let csv = read_numeric_csv(path)?;
    let (x, y) = split_target(&csv, target)?;
    if standardize {
        Ok(Dataset::standardized(x, y)?)
    } else {
        Ok(Dataset::new(x, y)?)
    }
}

/// Load feature rows for prediction. When `drop_target` names a column it is
/// removed (so the same file used for training can be predicted on).
pub fn load_features(path: &Path, drop_target: Option<&str>, d: usize) -> Result<Matrix64> {
    let csv = read_numeric_csv(path)?;
    let skip = drop_target.and_then(|t| csv.headers.iter().position(|h| h == t));
    let width = csv.headers.len() - usize::from(skip.is_some());
    if width != d {
        return Err(HarnessError::config(format!(
            "model expects {d} feature columns, file provides {width}"
        )));
    }
    let cols = csv.headers.len();
    let mut x = Vec::with_capacity(csv.rows * d);
    for r in 0..csv.rows {
        for c in 0..cols {
            if Some(c) == skip {
                continue;
            }
            x.push(csv.values[r * cols + c]);
        }
    }
    Ok(DenseMatrix::from_vec(csv.rows, d, x)?)
}

/// Write predictions as `mean,variance,clamped` rows.
pub fn write_predictions_csv(
    path: &Path,
    rows: &[(f64, f64, bool)],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| {
        HarnessError::config(format!("cannot write {path:?}: {e}"))
    })?;
    writer
        .write_record(["mean", "variance", "clamped"])
        .map_err(|e| HarnessError::config(e.to_string()))?;
    for (mean, variance, clamped) in rows {
        writer
            .write_record([
                format!("{mean}"),
                format!("{variance}"),
                format!("{clamped}"),
            ])
            .map_err(|e| HarnessError::config(e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| HarnessError::config(e.to_string()))?;
    Ok(())
}
