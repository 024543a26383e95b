//! Sliding-window samples from a CSV of time series.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NtdError, Result};
use crate::lnn::Dataset;
use crate::matrix::{min_max, Mat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub input_columns: Vec<String>,
    pub target_columns: Vec<String>,
    pub window: usize,
    pub horizon: usize,
}

/// Min-max scaler of one CSV column. A constant column scales to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaler {
    pub column: String,
    pub min: f64,
    pub max: f64,
}

impl ColumnScaler {
    fn fit(column: &str, values: &[f64]) -> Self {
        let (min, max) = min_max(values).unwrap_or((0.0, 0.0));
        Self {
            column: column.to_string(),
            min,
            max,
        }
    }

    pub fn transform(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }

    pub fn inverse(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }
}

#[derive(Debug, Clone)]
pub struct WindowedData {
    pub data: Dataset,
    pub input_scalers: Vec<ColumnScaler>,
    pub target_scalers: Vec<ColumnScaler>,
    pub rows_used: usize,
    pub rows_skipped: usize,
}

pub fn window_csv(path: &Path, spec: &WindowSpec) -> Result<WindowedData> {
    let file = std::fs::File::open(path)?;
    window_csv_reader(file, spec)
}

/// Sample `s` ends at usable row `r = s + window - 1`. Its inputs are the
/// `window` values of each input column ending at `r`, all lags of the first
/// column first; its targets are the target columns at row `r + horizon`.
pub fn window_csv_reader<R: Read>(reader: R, spec: &WindowSpec) -> Result<WindowedData> {
    if spec.window < 1 {
        return Err(NtdError::Invalid("window must be >= 1".into()));
    }
    if spec.input_columns.is_empty() || spec.target_columns.is_empty() {
        return Err(NtdError::Invalid(
            "need at least one input and one target column".into(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &String| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| NtdError::Invalid(format!("CSV has no column named {name:?}")))
    };
    let input_idx = spec
        .input_columns
        .iter()
        .map(find)
        .collect::<Result<Vec<_>>>()?;
    let target_idx = spec
        .target_columns
        .iter()
        .map(find)
        .collect::<Result<Vec<_>>>()?;
    let mut needed: Vec<usize> = input_idx.iter().chain(&target_idx).copied().collect();
    needed.sort_unstable();
    needed.dedup();

    // columns[c] holds the values of needed[c] over the kept rows
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); needed.len()];
    let mut skipped = 0usize;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: Option<Vec<f64>> = needed
            .iter()
            .map(|&c| {
                rec.get(c)
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .and_then(|s| s.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
            })
            .collect();
        match parsed {
            Some(vals) => {
                for (col, v) in columns.iter_mut().zip(vals) {
                    col.push(v);
                }
            }
            None => {
                log::warn!(
                    "skipping CSV row {} with a missing or invalid value",
                    line + 2
                );
                skipped += 1;
            }
        }
    }
    let rows = columns.first().map_or(0, Vec::len);
    let span = spec.window + spec.horizon;
    if rows < span {
        return Err(NtdError::Invalid(format!(
            "{rows} usable rows is too few for window {} and horizon {}",
            spec.window, spec.horizon
        )));
    }
    let samples = rows - span + 1;

    let column_of = |csv_idx: usize| needed.iter().position(|&c| c == csv_idx).unwrap();
    let scalers: Vec<ColumnScaler> = needed
        .iter()
        .zip(&columns)
        .map(|(&c, vals)| ColumnScaler::fit(&headers[c], vals))
        .collect();
    let scaled: Vec<Vec<f64>> = columns
        .iter()
        .zip(&scalers)
        .map(|(vals, s)| vals.iter().map(|&v| s.transform(v)).collect())
        .collect();

    let i0 = input_idx.len() * spec.window;
    let mut x = Mat::zeros(samples, i0);
    let mut y = Mat::zeros(samples, target_idx.len());
    for s in 0..samples {
        let end = s + spec.window - 1;
        let row = x.row_mut(s);
        for (series, &c) in input_idx.iter().enumerate() {
            let col = &scaled[column_of(c)];
            row[series * spec.window..(series + 1) * spec.window]
                .copy_from_slice(&col[end + 1 - spec.window..=end]);
        }
        for (t, &c) in target_idx.iter().enumerate() {
            y[(s, t)] = scaled[column_of(c)][end + spec.horizon];
        }
    }

    Ok(WindowedData {
        data: Dataset::new(x, y)?,
        input_scalers: input_idx
            .iter()
            .map(|&c| scalers[column_of(c)].clone())
            .collect(),
        target_scalers: target_idx
            .iter()
            .map(|&c| scalers[column_of(c)].clone())
            .collect(),
        rows_used: rows,
        rows_skipped: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(inputs: &[&str], targets: &[&str], window: usize, horizon: usize) -> WindowSpec {
        WindowSpec {
            input_columns: inputs.iter().map(|s| s.to_string()).collect(),
            target_columns: targets.iter().map(|s| s.to_string()).collect(),
            window,
            horizon,
        }
    }

    fn series_csv(rows: usize) -> String {
        let mut s = String::from("month,taro,radish,carrot\n");
        for r in 0..rows {
            s.push_str(&format!(
                "{r},{},{},{}\n",
                r,
                100 + 2 * r,
                50 + (r * r) % 17
            ));
        }
        s
    }

    #[test]
    fn three_series_window_36() {
        let csv = series_csv(40);
        let w = window_csv_reader(
            csv.as_bytes(),
            &spec(
                &["taro", "radish", "carrot"],
                &["taro", "radish", "carrot"],
                36,
                1,
            ),
        )
        .unwrap();
        assert_eq!(w.data.input_dim(), 108);
        assert_eq!(w.data.len(), 4);
        assert_eq!(w.data.output_dim(), 3);
    }

    #[test]
    fn alignment_on_hand_built_csv() {
        let csv = series_csv(10);
        let w = window_csv_reader(
            csv.as_bytes(),
            &spec(&["taro", "radish"], &["carrot"], 3, 2),
        )
        .unwrap();
        // taro = r scaled by 9, radish = 100 + 2r scaled over [100, 118]
        assert_eq!(w.data.len(), 10 - 3 - 2 + 1);
        let carrot: Vec<f64> = (0..10).map(|r| (50 + (r * r) % 17) as f64).collect();
        let cs = &w.target_scalers[0];
        for s in 0..w.data.len() {
            let r = s + 2;
            for lag in 0..3 {
                let raw_row = r + 1 + lag - 3;
                assert_eq!(w.data.x[(s, lag)], raw_row as f64 / 9.0);
                let radish = w.input_scalers[1].inverse(w.data.x[(s, 3 + lag)]);
                assert!((radish - (100 + 2 * raw_row) as f64).abs() < 1e-12);
            }
            assert!((cs.inverse(w.data.y[(s, 0)]) - carrot[r + 2]).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_scales_to_zero() {
        let csv = "a,b\n1,5\n2,5\n3,5\n4,5\n";
        let w = window_csv_reader(csv.as_bytes(), &spec(&["b"], &["a"], 2, 1)).unwrap();
        assert!(w.data.x.as_slice().iter().all(|&v| v == 0.0));
        assert!(w.data.y.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn missing_values_skip_rows() {
        let csv = "a,b\n1,5\n2,\n3,7\n4,8\nx,9\n5,1\n";
        let w = window_csv_reader(csv.as_bytes(), &spec(&["a", "b"], &["b"], 1, 1)).unwrap();
        assert_eq!(w.rows_skipped, 2);
        assert_eq!(w.rows_used, 4);
        assert_eq!(w.data.len(), 3);
    }

    #[test]
    fn too_few_rows_is_error() {
        let csv = series_csv(5);
        assert!(window_csv_reader(csv.as_bytes(), &spec(&["taro"], &["taro"], 5, 1)).is_err());
        assert!(window_csv_reader(csv.as_bytes(), &spec(&["nope"], &["taro"], 1, 1)).is_err());
    }
}
