//! Dataset generators and the on-disk dataset directory format.
//!
//! A dataset directory holds `X.csv` and `Y.csv` (header `d0,d1,...`), an
//! optional held-out pair `X_test.csv` / `Y_test.csv`, and `dataset.json`
//! describing shapes, scalers, seed and planted labels when known.

mod diagrams;
mod synthetic;
mod window;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use diagrams::{gen_diagrams, render, write_pgm, DiagramSet, Shape};
pub use synthetic::{gen_synthetic, GroundTruth, SyntheticProblem, SyntheticSpec, MAX_ATTEMPTS};
pub use window::{window_csv, window_csv_reader, ColumnScaler, WindowSpec, WindowedData};

use crate::error::{NtdError, Result};
use crate::hash::sha256_hex;
use crate::lnn::Dataset;
use crate::matrix::Mat;

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic {
        spec: SyntheticSpec,
        seed_used: u64,
    },
    Window {
        spec: WindowSpec,
        input_scalers: Vec<ColumnScaler>,
        target_scalers: Vec<ColumnScaler>,
        rows_skipped: usize,
    },
    Diagrams {
        classes: Vec<Shape>,
        per_class: usize,
        size: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub n_train: usize,
    pub n_test: Option<usize>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub source: DatasetSource,
    pub ground_truth: Option<GroundTruth>,
    /// File name to SHA-256 of its bytes.
    pub files: BTreeMap<String, String>,
}

/// CSV of a matrix with header `d0..d{cols-1}` and shortest round-trip floats.
pub fn matrix_to_csv(m: &Mat) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..m.cols()).map(|j| format!("d{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in m.iter_rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<Mat> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let cols = rdr.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(NtdError::Parse(format!(
                "row {} has {} cells, expected {cols}",
                rows + 1,
                rec.len()
            )));
        }
        for cell in rec.iter() {
            data.push(
                cell.trim()
                    .parse::<f64>()
                    .map_err(|e| NtdError::Parse(format!("bad value {cell:?}: {e}")))?,
            );
        }
        rows += 1;
    }
    Mat::from_vec(rows, cols, data)
}

fn write_hashed(
    dir: &Path,
    name: &str,
    text: &str,
    files: &mut BTreeMap<String, String>,
) -> Result<()> {
    fs::write(dir.join(name), text)?;
    files.insert(name.to_string(), sha256_hex(text.as_bytes()));
    Ok(())
}

/// Writes a dataset directory and returns its manifest.
pub fn write_dataset_dir(
    dir: &Path,
    train: &Dataset,
    test: Option<&Dataset>,
    source: DatasetSource,
    ground_truth: Option<GroundTruth>,
    extra_files: &[(&str, String)],
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();
    write_hashed(dir, "X.csv", &matrix_to_csv(&train.x), &mut files)?;
    write_hashed(dir, "Y.csv", &matrix_to_csv(&train.y), &mut files)?;
    if let Some(t) = test {
        write_hashed(dir, "X_test.csv", &matrix_to_csv(&t.x), &mut files)?;
        write_hashed(dir, "Y_test.csv", &matrix_to_csv(&t.y), &mut files)?;
    }
    for (name, text) in extra_files {
        write_hashed(dir, name, text, &mut files)?;
    }
    let manifest = DatasetManifest {
        schema_version: DATASET_SCHEMA_VERSION,
        n_train: train.len(),
        n_test: test.map(Dataset::len),
        input_dim: train.input_dim(),
        output_dim: train.output_dim(),
        source,
        ground_truth,
        files,
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub train: Dataset,
    pub test: Option<Dataset>,
}

/// Reads a dataset directory, checking every file against its recorded hash.
pub fn read_dataset_dir(dir: &Path) -> Result<LoadedDataset> {
    let manifest: DatasetManifest =
        serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(NtdError::Parse(format!(
            "unsupported dataset schema_version {}",
            manifest.schema_version
        )));
    }
    let read = |name: &str| -> Result<String> {
        let text = fs::read_to_string(dir.join(name))?;
        if let Some(expected) = manifest.files.get(name) {
            if &sha256_hex(text.as_bytes()) != expected {
                return Err(NtdError::Parse(format!(
                    "{name} does not match its recorded hash"
                )));
            }
        }
        Ok(text)
    };
    let train = Dataset::new(
        matrix_from_csv(&read("X.csv")?)?,
        matrix_from_csv(&read("Y.csv")?)?,
    )?;
    let test = if manifest.files.contains_key("X_test.csv") {
        Some(Dataset::new(
            matrix_from_csv(&read("X_test.csv")?)?,
            matrix_from_csv(&read("Y_test.csv")?)?,
        )?)
    } else {
        None
    };
    if train.input_dim() != manifest.input_dim || train.output_dim() != manifest.output_dim {
        return Err(NtdError::Parse(
            "dataset files disagree with manifest shapes".into(),
        ));
    }
    Ok(LoadedDataset {
        manifest,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_csv_round_trip() {
        let m =
            Mat::from_rows(&[[0.1, -1e-300, 3.0], [f64::MIN_POSITIVE, 2.5e17, 1.0 / 3.0]]).unwrap();
        let text = matrix_to_csv(&m);
        assert!(text.starts_with("d0,d1,d2\n"));
        assert_eq!(matrix_from_csv(&text).unwrap(), m);
    }

    #[test]
    fn dataset_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            n_train: 30,
            n_test: 10,
            seed: 2,
            ..SyntheticSpec::default()
        };
        let p = gen_synthetic(&spec).unwrap();
        let m = write_dataset_dir(
            dir.path(),
            &p.train,
            Some(&p.test),
            DatasetSource::Synthetic {
                spec,
                seed_used: p.seed_used,
            },
            Some(p.truth.clone()),
            &[],
        )
        .unwrap();
        let loaded = read_dataset_dir(dir.path()).unwrap();
        assert_eq!(loaded.manifest, m);
        assert_eq!(loaded.train.x, p.train.x);
        assert_eq!(loaded.test.unwrap().y, p.test.y);

        fs::write(dir.path().join("Y.csv"), "d0\n0.5\n").unwrap();
        assert!(read_dataset_dir(dir.path()).is_err());
    }
}
