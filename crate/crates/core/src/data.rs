//! Feature-by-sample data matrices and row standardization.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An `m x n` matrix of observations, rows are features and columns samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    feature_ids: Vec<String>,
    sample_ids: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, feature_ids: Vec<String>, sample_ids: Vec<String>) -> Result<Self> {
        let (m, n) = values.shape();
        if m < 2 || n < 2 {
            return Err(Error::InvalidInput(format!(
                "data matrix must be at least 2x2, got {m}x{n}"
            )));
        }
        if feature_ids.len() != m || sample_ids.len() != n {
            return Err(Error::ShapeMismatch {
                expected: (m, n),
                found: (feature_ids.len(), sample_ids.len()),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at row {}, column {}",
                pos % m,
                pos / m
            )));
        }
        Ok(Self {
            values,
            feature_ids,
            sample_ids,
        })
    }

    /// Builds a matrix with generated ids `f0..`, `s0..`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let (m, n) = values.shape();
        let features = (0..m).map(|i| format!("f{i}")).collect();
        let samples = (0..n).map(|j| format!("s{j}")).collect();
        Self::new(values, features, samples)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_features(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let n = self.n_samples();
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n_features()) {
            return Err(Error::InvalidInput(format!("row index {bad} out of range")));
        }
        let values = DMatrix::from_fn(rows.len(), n, |r, j| self.values[(rows[r], j)]);
        let ids = rows.iter().map(|&i| self.feature_ids[i].clone()).collect();
        Self::new(values, ids, self.sample_ids.clone())
    }

    /// Indices of the given feature ids; unknown ids are skipped.
    pub fn feature_indices<S: AsRef<str>>(&self, ids: &[S]) -> Vec<usize> {
        ids.iter()
            .filter_map(|id| self.feature_ids.iter().position(|f| f == id.as_ref()))
            .collect()
    }

    /// Reads the comma-delimited layout: header row of sample ids (first cell
    /// ignored), then one row per feature starting with its id.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let sample_ids: Vec<String> = rdr.headers()?.iter().skip(1).map(String::from).collect();
        let n = sample_ids.len();
        let mut feature_ids = Vec::new();
        let mut flat = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != n + 1 {
                return Err(Error::InvalidInput(format!(
                    "row {row} has {} cells, expected {}",
                    record.len(),
                    n + 1
                )));
            }
            feature_ids.push(record[0].to_string());
            for (j, cell) in record.iter().skip(1).enumerate() {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("row {row}, column {j}: `{cell}` is not a number")))?;
                flat.push(v);
            }
        }
        let m = feature_ids.len();
        let values = DMatrix::from_row_slice(m, n, &flat);
        Self::new(values, feature_ids, sample_ids)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["feature".to_string()];
        header.extend(self.sample_ids.iter().cloned());
        wtr.write_record(&header)?;
        for (i, id) in self.feature_ids.iter().enumerate() {
            let mut record = vec![id.clone()];
            record.extend(self.values.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Per-row location and scale removed by [`standardize_rows`].
#[derive(Debug, Clone, PartialEq)]
pub struct RowScaling {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

/// Centers each row and scales it to unit sample variance (n - 1 denominator).
pub fn standardize_rows(raw: &DataMatrix) -> Result<(DataMatrix, RowScaling)> {
    let (m, n) = raw.values.shape();
    let mut out = raw.values.clone();
    let mut means = Vec::with_capacity(m);
    let mut sds = Vec::with_capacity(m);
    for i in 0..m {
        let row = raw.values.row(i);
        let mean = row.iter().sum::<f64>() / n as f64;
        let ss: f64 = row.iter().map(|v| (v - mean).powi(2)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        if !(sd > f64::EPSILON * mean.abs().max(1.0)) {
            return Err(Error::ConstantRow(i));
        }
        for j in 0..n {
            out[(i, j)] = (raw.values[(i, j)] - mean) / sd;
        }
        means.push(mean);
        sds.push(sd);
    }
    let data = DataMatrix {
        values: out,
        feature_ids: raw.feature_ids.clone(),
        sample_ids: raw.sample_ids.clone(),
    };
    Ok((data, RowScaling { means, sds }))
}
