//! Series ingestion, normalisation, windowing and validation splits.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense feature-major matrix (`rows` features × `cols` timesteps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}×{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("rows differ in length".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Columns `[start, end)` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols, "column range out of bounds");
        let mut data = Vec::with_capacity(self.rows * (end - start));
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Matrix {
            rows: self.rows,
            cols: end - start,
            data,
        }
    }
}

/// A d×T series with optional point labels and a train/test boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub values: Matrix,
    pub labels: Option<Vec<bool>>,
    /// Timesteps `[0, train_end)` form the training part.
    pub train_end: usize,
    pub name: String,
}

impl LabeledSeries {
    pub fn new(
        values: Matrix,
        labels: Option<Vec<bool>>,
        train_end: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::Validation("series needs at least one feature and one timestep".into()));
        }
        if let Some(l) = &labels {
            if l.len() != values.cols() {
                return Err(Error::Validation(format!(
                    "{} labels for {} timesteps",
                    l.len(),
                    values.cols()
                )));
            }
        }
        if train_end > values.cols() {
            return Err(Error::Validation(format!(
                "train_end {train_end} exceeds series length {}",
                values.cols()
            )));
        }
        Ok(LabeledSeries {
            values,
            labels,
            train_end,
            name: name.into(),
        })
    }

    pub fn dims(&self) -> usize {
        self.values.rows()
    }

    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.cols() == 0
    }

    pub fn train_values(&self) -> Matrix {
        self.values.columns(0, self.train_end)
    }

    pub fn test_values(&self) -> Matrix {
        self.values.columns(self.train_end, self.len())
    }

    pub fn test_labels(&self) -> Option<&[bool]> {
        self.labels.as_deref().map(|l| &l[self.train_end..])
    }
}

/// Contiguous runs of `true` as inclusive `(start, end)` pairs.
pub fn label_ranges(labels: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &l) in labels.iter().enumerate() {
        match (l, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, labels.len() - 1));
    }
    out
}

fn parse_ucr_name(path: &Path) -> Result<(usize, usize, usize)> {
    const PATTERN: &str = "<name>_<train_end>_<anomaly_start>_<anomaly_end>.txt";
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::parse(path, format!("file name must match {PATTERN}")))?;
    let parts: Vec<&str> = stem.rsplitn(4, '_').collect();
    let nums: Option<Vec<usize>> = parts.iter().take(3).map(|p| p.parse().ok()).collect();
    match nums {
        Some(n) if n.len() == 3 => Ok((n[2], n[1], n[0])),
        _ => Err(Error::parse(
            path,
            format!("file name must end with three integers: {PATTERN}"),
        )),
    }
}

/// Reads a UCR Anomaly Archive file.
///
/// Values are whitespace-separated floats (one per line in most archive
/// files). The file name ends with `<train_end>_<anomaly_start>_<anomaly_end>`;
/// the anomaly range is inclusive and indexes timesteps from zero.
pub fn load_ucr(path: impl AsRef<Path>) -> Result<LabeledSeries> {
    let path = path.as_ref();
    let (train_end, anom_start, anom_end) = parse_ucr_name(path)?;
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                Error::parse(path, format!("line {}: `{tok}` is not a number", lineno + 1))
            })?;
            values.push(v);
        }
    }
    let n = values.len();
    if anom_start > anom_end || anom_end >= n {
        return Err(Error::Validation(format!(
            "anomaly range [{anom_start}, {anom_end}] does not fit a series of length {n}"
        )));
    }
    let mut labels = vec![false; n];
    labels[anom_start..=anom_end].iter_mut().for_each(|l| *l = true);
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    LabeledSeries::new(Matrix::from_vec(1, n, values)?, Some(labels), train_end, name)
}

/// Column mapping for [`load_csv`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Header names of feature columns, in feature order.
    pub features: Vec<String>,
    /// Optional 0/1 label column.
    pub label: Option<String>,
    /// Training boundary; the whole series is training data when absent.
    pub train_end: Option<usize>,
}

fn parse_label(tok: &str) -> Option<bool> {
    match tok.trim() {
        "0" | "0.0" | "false" | "False" => Some(false),
        "1" | "1.0" | "true" | "True" => Some(true),
        _ => None,
    }
}

/// Reads a headed CSV file; rows are timesteps.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LabeledSeries> {
    let path = path.as_ref();
    if schema.features.is_empty() {
        return Err(Error::Schema("schema names no feature columns".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in {}", path.display())))
    };
    let feature_idx = schema
        .features
        .iter()
        .map(|f| find(f))
        .collect::<Result<Vec<_>>>()?;
    let label_idx = schema.label.as_deref().map(find).transpose()?;

    let mut columns = vec![Vec::new(); feature_idx.len()];
    let mut labels = label_idx.map(|_| Vec::new());
    for (row_no, record) in reader.records().enumerate() {
        let line = row_no + 2;
        let record = record.map_err(|e| Error::parse(path, format!("row {line}: {e}")))?;
        for (col, &idx) in columns.iter_mut().zip(&feature_idx) {
            let tok = &record[idx];
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(path, format!("row {line}: `{tok}` is not a number")))?;
            col.push(v);
        }
        if let (Some(idx), Some(ls)) = (label_idx, labels.as_mut()) {
            let tok = &record[idx];
            let l = parse_label(tok)
                .ok_or_else(|| Error::parse(path, format!("row {line}: label `{tok}` is not 0/1")))?;
            ls.push(l);
        }
    }
    let t = columns[0].len();
    let train_end = schema.train_end.unwrap_or(t);
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    LabeledSeries::new(Matrix::from_rows(&columns)?, labels, train_end, name)
}

/// Which timesteps provide the min/max statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationScope {
    /// Whole series, train and test together.
    #[default]
    Full,
    /// Training part only; test values may fall outside [0, 1].
    TrainOnly,
}

/// Per-feature min-max scaling. Constant features map to zero.
pub fn minmax_normalize(series: &LabeledSeries, scope: NormalizationScope) -> Result<LabeledSeries> {
    let stats_end = match scope {
        NormalizationScope::Full => series.len(),
        NormalizationScope::TrainOnly if series.train_end == 0 => {
            return Err(Error::Validation(
                "train-only normalisation needs a non-empty training part".into(),
            ))
        }
        NormalizationScope::TrainOnly => series.train_end,
    };
    let mut values = series.values.clone();
    for r in 0..values.rows() {
        let row = values.row_mut(r);
        let (lo, hi) = row[..stats_end]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        for v in row.iter_mut() {
            *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
        }
    }
    Ok(LabeledSeries {
        values,
        ..series.clone()
    })
}

/// Sliding windows over a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    windows: Vec<Matrix>,
    /// Zero-based index of the last timestep covered by each window.
    end_indices: Vec<usize>,
    window_size: usize,
    stride: usize,
}

impl WindowedDataset {
    pub fn windows(&self) -> &[Matrix] {
        &self.windows
    }

    pub fn into_windows(self) -> Vec<Matrix> {
        self.windows
    }

    pub fn end_indices(&self) -> &[usize] {
        &self.end_indices
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Number of windows `⌊(len − window) / stride⌋ + 1`, or `None` when the
/// series is shorter than one window.
pub fn window_count(len: usize, window: usize, stride: usize) -> Option<usize> {
    (window >= 1 && stride >= 1 && window <= len).then(|| (len - window) / stride + 1)
}

/// Windows ending at zero-based timesteps `Θ−1, Θ−1+stride, …`.
pub fn window_matrix(values: &Matrix, window: usize, stride: usize) -> Result<WindowedDataset> {
    if stride == 0 {
        return Err(Error::Size("stride must be at least 1".into()));
    }
    let count = window_count(values.cols(), window, stride).ok_or_else(|| {
        Error::Size(format!(
            "window size {window} does not fit a series of length {}",
            values.cols()
        ))
    })?;
    let mut windows = Vec::with_capacity(count);
    let mut end_indices = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * stride;
        windows.push(values.columns(start, start + window));
        end_indices.push(start + window - 1);
    }
    Ok(WindowedDataset {
        windows,
        end_indices,
        window_size: window,
        stride,
    })
}

/// Windows over the whole series.
pub fn window(series: &LabeledSeries, window: usize, stride: usize) -> Result<WindowedDataset> {
    window_matrix(&series.values, window, stride)
}

/// Smallest stride in {1, 10, 100} keeping the training window count at or
/// below 10 000; falls back to 100.
pub fn choose_ucr_stride(train_len: usize, window: usize) -> Result<usize> {
    const LIMIT: usize = 10_000;
    for stride in [1, 10, 100] {
        match window_count(train_len, window, stride) {
            None => {
                return Err(Error::Size(format!(
                    "training part of length {train_len} is shorter than the window {window}"
                )))
            }
            Some(n) if n <= LIMIT => return Ok(stride),
            Some(_) => {}
        }
    }
    Ok(100)
}

/// Disjoint index sets produced by [`split_validation`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded uniform sample of `round(fraction · n)` validation indices (at least
/// one, leaving at least one for training).
pub fn split_validation(n: usize, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "validation fraction {fraction} must lie strictly between 0 and 1"
        )));
    }
    if n < 2 {
        return Err(Error::Size(format!("cannot split {n} sample(s) into train and validation")));
    }
    let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut validation = rand::seq::index::sample(&mut rng, n, k).into_vec();
    validation.sort_unstable();
    let mut in_val = vec![false; n];
    validation.iter().for_each(|&i| in_val[i] = true);
    let train = (0..n).filter(|&i| !in_val[i]).collect();
    Ok(Split { train, validation })
}
