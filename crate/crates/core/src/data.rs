//! Datasets, label remapping, file formats, and covariate transforms.
//!
//! Categories are stored zero-based: the label written as `s` in the user's
//! label space is category `s - 1` after remapping. [`LabelMap`] keeps the
//! original spelling so predictions can be reported back in it.

use std::cmp::Ordering;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Libsvm,
    Csv,
}

impl Format {
    /// Guess from a file extension; anything other than `.csv` is LIBSVM.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Libsvm,
        }
    }
}

/// Original label spellings indexed by category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    labels: Vec<String>,
}

impl LabelMap {
    /// Sorted numerically when every label parses as an integer, otherwise
    /// lexicographically. Category 0 is the lowest label.
    pub fn from_raw<S: AsRef<str>>(raw: &[S]) -> Self {
        let mut labels: Vec<String> = raw.iter().map(|s| s.as_ref().to_string()).collect();
        labels.sort_by(|a, b| compare_labels(a, b));
        labels.dedup();
        Self { labels }
    }

    /// Identity map for labels 1..=n.
    pub fn numeric(n: usize) -> Self {
        Self { labels: (1..=n).map(|i| i.to_string()).collect() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn category(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, category: usize) -> &str {
        &self.labels[category]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

fn compare_labels(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// N × (P+1) when `has_intercept`, first column all ones.
    pub x: DMatrix<f64>,
    /// Zero-based categories.
    pub y: Vec<usize>,
    pub n_categories: usize,
    pub feature_names: Option<Vec<String>>,
    pub labels: LabelMap,
    pub has_intercept: bool,
}

impl Dataset {
    /// Build from raw covariates (no intercept column) and zero-based labels.
    pub fn from_covariates(
        covariates: DMatrix<f64>,
        y: Vec<usize>,
        labels: LabelMap,
        add_intercept: bool,
    ) -> Result<Self, DataError> {
        if covariates.nrows() != y.len() {
            return Err(DataError::Invalid(format!(
                "{} rows but {} labels",
                covariates.nrows(),
                y.len()
            )));
        }
        for ((row, col), v) in iter_entries(&covariates) {
            if !v.is_finite() {
                return Err(DataError::NonFinite { row, col });
            }
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= labels.len()) {
            return Err(DataError::Invalid(format!("category {bad} outside label map")));
        }
        let x = if add_intercept { with_intercept(&covariates) } else { covariates };
        Ok(Self {
            x,
            y,
            n_categories: labels.len(),
            feature_names: None,
            labels,
            has_intercept: add_intercept,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Number of covariates, not counting the intercept.
    pub fn n_covariates(&self) -> usize {
        self.x.ncols() - usize::from(self.has_intercept)
    }

    /// Covariate block without the intercept column.
    pub fn covariates(&self) -> DMatrix<f64> {
        if self.has_intercept {
            self.x.columns(1, self.x.ncols() - 1).into_owned()
        } else {
            self.x.clone()
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let x = self.x.select_rows(rows.iter());
        let y = rows.iter().map(|&r| self.y[r]).collect();
        Self { x, y, ..self.clone() }
    }

    /// Replace the design matrix while keeping labels and metadata.
    pub fn with_design(&self, x: DMatrix<f64>) -> Self {
        assert_eq!(x.nrows(), self.len());
        Self { x, feature_names: None, ..self.clone() }
    }

    /// Categories that have no observation.
    pub fn missing_categories(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n_categories];
        for &c in &self.y {
            seen[c] = true;
        }
        (0..self.n_categories).filter(|&c| !seen[c]).collect()
    }
}

fn iter_entries(m: &DMatrix<f64>) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |c| ((r, c), m[(r, c)])))
}

pub fn with_intercept(covariates: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = covariates.shape();
    DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { covariates[(r, c - 1)] })
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub format: Format,
    pub add_intercept: bool,
    /// Remap arbitrary labels to contiguous categories. When false, labels
    /// must already be the integers 1..=S.
    pub remap_labels: bool,
    /// Use this map instead of deriving one (test files, prediction data).
    pub label_map: Option<LabelMap>,
    /// Pad sparse rows to this many covariates.
    pub n_covariates: Option<usize>,
    pub label_column: String,
}

impl LoadOptions {
    pub fn new(format: Format) -> Self {
        Self {
            format,
            add_intercept: true,
            remap_labels: true,
            label_map: None,
            n_covariates: None,
            label_column: "label".to_string(),
        }
    }

    pub fn with_label_map(mut self, map: LabelMap) -> Self {
        self.label_map = Some(map);
        self
    }

    pub fn with_covariates(mut self, p: usize) -> Self {
        self.n_covariates = Some(p);
        self
    }
}

pub fn load_dataset(path: &Path, opts: &LoadOptions) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path)
        .map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    parse_dataset(&text, opts)
}

pub fn parse_dataset(text: &str, opts: &LoadOptions) -> Result<Dataset, DataError> {
    let (rows, raw_labels, names) = match opts.format {
        Format::Libsvm => parse_libsvm(text, opts.n_covariates)?,
        Format::Csv => parse_csv(text, &opts.label_column)?,
    };
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    let p = rows[0].len();
    if let Some(want) = opts.n_covariates {
        if p != want {
            return Err(DataError::DimensionMismatch { expected: want, found: p });
        }
    }
    let labels = match &opts.label_map {
        Some(map) => map.clone(),
        None => {
            let map = LabelMap::from_raw(&raw_labels);
            if !opts.remap_labels {
                check_contiguous(&map)?;
            }
            map
        }
    };
    let y = raw_labels
        .iter()
        .map(|l| labels.category(l).ok_or_else(|| DataError::UnknownLabel(l.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let cov = DMatrix::from_fn(rows.len(), p, |r, c| rows[r][c]);
    let mut ds = Dataset::from_covariates(cov, y, labels, opts.add_intercept)?;
    ds.feature_names = names;
    Ok(ds)
}

fn check_contiguous(map: &LabelMap) -> Result<(), DataError> {
    let ok = map.labels().iter().enumerate().all(|(i, l)| l.parse::<usize>() == Ok(i + 1));
    if ok {
        Ok(())
    } else {
        Err(DataError::LabelGap { expected: map.len(), found: map.labels().join(",") })
    }
}

type Parsed = (Vec<Vec<f64>>, Vec<String>, Option<Vec<String>>);

fn parse_libsvm(text: &str, min_p: Option<usize>) -> Result<Parsed, DataError> {
    let mut sparse: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| DataError::Parse { line: lineno + 1, msg };
        let mut tokens = line.split_whitespace();
        let label = tokens.next().ok_or_else(|| err("missing label".into()))?;
        let label = normalize_label(label);
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx, val) =
                tok.split_once(':').ok_or_else(|| err(format!("expected index:value, got {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("bad index {idx:?}")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            let val: f64 = val.parse().map_err(|_| err(format!("bad value {val:?}")))?;
            if !val.is_finite() {
                return Err(DataError::NonFinite { row: sparse.len(), col: idx - 1 });
            }
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        labels.push(label);
        sparse.push(entries);
    }
    let p = max_index.max(min_p.unwrap_or(0));
    let rows = sparse
        .into_iter()
        .map(|entries| {
            let mut row = vec![0.0; p];
            for (i, v) in entries {
                row[i] = v;
            }
            row
        })
        .collect();
    Ok((rows, labels, None))
}

// "+1" and "1" name the same class in LIBSVM files; so do "1" and "1.0".
fn normalize_label(label: &str) -> String {
    if let Ok(v) = label.parse::<f64>() {
        if v.fract() == 0.0 && v.abs() < 1e15 {
            return format!("{}", v as i64);
        }
    }
    label.to_string()
}

fn parse_csv(text: &str, label_column: &str) -> Result<Parsed, DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| DataError::Parse { line: 1, msg: e.to_string() })?
        .clone();
    if header.is_empty() {
        return Err(DataError::Empty);
    }
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingColumn(label_column.to_string()))?;
    let names: Vec<String> =
        header.iter().enumerate().filter(|(i, _)| *i != label_idx).map(|(_, h)| h.to_string()).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| DataError::Parse { line, msg: e.to_string() })?;
        if record.len() != header.len() {
            return Err(DataError::Parse {
                line,
                msg: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(names.len());
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                labels.push(normalize_label(field));
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| DataError::Parse { line, msg: format!("bad value {field:?}") })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite { row: rows.len(), col: row.len() });
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok((rows, labels, Some(names)))
}

/// Write covariates (without intercept) and original labels. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_dataset(ds: &Dataset, path: &Path, format: Format) -> Result<(), DataError> {
    let text = format_dataset(ds, format);
    let mut f =
        fs::File::create(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    f.write_all(text.as_bytes()).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

pub fn format_dataset(ds: &Dataset, format: Format) -> String {
    let cov = ds.covariates();
    let mut out = String::new();
    match format {
        Format::Libsvm => {
            for i in 0..ds.len() {
                out.push_str(ds.labels.label(ds.y[i]));
                for j in 0..cov.ncols() {
                    let v = cov[(i, j)];
                    if v != 0.0 {
                        out.push_str(&format!(" {}:{}", j + 1, v));
                    }
                }
                out.push('\n');
            }
        }
        Format::Csv => {
            let names: Vec<String> = match &ds.feature_names {
                Some(n) if n.len() == cov.ncols() => n.clone(),
                _ => (1..=cov.ncols()).map(|j| format!("x{j}")).collect(),
            };
            out.push_str("label");
            for n in &names {
                out.push(',');
                out.push_str(n);
            }
            out.push('\n');
            for i in 0..ds.len() {
                out.push_str(ds.labels.label(ds.y[i]));
                for j in 0..cov.ncols() {
                    out.push_str(&format!(",{}", cov[(i, j)]));
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Column-wise standardization fitted on a training set. Uses the
/// population (divide-by-N) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Columns with zero spread, passed through unchanged.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(covariates: &DMatrix<f64>) -> Self {
        let n = covariates.nrows() as f64;
        let mut mean = Vec::new();
        let mut sd = Vec::new();
        let mut constant = Vec::new();
        for col in covariates.column_iter() {
            let m = col.iter().sum::<f64>() / n;
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            let s = v.sqrt();
            let flat = !(s > 1e-12 * m.abs().max(1.0));
            mean.push(m);
            sd.push(s);
            constant.push(flat);
        }
        Self { mean, sd, constant }
    }

    pub fn apply(&self, covariates: &DMatrix<f64>) -> Result<DMatrix<f64>, DataError> {
        if covariates.ncols() != self.mean.len() {
            return Err(DataError::DimensionMismatch {
                expected: self.mean.len(),
                found: covariates.ncols(),
            });
        }
        Ok(DMatrix::from_fn(covariates.nrows(), covariates.ncols(), |r, c| {
            let v = covariates[(r, c)];
            if self.constant[c] {
                v
            } else {
                (v - self.mean[c]) / self.sd[c]
            }
        }))
    }

    pub fn apply_dataset(&self, ds: &Dataset) -> Result<Dataset, DataError> {
        let cov = self.apply(&ds.covariates())?;
        let x = if ds.has_intercept { with_intercept(&cov) } else { cov };
        Ok(Dataset { x, ..ds.clone() })
    }
}

/// Standardize a training set and return the record for replay on test data.
pub fn standardize(train: &Dataset) -> (Dataset, Standardizer) {
    let st = Standardizer::fit(&train.covariates());
    let out = st.apply_dataset(train).expect("fitted on the same columns");
    (out, st)
}

/// Positive RBF kernel width, used as exp(-width · ‖a - b‖²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelWidth(f64);

impl KernelWidth {
    pub fn new(width: f64) -> Result<Self, DataError> {
        if width > 0.0 && width.is_finite() {
            Ok(Self(width))
        } else {
            Err(DataError::Invalid(format!("kernel width must be positive, got {width}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// 2^-10, 2^-9, ..., 2^10.
    pub fn default_grid() -> Vec<KernelWidth> {
        (-10..=10).map(|e| KernelWidth(2f64.powi(e))).collect()
    }
}

/// Kernel design matrix: an intercept column followed by
/// exp(-width · ‖q - x_j‖²) for each training row x_j. Both inputs are raw
/// covariates without an intercept column.
pub fn rbf_kernel_features(
    train: &DMatrix<f64>,
    query: &DMatrix<f64>,
    width: KernelWidth,
) -> Result<DMatrix<f64>, DataError> {
    if train.ncols() != query.ncols() {
        return Err(DataError::DimensionMismatch { expected: train.ncols(), found: query.ncols() });
    }
    let w = width.get();
    Ok(DMatrix::from_fn(query.nrows(), train.nrows() + 1, |q, j| {
        if j == 0 {
            return 1.0;
        }
        let mut d2 = 0.0;
        for c in 0..train.ncols() {
            let d = query[(q, c)] - train[(j - 1, c)];
            d2 += d * d;
        }
        (-w * d2).exp()
    }))
}

/// Random partition of `0..n` with `round(n * train_fraction)` training rows.
pub fn random_split(n: usize, train_fraction: f64, stream: &RngStream) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream.rng());
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Split that keeps every category represented in the training part.
pub fn stratified_split(
    y: &[usize],
    n_categories: usize,
    train_fraction: f64,
    stream: &RngStream,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = stream.rng();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..n_categories {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        rows.shuffle(&mut rng);
        let k = ((rows.len() as f64) * train_fraction).round() as usize;
        let k = k.clamp(usize::from(!rows.is_empty()), rows.len());
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}
