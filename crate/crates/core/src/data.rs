//! Training data: synthetic generators and CSV loading.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Tensor,
}

impl Dataset {
    pub fn new(x: Tensor, y: Tensor) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} label rows",
                x.rows(),
                y.rows()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Blobs,
    Circles,
    Xor,
    LinearRegression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Binary,
    OneHot(usize),
    Continuous,
}

fn default_samples() -> usize {
    200
}
fn default_features() -> usize {
    2
}
fn default_noise() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}
fn default_label_columns() -> usize {
    1
}

/// Where the data comes from and how it is shaped. Exactly one of
/// `generator` and `path` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Input width for blobs and linear_regression.
    #[serde(default = "default_features")]
    pub features: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Min-max scale every feature column into [-1, 1].
    #[serde(default = "default_true")]
    pub normalize: bool,
    /// Min-max scale every feature column into this range instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_range: Option<[f64; 2]>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_kind: Option<LabelKind>,
    /// CSV only.
    #[serde(default)]
    pub header: bool,
    /// CSV only: how many trailing columns hold labels.
    #[serde(default = "default_label_columns")]
    pub label_columns: usize,
}

impl DatasetSpec {
    pub fn generated(generator: Generator, samples: usize, seed: u64) -> Self {
        Self {
            generator: Some(generator),
            path: None,
            samples,
            features: default_features(),
            noise: default_noise(),
            normalize: true,
            feature_range: None,
            seed,
            label_kind: None,
            header: false,
            label_columns: 1,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, header: bool, label_columns: usize) -> Self {
        Self {
            path: Some(path.into()),
            generator: None,
            header,
            label_columns,
            ..Self::generated(Generator::Blobs, 0, 0)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidDataset(e.to_string()))
    }

    fn label_kind(&self) -> LabelKind {
        self.label_kind.unwrap_or(match self.generator {
            Some(Generator::LinearRegression) => LabelKind::Continuous,
            _ => LabelKind::Binary,
        })
    }

    /// Relative CSV paths are resolved against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(p) = &self.path {
            if p.is_relative() {
                self.path = Some(base.join(p));
            }
        }
    }
}

/// Loads a CSV file or runs a generator, then applies feature scaling.
pub fn load_or_generate(spec: &DatasetSpec) -> Result<Dataset> {
    let mut data = match (&spec.generator, &spec.path) {
        (Some(g), None) => generate(*g, spec)?,
        (None, Some(path)) => load_csv(path, spec.header, spec.label_columns)?,
        _ => {
            return Err(Error::InvalidDataset(
                "exactly one of `generator` and `path` must be given".into(),
            ))
        }
    };
    if let Some([lo, hi]) = spec.feature_range {
        if !(lo < hi) {
            return Err(Error::InvalidDataset("feature_range must be increasing".into()));
        }
        rescale_columns(&mut data.x, lo, hi);
    } else if spec.normalize {
        rescale_columns(&mut data.x, -1.0, 1.0);
    }
    Ok(data)
}

/// Min-max scales each column into `[lo, hi]`; constant columns map to the
/// midpoint.
pub fn rescale_columns(x: &mut Tensor, lo: f64, hi: f64) {
    let (rows, cols) = (x.rows(), x.cols());
    for c in 0..cols {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in 0..rows {
            let v = x.get(r, c);
            min = min.min(v);
            max = max.max(v);
        }
        for r in 0..rows {
            let v = if max > min {
                lo + (hi - lo) * (x.get(r, c) - min) / (max - min)
            } else {
                0.5 * (lo + hi)
            };
            x.set(r, c, v.clamp(lo, hi));
        }
    }
}

fn labels_for(classes: &[usize], kind: LabelKind) -> Result<Tensor> {
    let n = classes.len();
    match kind {
        LabelKind::Binary => {
            if classes.iter().any(|&c| c > 1) {
                return Err(Error::InvalidDataset(
                    "binary labels need exactly two classes".into(),
                ));
            }
            Tensor::new(n, 1, classes.iter().map(|&c| c as f64).collect())
        }
        LabelKind::OneHot(k) => {
            if k < 2 || classes.iter().any(|&c| c >= k) {
                return Err(Error::InvalidDataset(format!(
                    "one_hot({k}) cannot encode the generated classes"
                )));
            }
            let mut y = Tensor::zeros(n, k);
            for (r, &c) in classes.iter().enumerate() {
                y.set(r, c, 1.0);
            }
            Ok(y)
        }
        LabelKind::Continuous => Err(Error::InvalidDataset(
            "continuous labels only come from linear_regression".into(),
        )),
    }
}

fn generate(generator: Generator, spec: &DatasetSpec) -> Result<Dataset> {
    if spec.samples == 0 {
        return Err(Error::InvalidDataset("samples must be >= 1".into()));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::InvalidDataset("noise must be finite and >= 0".into()));
    }
    let mut rng = Rng::seeded(spec.seed);
    let n = spec.samples;
    let kind = spec.label_kind();
    match generator {
        Generator::Blobs => {
            let k = match kind {
                LabelKind::OneHot(k) => k,
                _ => 2,
            };
            let d = spec.features.max(1);
            let centers: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..d).map(|_| rng.uniform(-5.0, 5.0)).collect())
                .collect();
            let mut x = Vec::with_capacity(n * d);
            let mut classes = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % k;
                for &m in &centers[c] {
                    x.push(rng.normal(m, spec.noise));
                }
                classes.push(c);
            }
            Dataset::new(Tensor::new(n, d, x)?, labels_for(&classes, kind)?)
        }
        Generator::Circles => {
            let mut x = Vec::with_capacity(n * 2);
            let mut classes = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % 2;
                let radius = if c == 0 { 1.0 } else { 0.5 };
                let theta = rng.uniform(0.0, std::f64::consts::TAU);
                x.push(radius * theta.cos() + rng.normal(0.0, spec.noise));
                x.push(radius * theta.sin() + rng.normal(0.0, spec.noise));
                classes.push(c);
            }
            Dataset::new(Tensor::new(n, 2, x)?, labels_for(&classes, kind)?)
        }
        Generator::Xor => {
            const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)];
            let mut x = Vec::with_capacity(n * 2);
            let mut classes = Vec::with_capacity(n);
            for i in 0..n {
                let (a, b) = CORNERS[i % 4];
                let (a, b) = if spec.noise > 0.0 {
                    (rng.normal(a, spec.noise), rng.normal(b, spec.noise))
                } else {
                    (a, b)
                };
                x.push(a);
                x.push(b);
                classes.push(usize::from((i % 4 == 1) || (i % 4 == 2)));
            }
            Dataset::new(Tensor::new(n, 2, x)?, labels_for(&classes, kind)?)
        }
        Generator::LinearRegression => {
            if kind != LabelKind::Continuous {
                return Err(Error::InvalidDataset(
                    "linear_regression produces continuous labels".into(),
                ));
            }
            let d = spec.features.max(1);
            let coef: Vec<f64> = (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let bias = rng.uniform(-0.5, 0.5);
            let mut x = Vec::with_capacity(n * d);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let mut target = bias;
                for &w in &coef {
                    let v = rng.uniform(-1.0, 1.0);
                    target += w * v;
                    x.push(v);
                }
                y.push(target + rng.normal(0.0, spec.noise));
            }
            Dataset::new(Tensor::new(n, d, x)?, Tensor::new(n, 1, y)?)
        }
    }
}

/// Reads numeric CSV: leading columns are features, the trailing
/// `label_columns` are labels.
pub fn load_csv(path: &Path, header: bool, label_columns: usize) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_csv(&text, header, label_columns)
}

pub fn parse_csv(text: &str, header: bool, label_columns: usize) -> Result<Dataset> {
    if label_columns == 0 {
        return Err(Error::InvalidDataset("label_columns must be >= 1".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut width = None;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            row: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(rows + 1);
        let cols = record.len();
        if cols <= label_columns {
            return Err(Error::Csv {
                row,
                reason: format!("{cols} columns leaves no features"),
            });
        }
        if *width.get_or_insert(cols) != cols {
            return Err(Error::Csv {
                row,
                reason: format!("expected {} columns, found {cols}", width.unwrap()),
            });
        }
        for (i, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                row,
                reason: format!("column {} is not numeric: {cell:?}", i + 1),
            })?;
            if i < cols - label_columns {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
        rows += 1;
    }
    let cols = width.ok_or_else(|| Error::InvalidDataset("CSV has no data rows".into()))?;
    Dataset::new(
        Tensor::new(rows, cols - label_columns, xs)?,
        Tensor::new(rows, label_columns, ys)?,
    )
}
