//! CSV ingestion, z-score normalisation, train/validation splitting and model files.

use std::fs;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{Layer, NetworkState};
use crate::ols::OlsModel;
use crate::optim::SeededRng;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub features: Vec<String>,
    pub targets: Vec<String>,
}

impl ColumnSchema {
    pub fn new(features: Vec<String>, targets: Vec<String>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Config("no feature columns given".into()));
        }
        if targets.is_empty() {
            return Err(Error::Config("no target columns given".into()));
        }
        if let Some(dup) = features.iter().find(|f| targets.contains(f)) {
            return Err(Error::Config(format!(
                "column {dup:?} is both a feature and a target"
            )));
        }
        Ok(Self { features, targets })
    }
}

pub type Rows = Vec<Vec<f64>>;

/// Reads the named columns of a CSV file, one `Vec` per data row in file order.
pub fn load_columns(path: impl AsRef<Path>, columns: &[String]) -> Result<Rows> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_columns(file, columns)
}

pub fn read_columns(reader: impl Read, columns: &[String]) -> Result<Rows> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = csv.headers()?.clone();
    if header.is_empty() {
        return Err(Error::Empty("CSV header"));
    }
    let indices = columns
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(rows.len() as u64 + 2, |p| p.line());
        let row = indices
            .iter()
            .zip(columns)
            .map(|(&i, name)| {
                let cell = record.get(i).unwrap_or("").trim();
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row: line,
                        column: name.clone(),
                        value: cell.to_string(),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty("CSV data rows"));
    }
    Ok(rows)
}

/// Feature and target rows of a CSV file, in file order.
pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<(Rows, Rows)> {
    let mut all = schema.features.clone();
    all.extend(schema.targets.iter().cloned());
    let rows = load_columns(path, &all)?;
    Ok(split_columns(rows, schema.features.len()))
}

fn split_columns(rows: Rows, n: usize) -> (Rows, Rows) {
    rows.into_iter()
        .map(|mut r| {
            let t = r.split_off(n);
            (r, t)
        })
        .unzip()
}

pub fn write_csv(path: impl AsRef<Path>, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-column z-score parameters (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl NormalizationStats {
    /// `names` label the columns in error messages.
    pub fn fit(rows: &[Vec<f64>], names: &[String]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("rows to normalize"))?;
        let width = first.len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let count = rows.len() as f64;
        let mut means = vec![0.0; width];
        for r in rows {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= count);
        let mut stds = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in stds.iter_mut().zip(r).zip(&means) {
                *s += (v - m).powi(2);
            }
        }
        for (j, s) in stds.iter_mut().enumerate() {
            *s = (*s / count).sqrt();
            if !(*s > 0.0) {
                let name = names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
                return Err(Error::ConstantColumn(name));
            }
        }
        Ok(Self { means, stds })
    }

    pub fn width(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Rows> {
        self.map_rows(rows, |v, m, s| (v - m) / s)
    }

    pub fn invert(&self, rows: &[Vec<f64>]) -> Result<Rows> {
        self.map_rows(rows, |v, m, s| v * s + m)
    }

    fn map_rows(&self, rows: &[Vec<f64>], f: impl Fn(f64, f64, f64) -> f64) -> Result<Rows> {
        rows.iter()
            .map(|r| {
                if r.len() != self.width() {
                    return Err(Error::Dimension(format!(
                        "row has {} values, statistics cover {}",
                        r.len(),
                        self.width()
                    )));
                }
                Ok(r.iter()
                    .zip(self.means.iter().zip(&self.stds))
                    .map(|(&v, (&m, &s))| f(v, m, s))
                    .collect())
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.means.len() != self.stds.len() || self.means.is_empty() {
            return Err(Error::Malformed("normalization means and stds differ in length".into()));
        }
        if self.stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Malformed("normalization stds must be positive".into()));
        }
        Ok(())
    }
}

/// Z-scores `rows`. With `stats` given they are applied as-is; otherwise they are
/// fitted on `rows` first.
pub fn normalize(
    rows: &[Vec<f64>],
    stats: Option<&NormalizationStats>,
    names: &[String],
) -> Result<(Rows, NormalizationStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => NormalizationStats::fit(rows, names)?,
    };
    Ok((stats.apply(rows)?, stats))
}

/// Shuffles `rows` with `seed` and moves `round(val_fraction · len)` of them, clamped
/// so both parts keep at least one row, into the validation part.
pub fn split<T: Clone>(rows: &[T], val_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config(format!(
            "validation fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let total = rows.len();
    if total < 2 {
        return Err(Error::Config(format!(
            "need at least 2 rows to split into training and validation, got {total}"
        )));
    }
    let s = ((val_fraction * total as f64).round() as usize).clamp(1, total - 1);
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(SeededRng::new(seed).inner());
    let (train, val) = order.split_at(total - s);
    Ok((
        train.iter().map(|&i| rows[i].clone()).collect(),
        val.iter().map(|&i| rows[i].clone()).collect(),
    ))
}

/// Row-major matrix as stored in model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Matrix> for StoredMatrix {
    fn from(m: &Matrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().to_vec(),
        }
    }
}

impl StoredMatrix {
    fn to_matrix(&self, what: &str) -> Result<Matrix> {
        Matrix::new(self.rows, self.cols, self.data.clone()).map_err(|_| {
            Error::Malformed(format!(
                "{what}: declared {}x{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredLayer {
    pub units: usize,
    pub activation: String,
    pub weights: StoredMatrix,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StoredModel {
    Ols {
        coefficients: StoredMatrix,
    },
    Ann {
        input_dim: usize,
        layers: Vec<StoredLayer>,
        loss: String,
        optimizer: String,
    },
}

/// Everything needed to predict in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub feature_columns: Vec<String>,
    pub target_columns: Vec<String>,
    pub feature_stats: NormalizationStats,
    pub target_stats: NormalizationStats,
    pub seed: Option<u64>,
    pub model: StoredModel,
}

/// A model ready for prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Ols(OlsModel),
    Ann(NetworkState),
}

impl Predictor {
    /// Predicts normalised targets for normalised feature rows.
    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Rows> {
        match self {
            Predictor::Ols(model) => rows.iter().map(|r| model.predict(r)).collect(),
            Predictor::Ann(state) => {
                if rows.is_empty() {
                    return Ok(Vec::new());
                }
                let out = state.predict(&Matrix::from_columns(rows)?)?;
                Ok((0..out.cols()).map(|j| out.column(j)).collect())
            }
        }
    }
}

impl ModelFile {
    pub fn for_ols(model: &OlsModel, schema: &ColumnSchema, features: NormalizationStats, targets: NormalizationStats) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            feature_columns: schema.features.clone(),
            target_columns: schema.targets.clone(),
            feature_stats: features,
            target_stats: targets,
            seed: None,
            model: StoredModel::Ols {
                coefficients: (&model.b).into(),
            },
        }
    }

    pub fn for_network(
        state: &NetworkState,
        loss: &str,
        optimizer: &str,
        schema: &ColumnSchema,
        features: NormalizationStats,
        targets: NormalizationStats,
        seed: u64,
    ) -> Self {
        let layers = state
            .layers()
            .iter()
            .map(|l| StoredLayer {
                units: l.units(),
                activation: l.activation.to_string(),
                weights: (&l.weights).into(),
                biases: l.biases.as_slice().to_vec(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            feature_columns: schema.features.clone(),
            target_columns: schema.targets.clone(),
            feature_stats: features,
            target_stats: targets,
            seed: Some(seed),
            model: StoredModel::Ann {
                input_dim: state.input_dim(),
                layers,
                loss: loss.to_string(),
                optimizer: optimizer.to_string(),
            },
        }
    }

    /// Rebuilds the model, checking every declared dimension against the data.
    pub fn predictor(&self) -> Result<Predictor> {
        let n = self.feature_columns.len();
        let m = self.target_columns.len();
        self.feature_stats.validate()?;
        self.target_stats.validate()?;
        if self.feature_stats.width() != n || self.target_stats.width() != m {
            return Err(Error::Malformed("normalization statistics do not match the column lists".into()));
        }
        match &self.model {
            StoredModel::Ols { coefficients } => {
                let b = coefficients.to_matrix("coefficients")?;
                if b.shape() != (m, n + 1) {
                    return Err(Error::Malformed(format!(
                        "coefficients are {}x{}, expected {m}x{}",
                        b.rows(),
                        b.cols(),
                        n + 1
                    )));
                }
                Ok(Predictor::Ols(OlsModel::new(b)?))
            }
            StoredModel::Ann {
                input_dim, layers, ..
            } => {
                if *input_dim != n {
                    return Err(Error::Malformed(format!(
                        "input_dim {input_dim} but {n} feature columns"
                    )));
                }
                let mut built = Vec::with_capacity(layers.len());
                for (l, stored) in layers.iter().enumerate() {
                    let what = format!("layer {}", l + 1);
                    let weights = stored.weights.to_matrix(&what)?;
                    if weights.rows() != stored.units || stored.biases.len() != stored.units {
                        return Err(Error::Malformed(format!("{what}: unit count disagrees with arrays")));
                    }
                    let activation: Activation = stored.activation.parse()?;
                    let biases = Matrix::column_vector(stored.biases.clone())?;
                    built.push(Layer::new(weights, biases, activation)?);
                }
                let state = NetworkState::from_layers(n, built).map_err(|e| Error::Malformed(e.to_string()))?;
                if state.output_dim() != m {
                    return Err(Error::Malformed(format!(
                        "network has {} outputs but {m} target columns",
                        state.output_dim()
                    )));
                }
                Ok(Predictor::Ann(state))
            }
        }
    }

    /// Predictions in original units for feature rows in original units.
    pub fn predict(&self, feature_rows: &[Vec<f64>]) -> Result<Rows> {
        let normalized = self.feature_stats.apply(feature_rows)?;
        let out = self.predictor()?.predict_rows(&normalized)?;
        self.target_stats.invert(&out)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Malformed(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Malformed("missing format_version".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::Version {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::Malformed(e.to_string()))?;
        file.predictor()?;
        Ok(file)
    }
}

pub fn save_model(model: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelFile::from_json(&text)
}
