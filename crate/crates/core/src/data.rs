//! Datasets: CSV ingestion, train-only normalization, and seeded splits.

use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::Label;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification { num_classes: usize },
}

impl Task {
    /// Width of the leaf value vectors.
    pub fn num_outputs(&self) -> usize {
        match *self {
            Task::Regression => 1,
            Task::Classification { num_classes } => num_classes,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Task::Classification { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Values(Vec<f64>),
    Classes(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Values(v) => v.len(),
            Targets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Values(v) => Targets::Values(idx.iter().map(|&i| v[i]).collect()),
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    targets: Targets,
    task: Task,
    normalization: Option<NormalizationStats>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, targets: Targets, task: Task) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::data("dataset has no rows"));
        }
        if features.nrows() != targets.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::data("features contain non-finite values"));
        }
        match (&targets, task) {
            (Targets::Values(v), Task::Regression) => {
                if !v.iter().all(|y| y.is_finite()) {
                    return Err(Error::data("targets contain non-finite values"));
                }
            }
            (Targets::Classes(c), Task::Classification { num_classes }) => {
                if num_classes < 2 {
                    return Err(Error::config("classification needs at least two classes"));
                }
                if let Some(&bad) = c.iter().find(|&&k| k >= num_classes) {
                    return Err(Error::data(format!(
                        "class {bad} out of range for {num_classes} classes"
                    )));
                }
            }
            _ => return Err(Error::config("targets do not match the task")),
        }
        Ok(Self {
            features,
            targets,
            task,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn label(&self, i: usize) -> Label {
        match &self.targets {
            Targets::Values(v) => Label::Value(v[i]),
            Targets::Classes(c) => Label::Class(c[i]),
        }
    }

    /// Stats this dataset was normalized with, if any.
    pub fn normalization(&self) -> Option<&NormalizationStats> {
        self.normalization.as_ref()
    }

    /// Rows at `idx`, in order (repeats allowed).
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        if idx.is_empty() {
            return Err(Error::data("subset is empty"));
        }
        Ok(Dataset {
            features: self.features.select(Axis(0), idx),
            targets: self.targets.select(idx),
            task: self.task,
            normalization: self.normalization.clone(),
        })
    }

    /// Widens the class count, e.g. so a test split agrees with its training split.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        match &mut self.task {
            Task::Classification { num_classes: k } if num_classes >= *k => {
                *k = num_classes;
                Ok(self)
            }
            Task::Classification { num_classes: k } => Err(Error::data(format!(
                "dataset has labels up to class {}, cannot narrow to {num_classes}",
                *k - 1
            ))),
            Task::Regression => Err(Error::config("regression data has no classes")),
        }
    }
}

/// Which CSV column holds the label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "last" => LabelColumn::Last,
            _ => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    Classification,
}

struct RawTable {
    header: Option<Vec<String>>,
    rows: Vec<Vec<f64>>,
    width: usize,
}

fn read_table(path: &Path, has_header: bool) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::data(format!("{}: {io}", path.display())),
            other => Error::data(format!("{}: {other:?}", path.display())),
        })?;
    let header = if has_header {
        Some(reader.headers()?.iter().map(str::to_string).collect::<Vec<_>>())
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut width = header.as_ref().map(Vec::len);
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                column: record.len(),
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let mut row = Vec::with_capacity(expected);
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                column: col,
                message: format!("non-numeric value '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: col,
                    message: format!("non-finite value '{cell}'"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }
    Ok(RawTable {
        header,
        width: width.unwrap_or(0),
        rows,
    })
}

fn resolve_column(table: &RawTable, label: &LabelColumn) -> Result<usize> {
    let idx = match label {
        LabelColumn::Last => table.width.checked_sub(1),
        LabelColumn::Index(i) => Some(*i),
        LabelColumn::Name(name) => {
            let header = table
                .header
                .as_ref()
                .ok_or_else(|| Error::data("label column given by name but file has no header"))?;
            header.iter().position(|h| h == name)
        }
    };
    match idx {
        Some(i) if i < table.width => Ok(i),
        _ => Err(Error::data(format!("label column {label:?} not found"))),
    }
}

/// Reads a numeric CSV file; the label column is split off and every other column
/// becomes a feature. Categorical encodings are the caller's job.
pub fn load_csv(
    path: impl AsRef<Path>,
    label: &LabelColumn,
    has_header: bool,
    kind: TaskKind,
) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_table(path, has_header)?;
    let col = resolve_column(&table, label)?;
    let n = table.rows.len();
    let d = table.width - 1;
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for (i, row) in table.rows.iter().enumerate() {
        let mut out = features.row_mut(i);
        let mut k = 0;
        for (j, &v) in row.iter().enumerate() {
            if j == col {
                labels.push(v);
            } else {
                out[k] = v;
                k += 1;
            }
        }
    }
    match kind {
        TaskKind::Regression => Dataset::new(features, Targets::Values(labels), Task::Regression),
        TaskKind::Classification => {
            let mut classes = Vec::with_capacity(n);
            for (i, &v) in labels.iter().enumerate() {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: i as u64 + 1 + has_header as u64,
                        column: col,
                        message: format!("class label '{v}' is not a non-negative integer"),
                    });
                }
                classes.push(v as usize);
            }
            let num_classes = (classes.iter().max().copied().unwrap_or(0) + 1).max(2);
            Dataset::new(
                features,
                Targets::Classes(classes),
                Task::Classification { num_classes },
            )
        }
    }
}

/// Reads feature rows only, dropping `label` if given (for prediction inputs).
pub fn load_csv_features(
    path: impl AsRef<Path>,
    label: Option<&LabelColumn>,
    has_header: bool,
) -> Result<Array2<f64>> {
    let table = read_table(path.as_ref(), has_header)?;
    let drop = label.map(|l| resolve_column(&table, l)).transpose()?;
    let d = table.width - drop.is_some() as usize;
    let mut out = Array2::zeros((table.rows.len(), d));
    for (i, row) in table.rows.iter().enumerate() {
        let kept = row
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != drop)
            .map(|(_, v)| *v);
        for (k, v) in kept.enumerate() {
            out[[i, k]] = v;
        }
    }
    Ok(out)
}

/// Per-feature z-scoring and, for regression, min-max target scaling to `[0, 1]`,
/// all fitted on training rows only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub feature_mean: Vec<f64>,
    /// Population standard deviation; 1 for constant columns.
    pub feature_scale: Vec<f64>,
    pub target_range: Option<(f64, f64)>,
}

impl NormalizationStats {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.normalization.is_some() {
            return Err(Error::precondition("training data is already normalized"));
        }
        let x = train.features();
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let scale: Vec<f64> = x
            .std_axis(Axis(0), 0.0)
            .iter()
            .map(|&s| if s > 0.0 { s } else { 1.0 })
            .collect();
        let target_range = match &train.targets {
            Targets::Values(v) => {
                let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if max <= min {
                    return Err(Error::data(format!(
                        "degenerate regression targets: all equal to {min}"
                    )));
                }
                Some((min, max))
            }
            Targets::Classes(_) => None,
        };
        Ok(Self {
            feature_mean: mean.to_vec(),
            feature_scale: scale,
            target_range,
        })
    }

    /// Identity transform for `dim` features, no target scaling.
    pub fn identity(dim: usize) -> Self {
        Self {
            feature_mean: vec![0.0; dim],
            feature_scale: vec![1.0; dim],
            target_range: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn transform_features(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::shape(format!(
                "expected {} features, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        let mean = ArrayView1::from(&self.feature_mean);
        let scale = ArrayView1::from(&self.feature_scale);
        Ok((&x - &mean) / &scale)
    }

    pub fn transform_target(&self, y: f64) -> f64 {
        match self.target_range {
            Some((min, max)) => (y - min) / (max - min),
            None => y,
        }
    }

    pub fn inverse_target(&self, y: f64) -> f64 {
        match self.target_range {
            Some((min, max)) => y * (max - min) + min,
            None => y,
        }
    }

    /// Target units per normalized unit (1 when targets are not scaled).
    pub fn target_span(&self) -> f64 {
        self.target_range.map(|(a, b)| b - a).unwrap_or(1.0)
    }

    /// Applies these stats. Re-applying to data already carrying the same stats
    /// is a no-op.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if let Some(existing) = &data.normalization {
            if existing == self {
                return Ok(data.clone());
            }
            return Err(Error::precondition(
                "dataset was normalized with different statistics",
            ));
        }
        let features = self.transform_features(data.features())?;
        let targets = match &data.targets {
            Targets::Values(v) => {
                if self.target_range.is_none() {
                    return Err(Error::config("stats were fitted on classification data"));
                }
                Targets::Values(v.iter().map(|&y| self.transform_target(y)).collect())
            }
            Targets::Classes(c) => Targets::Classes(c.clone()),
        };
        Ok(Dataset {
            features,
            targets,
            task: data.task,
            normalization: Some(self.clone()),
        })
    }
}

/// Fits stats on `train`, then normalizes `train` and every dataset in `others`.
pub fn fit_apply_normalization(
    train: &Dataset,
    others: &[&Dataset],
) -> Result<(Dataset, Vec<Dataset>, NormalizationStats)> {
    let stats = NormalizationStats::fit(train)?;
    let train = stats.apply(train)?;
    let others = others
        .iter()
        .map(|d| stats.apply(d))
        .collect::<Result<Vec<_>>>()?;
    Ok((train, others, stats))
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Seeded shuffle, then contiguous train/val/test partition. Validation and test
/// sizes are `floor(n * ratio)`; the remainder goes to train.
pub fn split(data: &Dataset, ratios: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split ratios must sum to 1, got {ratios:?}")));
    }
    let n = data.len();
    let part = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let (n_val, n_test) = (part(ratios[1]), part(ratios[2]));
    let n_train = n - n_val - n_test;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::data(format!(
            "split of {n} rows by {ratios:?} leaves an empty part"
        )));
    }
    let idx = shuffled_indices(n, seed);
    Ok((
        data.subset(&idx[..n_train])?,
        data.subset(&idx[n_train..n_train + n_val])?,
        data.subset(&idx[n_train + n_val..])?,
    ))
}

/// Two-way variant of [`split`]: `floor(n * holdout)` rows held out.
pub fn split_holdout(data: &Dataset, holdout: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(holdout > 0.0 && holdout < 1.0) {
        return Err(Error::config(format!("holdout fraction must be in (0, 1), got {holdout}")));
    }
    let n = data.len();
    let n_hold = ((n as f64) * holdout + 1e-9).floor() as usize;
    if n_hold == 0 || n_hold == n {
        return Err(Error::data(format!(
            "holdout of {holdout} on {n} rows leaves an empty part"
        )));
    }
    let idx = shuffled_indices(n, seed);
    Ok((
        data.subset(&idx[..n - n_hold])?,
        data.subset(&idx[n - n_hold..])?,
    ))
}

/// Root mean squared error between two equally long slices.
pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    (pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
        .sqrt()
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / pred.len().max(1) as f64
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
