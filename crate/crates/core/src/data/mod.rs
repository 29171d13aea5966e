//! Trajectory data model shared by every other module.
//!
//! A [`TrajectoryDataset`] is a time-major matrix: one row per snapshot,
//! each row the state flattened over space. Rows are stored contiguously
//! in row-major order so that any run of consecutive rows is itself a
//! contiguous slice (the analog forecaster relies on this).

mod io;

pub use io::{load_dataset, save_dataset, Format};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset must have at least one row and one column (got {n_t}x{n_s})")]
    Empty { n_t: usize, n_s: usize },
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error("state buffer has {got} values, expected {n_t}x{n_s}={expected}")]
    ShapeMismatch {
        n_t: usize,
        n_s: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite value {value} at row {row}, column {col}")]
    NonFinite { row: usize, col: usize, value: f64 },
    #[error("standard deviation of the training data is zero (constant dataset)")]
    ZeroStd,
    #[error("invalid split fractions ({train}, {val}, {test}): {reason}")]
    BadSplit {
        train: f64,
        val: f64,
        test: f64,
        reason: &'static str,
    },
    #[error("cannot split {0} rows, need at least 3")]
    TooShortToSplit(usize),
    #[error("row range {start}..{end} out of bounds for {n_t} rows")]
    RowRange { start: usize, end: usize, n_t: usize },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("ragged row {row}: expected {expected} columns, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("expected {expected} data rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("binary payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("bad magic bytes {0:?}, expected \"DYTR\"")]
    Magic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Time-major matrix of system states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    name: String,
    dt: f64,
    n_t: usize,
    n_s: usize,
    start_index: u64,
    states: Vec<f64>,
}

impl TrajectoryDataset {
    /// Validates shape, time step and finiteness of every entry.
    pub fn new(
        name: impl Into<String>,
        dt: f64,
        n_s: usize,
        start_index: u64,
        states: Vec<f64>,
    ) -> Result<Self, DataError> {
        if n_s == 0 || states.is_empty() {
            return Err(DataError::Empty {
                n_t: states.len().checked_div(n_s).unwrap_or(0),
                n_s,
            });
        }
        if !states.len().is_multiple_of(n_s) {
            return Err(DataError::ShapeMismatch {
                n_t: states.len() / n_s,
                n_s,
                got: states.len(),
                expected: (states.len() / n_s) * n_s,
            });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(DataError::BadTimeStep(dt));
        }
        if let Some(pos) = states.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                row: pos / n_s,
                col: pos % n_s,
                value: states[pos],
            });
        }
        Ok(Self {
            name: name.into(),
            dt,
            n_t: states.len() / n_s,
            n_s,
            start_index,
            states,
        })
    }

    /// Builds a dataset from a list of equally sized rows.
    pub fn from_rows(
        name: impl Into<String>,
        dt: f64,
        rows: &[Vec<f64>],
    ) -> Result<Self, DataError> {
        let n_s = rows.first().map_or(0, Vec::len);
        let mut states = Vec::with_capacity(rows.len() * n_s);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_s {
                return Err(DataError::Ragged {
                    row: i,
                    expected: n_s,
                    found: r.len(),
                });
            }
            states.extend_from_slice(r);
        }
        Self::new(name, dt, n_s, 0, states)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of snapshots.
    pub fn n_t(&self) -> usize {
        self.n_t
    }

    /// Flattened state dimension.
    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn start_index(&self) -> u64 {
        self.start_index
    }

    /// Absolute model time of row `i`.
    pub fn time(&self, i: usize) -> f64 {
        (self.start_index + i as u64) as f64 * self.dt
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.states[i * self.n_s..(i + 1) * self.n_s]
    }

    /// Consecutive rows `start..end` as one contiguous slice.
    pub fn rows(&self, start: usize, end: usize) -> &[f64] {
        &self.states[start * self.n_s..end * self.n_s]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.states
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.states
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.states.chunks_exact(self.n_s)
    }

    /// Copies rows `start..end`, keeping absolute time alignment.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self, DataError> {
        if start >= end || end > self.n_t {
            return Err(DataError::RowRange {
                start,
                end,
                n_t: self.n_t,
            });
        }
        Ok(Self {
            name: self.name.clone(),
            dt: self.dt,
            n_t: end - start,
            n_s: self.n_s,
            start_index: self.start_index + start as u64,
            states: self.rows(start, end).to_vec(),
        })
    }

    /// Gathers the given rows (in the given order) into a new dataset.
    /// The result has `start_index` 0 since rows need not be contiguous.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, DataError> {
        let mut states = Vec::with_capacity(rows.len() * self.n_s);
        for &r in rows {
            if r >= self.n_t {
                return Err(DataError::RowRange {
                    start: r,
                    end: r + 1,
                    n_t: self.n_t,
                });
            }
            states.extend_from_slice(self.row(r));
        }
        Self::new(self.name.clone(), self.dt, self.n_s, 0, states)
    }

    fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            name: self.name.clone(),
            dt: self.dt,
            n_t: self.n_t,
            n_s: self.n_s,
            start_index: self.start_index,
            states: self.states.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Scalar mean and standard deviation used for z-score normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub fn new(mean: f64, std: f64) -> Result<Self, DataError> {
        if !(std > 0.0 && std.is_finite()) || !mean.is_finite() {
            return Err(DataError::ZeroStd);
        }
        Ok(Self { mean, std })
    }
}

/// Mean and population standard deviation over all entries (two-pass).
pub fn compute_norm_stats(train: &TrajectoryDataset) -> Result<NormStats, DataError> {
    let n = train.states.len() as f64;
    let mean = train.states.iter().sum::<f64>() / n;
    let var = train
        .states
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Err(DataError::ZeroStd);
    }
    NormStats::new(mean, std)
}

pub fn zscore(dataset: &TrajectoryDataset, stats: &NormStats) -> TrajectoryDataset {
    let NormStats { mean, std } = *stats;
    dataset.map_values(|v| (v - mean) / std)
}

pub fn inverse_zscore(dataset: &TrajectoryDataset, stats: &NormStats) -> TrajectoryDataset {
    let NormStats { mean, std } = *stats;
    dataset.map_values(|v| v * std + mean)
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.70,
            val_frac: 0.15,
            test_frac: 0.15,
        }
    }
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64) -> Result<Self, DataError> {
        let spec = Self {
            train_frac,
            val_frac,
            test_frac,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let err = |reason| DataError::BadSplit {
            train: self.train_frac,
            val: self.val_frac,
            test: self.test_frac,
            reason,
        };
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(err("each fraction must lie in (0, 1)"));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(err("fractions must sum to 1"));
        }
        Ok(())
    }
}

/// Contiguous train/validation/test partition. Sizes are
/// `floor(frac * n_t)` for train and validation; the remainder goes to test.
pub fn split(
    dataset: &TrajectoryDataset,
    spec: &SplitSpec,
) -> Result<(TrajectoryDataset, TrajectoryDataset, TrajectoryDataset), DataError> {
    spec.validate()?;
    let n = dataset.n_t();
    if n < 3 {
        return Err(DataError::TooShortToSplit(n));
    }
    let n_train = (spec.train_frac * n as f64).floor() as usize;
    let n_val = (spec.val_frac * n as f64).floor() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(DataError::TooShortToSplit(n));
    }
    let b1 = n_train;
    let b2 = n_train + n_val;
    let mut train = dataset.slice(0, b1)?;
    let mut val = dataset.slice(b1, b2)?;
    let mut test = dataset.slice(b2, n)?;
    train.set_name(format!("{}-train", dataset.name()));
    val.set_name(format!("{}-val", dataset.name()));
    test.set_name(format!("{}-test", dataset.name()));
    Ok((train, val, test))
}
