//! Baseline forecasters and the direct and recursive evaluation protocols.

mod analog;
mod rollout;

pub use analog::{analog_forecast, AnalogForecaster};
pub use rollout::{
    evenly_spaced_starts, recursive_rollout, rollout_study, EvalTimeReport, RolloutConfig,
    RolloutCrash, RolloutError, RolloutStudy, StepStats,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, TrajectoryDataset};
use crate::metrics::{ForecastPair, MetricError};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("invalid task: {0}")]
    BadTask(String),
    #[error("window has {got} values, expected {rows} rows of {n_s}")]
    WindowShape { got: usize, rows: usize, n_s: usize },
    #[error("no admissible analog for lead {lead} (reference has {len} rows, window {m})")]
    NoCandidates { lead: usize, len: usize, m: usize },
    #[error("test set has {n_t} rows; window {m} plus lead {n} needs more")]
    TestTooShort { n_t: usize, m: usize, n: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Input length `m`, lead `n` and output length `l`, all in steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastTask {
    pub m: usize,
    pub n: usize,
    pub l: usize,
}

impl ForecastTask {
    /// Single-output task (`l = 1`).
    pub fn direct(m: usize, n: usize) -> Result<Self, ForecastError> {
        let t = Self { m, n, l: 1 };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.m == 0 || self.n == 0 || self.l == 0 {
            return Err(ForecastError::BadTask(format!(
                "m, n, l must be >= 1 (got m={}, n={}, l={})",
                self.m, self.n, self.l
            )));
        }
        Ok(())
    }
}

/// A model mapping a window of past states to the state `lead` steps after
/// the window's last row.
pub trait Forecaster: Sync {
    fn name(&self) -> &str;

    /// `window` holds `m` rows of `n_s` values, row-major, oldest first.
    fn predict(&self, window: &[f64], n_s: usize, lead: usize) -> Result<Vec<f64>, ForecastError>;
}

fn window_rows(window: &[f64], n_s: usize) -> Result<usize, ForecastError> {
    if n_s == 0 || window.is_empty() || !window.len().is_multiple_of(n_s) {
        return Err(ForecastError::WindowShape {
            got: window.len(),
            rows: window.len() / n_s.max(1),
            n_s,
        });
    }
    Ok(window.len() / n_s)
}

/// Last row of the window, whatever the lead.
pub fn persistence_forecast(window: &[f64], n_s: usize) -> Result<Vec<f64>, ForecastError> {
    let m = window_rows(window, n_s)?;
    Ok(window[(m - 1) * n_s..].to_vec())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Persistence;

impl Forecaster for Persistence {
    fn name(&self) -> &str {
        "persistence"
    }

    fn predict(&self, window: &[f64], n_s: usize, _lead: usize) -> Result<Vec<f64>, ForecastError> {
        persistence_forecast(window, n_s)
    }
}

/// Predicts from every admissible window of `test`: pair `i` uses rows
/// `i..i+m` and is scored against row `i + m - 1 + n`. Both sides of the
/// returned pair keep the absolute alignment of the truth rows.
pub fn direct_eval(
    forecaster: &dyn Forecaster,
    test: &TrajectoryDataset,
    task: ForecastTask,
) -> Result<ForecastPair, ForecastError> {
    task.validate()?;
    let ForecastTask { m, n, .. } = task;
    if test.n_t() < m + n {
        return Err(ForecastError::TestTooShort {
            n_t: test.n_t(),
            m,
            n,
        });
    }
    let count = test.n_t() - m - n + 1;
    let n_s = test.n_s();
    let preds: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|i| forecaster.predict(test.rows(i, i + m), n_s, n))
        .collect::<Result<_, _>>()?;

    let truth = test.slice(m - 1 + n, test.n_t())?;
    let pred = TrajectoryDataset::new(
        format!("{}-{}-n{}", test.name(), forecaster.name(), n),
        test.dt(),
        n_s,
        truth.start_index(),
        preds.concat(),
    )?;
    Ok(ForecastPair::new(pred, truth, n)?)
}
