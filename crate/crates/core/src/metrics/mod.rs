//! Forecast error metrics.
//!
//! State-space metrics (MSE, NMSE, MAE, NMAE) compare predicted and true
//! snapshots entry by entry. Index metrics apply the same formulas to the
//! per-state dynamical indices, restricted to states valid in both index
//! sets. DID keeps the sign of the index error; Wasserstein distances
//! compare the whole index distributions.

mod binning;
mod report;
mod wasserstein;

pub use binning::{quantile_bin_errors, BinnedErrorCurve};
pub use report::{build_report, ConditionedCurves, EvaluationReport};
pub use wasserstein::{combined_wd, wasserstein_1d, WassersteinSummary};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{NormStats, TrajectoryDataset};
use crate::indices::DynamicalIndices;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("shape mismatch: prediction {pred:?} vs truth {truth:?} (rows, columns)")]
    ShapeMismatch {
        pred: (usize, usize),
        truth: (usize, usize),
    },
    #[error("time step mismatch: prediction {pred} vs truth {truth}")]
    TimeStepMismatch { pred: f64, truth: f64 },
    #[error("lead time must be at least 1 step")]
    BadLead,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{0} is zero; normalized metric undefined")]
    ZeroDenominator(&'static str),
    #[error("no state is valid in both index sets")]
    NoValidOverlap,
    #[error("empty input")]
    Empty,
    #[error("non-finite input value")]
    NonFinite,
    #[error("need at least {need} valid samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("need at least 2 bins, got {0}")]
    BadBins(usize),
    #[error("latitude {0} outside [-90, 90]")]
    BadLatitude(f64),
    #[error("all latitude weights are zero")]
    ZeroWeights,
    #[error("{field}: {source}")]
    Field {
        field: &'static str,
        #[source]
        source: Box<MetricError>,
    },
}

impl MetricError {
    pub(crate) fn at(field: &'static str) -> impl FnOnce(MetricError) -> MetricError {
        move |e| MetricError::Field {
            field,
            source: Box::new(e),
        }
    }
}

/// Aligned prediction and truth trajectories at a fixed lead.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastPair {
    pub pred: TrajectoryDataset,
    pub truth: TrajectoryDataset,
    pub lead_steps: usize,
}

impl ForecastPair {
    pub fn new(
        pred: TrajectoryDataset,
        truth: TrajectoryDataset,
        lead_steps: usize,
    ) -> Result<Self, MetricError> {
        if (pred.n_t(), pred.n_s()) != (truth.n_t(), truth.n_s()) {
            return Err(MetricError::ShapeMismatch {
                pred: (pred.n_t(), pred.n_s()),
                truth: (truth.n_t(), truth.n_s()),
            });
        }
        if pred.dt() != truth.dt() {
            return Err(MetricError::TimeStepMismatch {
                pred: pred.dt(),
                truth: truth.dt(),
            });
        }
        if lead_steps == 0 {
            return Err(MetricError::BadLead);
        }
        Ok(Self {
            pred,
            truth,
            lead_steps,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Mse,
    Nmse,
    Mae,
    Nmae,
}

/// Which dynamical index a metric applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    D,
    Theta,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Normalizes a mean error by the truth statistics for the given kind.
fn normalize(raw: f64, kind: ErrorKind, mean: f64, std: f64, what: &'static str) -> Result<f64, MetricError> {
    match kind {
        ErrorKind::Mse | ErrorKind::Mae => Ok(raw),
        ErrorKind::Nmse => {
            if std == 0.0 {
                return Err(MetricError::ZeroDenominator(what));
            }
            Ok(raw / (std * std))
        }
        ErrorKind::Nmae => {
            if mean == 0.0 {
                return Err(MetricError::ZeroDenominator(what));
            }
            Ok(raw / mean.abs())
        }
    }
}

fn is_squared(kind: ErrorKind) -> bool {
    matches!(kind, ErrorKind::Mse | ErrorKind::Nmse)
}

/// State-space error over all entries of the pair. Normalized kinds use
/// `norm` when given, otherwise the mean/std of the truth entries.
pub fn state_error(
    pair: &ForecastPair,
    kind: ErrorKind,
    norm: Option<&NormStats>,
) -> Result<f64, MetricError> {
    let pred = pair.pred.as_slice();
    let truth = pair.truth.as_slice();
    let total: f64 = if is_squared(kind) {
        pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum()
    } else {
        pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum()
    };
    let raw = total / pred.len() as f64;
    let (mean, std) = match norm {
        Some(s) => (s.mean, s.std),
        None if matches!(kind, ErrorKind::Nmse | ErrorKind::Nmae) => mean_std(truth.iter().copied()),
        None => (f64::NAN, f64::NAN),
    };
    let what = if kind == ErrorKind::Nmse { "sigma_y" } else { "mu_y" };
    normalize(raw, kind, mean, std, what)
}

/// Mean squared error of each snapshot.
pub fn per_state_squared_error(pair: &ForecastPair) -> Vec<f64> {
    let n_s = pair.pred.n_s() as f64;
    pair.pred
        .iter_rows()
        .zip(pair.truth.iter_rows())
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n_s)
        .collect()
}

/// Index metric value with the number of states left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskedMetric {
    pub value: f64,
    pub n_used: usize,
    pub n_skipped: usize,
}

fn check_same_len(a: &DynamicalIndices, b: &DynamicalIndices) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// Indices of states valid in both sets.
pub fn joint_valid(pred: &DynamicalIndices, truth: &DynamicalIndices) -> Vec<usize> {
    (0..pred.len().min(truth.len()))
        .filter(|&i| pred.valid[i] && truth.valid[i])
        .collect()
}

fn index_values(idx: &DynamicalIndices, which: IndexKind) -> &[f64] {
    match which {
        IndexKind::D => &idx.d,
        IndexKind::Theta => &idx.theta,
    }
}

/// Error between predicted and true `d` or `theta` over jointly valid
/// states. Normalized kinds divide by the variance (NMSE) or mean (NMAE)
/// of the true index over those states.
pub fn di_error(
    pred: &DynamicalIndices,
    truth: &DynamicalIndices,
    kind: ErrorKind,
    which: IndexKind,
) -> Result<MaskedMetric, MetricError> {
    check_same_len(pred, truth)?;
    let mask = joint_valid(pred, truth);
    if mask.is_empty() {
        return Err(MetricError::NoValidOverlap);
    }
    let p = index_values(pred, which);
    let t = index_values(truth, which);
    let total: f64 = mask
        .iter()
        .map(|&i| {
            let e = p[i] - t[i];
            if is_squared(kind) {
                e * e
            } else {
                e.abs()
            }
        })
        .sum();
    let raw = total / mask.len() as f64;
    let (mean, std) = mean_std(mask.iter().map(|&i| t[i]));
    let what = match (kind, which) {
        (ErrorKind::Nmse, IndexKind::D) => "sigma_d",
        (ErrorKind::Nmse, IndexKind::Theta) => "sigma_theta",
        (_, IndexKind::D) => "mu_d",
        (_, IndexKind::Theta) => "mu_theta",
    };
    Ok(MaskedMetric {
        value: normalize(raw, kind, mean, std, what)?,
        n_used: mask.len(),
        n_skipped: pred.len() - mask.len(),
    })
}

/// Signed index differences of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DidSample {
    pub index: usize,
    pub did_d: f64,
    pub did_theta: f64,
    pub mse_state: f64,
}

/// `(d_pred - d_true, theta_pred - theta_true)` for every jointly valid state.
pub fn did(
    pred: &DynamicalIndices,
    truth: &DynamicalIndices,
    per_state_err: &[f64],
) -> Result<Vec<DidSample>, MetricError> {
    check_same_len(pred, truth)?;
    if per_state_err.len() != pred.len() {
        return Err(MetricError::LengthMismatch(per_state_err.len(), pred.len()));
    }
    Ok(joint_valid(pred, truth)
        .into_iter()
        .map(|i| DidSample {
            index: i,
            did_d: pred.d[i] - truth.d[i],
            did_theta: pred.theta[i] - truth.theta[i],
            mse_state: per_state_err[i],
        })
        .collect())
}

/// Percentage of DID samples in each sign quadrant of (DID_d, DID_theta).
/// Zero counts as positive.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quadrants {
    pub plus_plus: f64,
    pub plus_minus: f64,
    pub minus_plus: f64,
    pub minus_minus: f64,
}

impl Quadrants {
    pub fn as_array(&self) -> [f64; 4] {
        [self.plus_plus, self.plus_minus, self.minus_plus, self.minus_minus]
    }
}

pub fn did_quadrants(samples: &[DidSample]) -> Quadrants {
    if samples.is_empty() {
        return Quadrants::default();
    }
    let mut counts = [0usize; 4];
    for s in samples {
        let k = match (s.did_d >= 0.0, s.did_theta >= 0.0) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        counts[k] += 1;
    }
    let pct = |c: usize| 100.0 * c as f64 / samples.len() as f64;
    Quadrants {
        plus_plus: pct(counts[0]),
        plus_minus: pct(counts[1]),
        minus_plus: pct(counts[2]),
        minus_minus: pct(counts[3]),
    }
}

/// Latitude-weighted RMSE over `[n_t x n_lat x n_lon]` fields stored
/// row-major. Weights are `cos(lat) / mean(cos(lat))`; each sample
/// contributes the root of its weighted squared-error sum, then samples are
/// averaged. No division by the grid size is applied.
pub fn lat_weighted_rmse(
    pred: &[f64],
    truth: &[f64],
    lats_deg: &[f64],
    n_lon: usize,
) -> Result<f64, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch(pred.len(), truth.len()));
    }
    let n_lat = lats_deg.len();
    let per_sample = n_lat * n_lon;
    if per_sample == 0 || pred.is_empty() {
        return Err(MetricError::Empty);
    }
    if !pred.len().is_multiple_of(per_sample) {
        return Err(MetricError::LengthMismatch(pred.len(), per_sample));
    }
    let mut cosines = Vec::with_capacity(n_lat);
    for &lat in lats_deg {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(MetricError::BadLatitude(lat));
        }
        cosines.push(if lat.abs() == 90.0 { 0.0 } else { lat.to_radians().cos() });
    }
    let mean_cos = cosines.iter().sum::<f64>() / n_lat as f64;
    if mean_cos <= 0.0 {
        return Err(MetricError::ZeroWeights);
    }
    let weights: Vec<f64> = cosines.iter().map(|c| c / mean_cos).collect();
    let n_t = pred.len() / per_sample;
    let total: f64 = pred
        .chunks_exact(per_sample)
        .zip(truth.chunks_exact(per_sample))
        .map(|(p, t)| {
            let mut acc = 0.0;
            for (j, w) in weights.iter().enumerate() {
                let row = j * n_lon..(j + 1) * n_lon;
                let sq: f64 = p[row.clone()]
                    .iter()
                    .zip(&t[row])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                acc += w * sq;
            }
            acc.sqrt()
        })
        .sum();
    Ok(total / n_t as f64)
}
