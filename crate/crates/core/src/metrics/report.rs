use serde::{Deserialize, Serialize};

use super::{
    combined_wd, di_error, did, did_quadrants, joint_valid, per_state_squared_error,
    quantile_bin_errors, state_error, BinnedErrorCurve, DidSample, ErrorKind, ForecastPair,
    IndexKind, MetricError, Quadrants,
};
use crate::data::NormStats;
use crate::indices::DynamicalIndices;

/// Error curves conditioned on the true `d` and the true `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionedCurves {
    pub d: BinnedErrorCurve,
    pub theta: BinnedErrorCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mse: f64,
    pub nmse: f64,
    pub mae: f64,
    pub nmae: f64,
    pub mse_d: f64,
    pub mse_theta: f64,
    pub nmse_d: f64,
    pub nmse_theta: f64,
    pub mae_d: f64,
    pub mae_theta: f64,
    pub nmae_d: f64,
    pub nmae_theta: f64,
    pub wd: f64,
    pub wd_d: f64,
    pub wd_theta: f64,
    pub mean_d_pred: f64,
    pub mean_theta_pred: f64,
    pub mean_d_true: f64,
    pub mean_theta_true: f64,
    pub did: Vec<DidSample>,
    pub quadrants: Quadrants,
    pub curves: ConditionedCurves,
    pub n_valid: usize,
    pub n_skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat_rmse: Option<f64>,
}

fn valid_mean(idx: &DynamicalIndices, which: IndexKind) -> f64 {
    let (sum, n) = idx.valid_pairs().fold((0.0, 0usize), |(s, n), (d, t)| {
        (s + if which == IndexKind::D { d } else { t }, n + 1)
    });
    sum / n as f64
}

/// Assembles every metric for one forecast pair and its index sets.
///
/// Normalized state metrics use `norm` when given, else the truth
/// statistics. Curves condition the per-state MSE on the true indices of
/// jointly valid states.
pub fn build_report(
    pair: &ForecastPair,
    pred_idx: &DynamicalIndices,
    true_idx: &DynamicalIndices,
    norm: Option<&NormStats>,
    n_bins: usize,
) -> Result<EvaluationReport, MetricError> {
    if pred_idx.len() != pair.pred.n_t() || true_idx.len() != pair.truth.n_t() {
        return Err(MetricError::LengthMismatch(pred_idx.len(), pair.pred.n_t()));
    }
    let se = |kind, field| state_error(pair, kind, norm).map_err(MetricError::at(field));
    let di = |kind, which, field| {
        di_error(pred_idx, true_idx, kind, which)
            .map(|m| m.value)
            .map_err(MetricError::at(field))
    };

    let per_state = per_state_squared_error(pair);
    let samples = did(pred_idx, true_idx, &per_state).map_err(MetricError::at("did"))?;
    let wd = combined_wd(pred_idx, true_idx).map_err(MetricError::at("wd"))?;

    let mask = joint_valid(pred_idx, true_idx);
    let masked = |values: &[f64]| -> Vec<f64> {
        (0..values.len())
            .map(|i| if mask.binary_search(&i).is_ok() { values[i] } else { f64::NAN })
            .collect()
    };
    let curves = ConditionedCurves {
        d: quantile_bin_errors(&masked(&true_idx.d), &per_state, n_bins)
            .map_err(MetricError::at("curves.d"))?,
        theta: quantile_bin_errors(&masked(&true_idx.theta), &per_state, n_bins)
            .map_err(MetricError::at("curves.theta"))?,
    };

    Ok(EvaluationReport {
        mse: se(ErrorKind::Mse, "mse")?,
        nmse: se(ErrorKind::Nmse, "nmse")?,
        mae: se(ErrorKind::Mae, "mae")?,
        nmae: se(ErrorKind::Nmae, "nmae")?,
        mse_d: di(ErrorKind::Mse, IndexKind::D, "mse_d")?,
        mse_theta: di(ErrorKind::Mse, IndexKind::Theta, "mse_theta")?,
        nmse_d: di(ErrorKind::Nmse, IndexKind::D, "nmse_d")?,
        nmse_theta: di(ErrorKind::Nmse, IndexKind::Theta, "nmse_theta")?,
        mae_d: di(ErrorKind::Mae, IndexKind::D, "mae_d")?,
        mae_theta: di(ErrorKind::Mae, IndexKind::Theta, "mae_theta")?,
        nmae_d: di(ErrorKind::Nmae, IndexKind::D, "nmae_d")?,
        nmae_theta: di(ErrorKind::Nmae, IndexKind::Theta, "nmae_theta")?,
        wd: wd.wd,
        wd_d: wd.wd_d,
        wd_theta: wd.wd_theta,
        mean_d_pred: valid_mean(pred_idx, IndexKind::D),
        mean_theta_pred: valid_mean(pred_idx, IndexKind::Theta),
        mean_d_true: valid_mean(true_idx, IndexKind::D),
        mean_theta_true: valid_mean(true_idx, IndexKind::Theta),
        quadrants: did_quadrants(&samples),
        did: samples,
        curves,
        n_valid: mask.len(),
        n_skipped: pred_idx.len() - mask.len(),
        lat_rmse: None,
    })
}
