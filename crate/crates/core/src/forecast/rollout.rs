use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ForecastError, Forecaster};
use crate::attractor::ReferenceAttractor;
use crate::data::TrajectoryDataset;
use crate::generators::TimeScale;
use crate::indices::compute_indices;
use crate::metrics::{build_report, EvaluationReport, ForecastPair};

/// A rollout that produced a non-finite state.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutCrash {
    /// 1-based step of the first non-finite prediction.
    pub step: usize,
    /// The `step - 1` finite rows predicted before the crash, row-major.
    pub partial: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("rollout crashed at step {}", .0.step)]
    Crash(RolloutCrash),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
}

/// Feeds each one-step prediction back as the newest window row. The
/// window length is the number of rows in `init`. Returns `steps` rows
/// aligned to follow `init`.
pub fn recursive_rollout(
    forecaster: &dyn Forecaster,
    init: &TrajectoryDataset,
    steps: usize,
) -> Result<TrajectoryDataset, RolloutError> {
    if steps == 0 {
        return Err(ForecastError::BadTask("rollout needs steps >= 1".into()).into());
    }
    let (m, n_s) = (init.n_t(), init.n_s());
    let mut buf = Vec::with_capacity((m + steps) * n_s);
    buf.extend_from_slice(init.as_slice());
    for step in 1..=steps {
        let start = (step - 1) * n_s;
        let next = forecaster.predict(&buf[start..start + m * n_s], n_s, 1)?;
        if next.len() != n_s {
            return Err(ForecastError::WindowShape {
                got: next.len(),
                rows: 1,
                n_s,
            }
            .into());
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(RolloutError::Crash(RolloutCrash {
                step,
                partial: buf.split_off(m * n_s),
            }));
        }
        buf.extend_from_slice(&next);
    }
    let out = buf.split_off(m * n_s);
    let name = format!("{}-{}-rollout", init.name(), forecaster.name());
    Ok(TrajectoryDataset::new(
        name,
        init.dt(),
        n_s,
        init.start_index() + m as u64,
        out,
    )
    .map_err(ForecastError::from)?)
}

/// `n` distinct start positions spread evenly over `0..admissible`,
/// including both ends when `n >= 2`.
pub fn evenly_spaced_starts(admissible: usize, n: usize) -> Result<Vec<usize>, ForecastError> {
    if n == 0 || n > admissible {
        return Err(ForecastError::BadTask(format!(
            "{n} starts requested, {admissible} admissible"
        )));
    }
    if n == 1 {
        return Ok(vec![0]);
    }
    Ok((0..n).map(|j| j * (admissible - 1) / (n - 1)).collect())
}

/// Rollout study settings. Eval times are step indices in `1..=steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub m: usize,
    pub steps: usize,
    pub n_starts: usize,
    pub eval_times: Vec<usize>,
    pub q: f64,
    pub n_bins: usize,
    pub time_scale: Option<TimeScale>,
}

/// Ensemble error at one step, over trajectories still running.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub mean_mse: f64,
    pub std_mse: f64,
    pub survivors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTimeReport {
    pub step: usize,
    pub lt: Option<f64>,
    pub survivors: usize,
    /// `None` when the surviving ensemble could not be scored.
    pub report: Option<EvaluationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStudy {
    pub config: RolloutConfig,
    pub starts: Vec<usize>,
    /// Crash step per start, `None` for complete rollouts.
    pub crashes: Vec<Option<usize>>,
    pub per_step: Vec<StepStats>,
    pub reports: Vec<EvalTimeReport>,
}

impl RolloutStudy {
    /// `step,lt,mean_mse,std_mse,mse_d,mse_theta,wd,survivors`, one row per
    /// step; index columns are filled at eval times only.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "step,lt,mean_mse,std_mse,mse_d,mse_theta,wd,survivors")?;
        for s in &self.per_step {
            let lt = self
                .config
                .time_scale
                .map(|ts| ts.steps_to_lt(s.step).to_string())
                .unwrap_or_default();
            let di = self
                .reports
                .iter()
                .find(|r| r.step == s.step)
                .and_then(|r| r.report.as_ref())
                .map(|r| format!("{},{},{}", r.mse_d, r.mse_theta, r.wd))
                .unwrap_or_else(|| ",,".into());
            writeln!(w, "{},{},{},{},{},{}", s.step, lt, s.mean_mse, s.std_mse, di, s.survivors)?;
        }
        Ok(())
    }
}

/// Rolls out from `n_starts` evenly spaced windows of `test` and scores the
/// ensemble at each eval time: state errors, indices of predicted and true
/// states against `reference`, index metrics, Wasserstein distances and
/// DID quadrants. Crashed trajectories count only up to their crash step.
pub fn rollout_study(
    forecaster: &dyn Forecaster,
    test: &TrajectoryDataset,
    reference: &ReferenceAttractor,
    config: &RolloutConfig,
) -> Result<RolloutStudy, ForecastError> {
    let RolloutConfig { m, steps, .. } = *config;
    if m == 0 || steps == 0 {
        return Err(ForecastError::BadTask("m and steps must be >= 1".into()));
    }
    if let Some(&bad) = config.eval_times.iter().find(|&&t| t == 0 || t > steps) {
        return Err(ForecastError::BadTask(format!("eval time {bad} outside 1..={steps}")));
    }
    if test.n_t() < m + steps {
        return Err(ForecastError::TestTooShort {
            n_t: test.n_t(),
            m,
            n: steps,
        });
    }
    let starts = evenly_spaced_starts(test.n_t() - m - steps + 1, config.n_starts)?;

    let runs: Vec<(Vec<f64>, Option<usize>)> = starts
        .par_iter()
        .map(|&s| {
            let init = test.slice(s, s + m)?;
            match recursive_rollout(forecaster, &init, steps) {
                Ok(ds) => Ok((ds.into_vec(), None)),
                Err(RolloutError::Crash(c)) => Ok((c.partial, Some(c.step))),
                Err(RolloutError::Forecast(e)) => Err(e),
            }
        })
        .collect::<Result<_, ForecastError>>()?;

    let n_s = test.n_s();
    let truth_row = |s: usize, step: usize| s + m - 1 + step;
    let per_step = (1..=steps)
        .map(|step| {
            let mses: Vec<f64> = starts
                .iter()
                .zip(&runs)
                .filter(|(_, (rows, _))| rows.len() >= step * n_s)
                .map(|(&s, (rows, _))| {
                    let pred = &rows[(step - 1) * n_s..step * n_s];
                    let truth = test.row(truth_row(s, step));
                    pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n_s as f64
                })
                .collect();
            let n = mses.len();
            let mean = mses.iter().sum::<f64>() / n as f64;
            let var = mses.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            StepStats {
                step,
                mean_mse: if n == 0 { f64::NAN } else { mean },
                std_mse: if n == 0 { f64::NAN } else { var.sqrt() },
                survivors: n,
            }
        })
        .collect();

    let reports = config
        .eval_times
        .iter()
        .map(|&step| eval_at(step, &starts, &runs, test, reference, config, truth_row))
        .collect::<Result<_, _>>()?;

    Ok(RolloutStudy {
        config: config.clone(),
        crashes: runs.iter().map(|r| r.1).collect(),
        starts,
        per_step,
        reports,
    })
}

fn eval_at(
    step: usize,
    starts: &[usize],
    runs: &[(Vec<f64>, Option<usize>)],
    test: &TrajectoryDataset,
    reference: &ReferenceAttractor,
    config: &RolloutConfig,
    truth_row: impl Fn(usize, usize) -> usize,
) -> Result<EvalTimeReport, ForecastError> {
    let n_s = test.n_s();
    let mut pred = Vec::new();
    let mut rows = Vec::new();
    for (&s, (traj, _)) in starts.iter().zip(runs) {
        if traj.len() >= step * n_s {
            pred.extend_from_slice(&traj[(step - 1) * n_s..step * n_s]);
            rows.push(truth_row(s, step));
        }
    }
    let mut out = EvalTimeReport {
        step,
        lt: config.time_scale.map(|ts| ts.steps_to_lt(step)),
        survivors: rows.len(),
        report: None,
        skipped_reason: None,
    };
    if rows.is_empty() {
        out.skipped_reason = Some("no surviving trajectories".into());
        return Ok(out);
    }
    let truth = test.select_rows(&rows)?;
    let pred = TrajectoryDataset::new(format!("pred-step{step}"), test.dt(), n_s, 0, pred)?;
    let pred_idx = compute_indices(reference, &pred, config.q);
    let true_idx = compute_indices(reference, &truth, config.q);
    let pair = ForecastPair::new(pred, truth, step)?;
    match build_report(&pair, &pred_idx, &true_idx, None, config.n_bins) {
        Ok(r) => out.report = Some(r),
        Err(e) => out.skipped_reason = Some(e.to_string()),
    }
    Ok(out)
}
