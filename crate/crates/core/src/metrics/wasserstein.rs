use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::indices::DynamicalIndices;

/// First Wasserstein distance between the equally weighted empirical
/// distributions of `a` and `b`: the integral of `|F_a - F_b|` over the
/// merged support.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::Empty);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);

    // Walk the merged support; between consecutive support points both
    // CDFs are constant.
    let (mut i, mut j) = (0usize, 0usize);
    let mut x = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - x);
        x = next;
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WassersteinSummary {
    pub wd: f64,
    pub wd_d: f64,
    pub wd_theta: f64,
}

/// Wasserstein distances of the valid `d` and `theta` marginals and their
/// root-sum-square.
pub fn combined_wd(
    pred: &DynamicalIndices,
    truth: &DynamicalIndices,
) -> Result<WassersteinSummary, MetricError> {
    let collect = |idx: &DynamicalIndices| -> (Vec<f64>, Vec<f64>) { idx.valid_pairs().unzip() };
    let (pd, pt) = collect(pred);
    let (td, tt) = collect(truth);
    if pd.is_empty() || td.is_empty() {
        return Err(MetricError::TooFewSamples {
            need: 1,
            got: pd.len().min(td.len()),
        });
    }
    let wd_d = wasserstein_1d(&pd, &td)?;
    let wd_theta = wasserstein_1d(&pt, &tt)?;
    Ok(WassersteinSummary {
        wd: wd_d.hypot(wd_theta),
        wd_d,
        wd_theta,
    })
}
