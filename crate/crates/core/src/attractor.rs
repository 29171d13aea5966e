//! Reference attractor and threshold exceedances of the negative-log
//! distance `g(x) = -ln |x - query|`.
//!
//! The threshold `g_q` is the type-7 empirical quantile of the finite `g`
//! values. Exact matches (distance zero, `g = +inf`) are dropped before
//! the quantile is taken and never appear among the exceedances.
//!
//! [`neg_log_distance_series`] + [`exceedances`] is the literal reference
//! path. [`query_exceedances`] and [`batch_exceedances`] produce bit-identical
//! results without materialising `g` for every reference row: since `g` is a
//! non-increasing function of the squared distance, the needed order
//! statistics of `g` are the images of the matching order statistics of the
//! squared distances, and only rows below a conservative cutoff are ever
//! passed through `ln`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TrajectoryDataset;

/// Quantile used to define the neighbourhood of a state (top 2% closest).
pub const DEFAULT_QUANTILE: f64 = 0.98;
/// Fewest exceedances for which an index is reported.
pub const MIN_EXCEEDANCES: usize = 30;
/// Smallest admissible reference set.
pub const MIN_REFERENCE_LEN: usize = 100;
/// Fewest finite `g` values needed to estimate a threshold.
pub const MIN_FINITE: usize = 100;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum AttractorError {
    #[error("reference set has {0} rows, need at least {MIN_REFERENCE_LEN}")]
    TooSmall(usize),
    #[error("query has {got} components, reference states have {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("quantile {0} outside (0.5, 1)")]
    BadQuantile(f64),
    #[error("only {0} finite distance values, need at least {MIN_FINITE}")]
    TooFewFinite(usize),
    #[error("only {count} exceedances out of {n_finite} finite values, need at least {MIN_EXCEEDANCES}")]
    TooFewExceedances { count: usize, n_finite: usize },
}

/// Immutable set of reference states, usually the training split.
#[derive(Debug, Clone)]
pub struct ReferenceAttractor {
    states: TrajectoryDataset,
    normalized: bool,
}

impl ReferenceAttractor {
    pub fn states(&self) -> &TrajectoryDataset {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.n_t()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_s(&self) -> usize {
        self.states.n_s()
    }

    pub fn dt(&self) -> f64 {
        self.states.dt()
    }

    /// Whether the stored states were z-scored.
    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn with_normalized(mut self, normalized: bool) -> Self {
        self.normalized = normalized;
        self
    }
}

pub fn build_reference(train: TrajectoryDataset) -> Result<ReferenceAttractor, AttractorError> {
    if train.n_t() < MIN_REFERENCE_LEN {
        return Err(AttractorError::TooSmall(train.n_t()));
    }
    Ok(ReferenceAttractor {
        states: train,
        normalized: false,
    })
}

/// Threshold, exceedance magnitudes and their reference time indices for
/// one query state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceSet {
    pub query_id: usize,
    pub g_q: f64,
    pub q: f64,
    pub u: Vec<f64>,
    pub times: Vec<usize>,
    pub n_finite: usize,
}

impl ExceedanceSet {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Squared Euclidean distance, summed in index order.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[inline]
fn neg_log_from_squared(d2: f64) -> f64 {
    -d2.sqrt().ln()
}

fn check_query(reference: &ReferenceAttractor, query: &[f64]) -> Result<(), AttractorError> {
    if query.len() != reference.n_s() {
        return Err(AttractorError::DimensionMismatch {
            expected: reference.n_s(),
            got: query.len(),
        });
    }
    Ok(())
}

fn check_quantile(q: f64) -> Result<(), AttractorError> {
    if !(q > 0.5 && q < 1.0) {
        return Err(AttractorError::BadQuantile(q));
    }
    Ok(())
}

/// `g_t = -ln(dist(ref_t, query))` for every reference row. Exact matches
/// give `+inf`.
pub fn neg_log_distance_series(
    reference: &ReferenceAttractor,
    query: &[f64],
) -> Result<Vec<f64>, AttractorError> {
    check_query(reference, query)?;
    Ok(reference
        .states
        .iter_rows()
        .map(|row| neg_log_from_squared(squared_distance(row, query)))
        .collect())
}

/// Type-7 quantile of ascending `sorted` values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        interpolate(sorted[lo], sorted[lo + 1], frac)
    } else {
        sorted[n - 1]
    }
}

#[inline]
fn interpolate(lo: f64, hi: f64, frac: f64) -> f64 {
    lo + frac * (hi - lo)
}

/// Exceedances of a `g` series over its `q`-quantile. Non-finite entries
/// are excluded from both the quantile and the exceedance set.
pub fn exceedances(g: &[f64], q: f64) -> Result<ExceedanceSet, AttractorError> {
    check_quantile(q)?;
    let mut finite: Vec<f64> = g.iter().copied().filter(|v| v.is_finite()).collect();
    let n_finite = finite.len();
    if n_finite < MIN_FINITE {
        return Err(AttractorError::TooFewFinite(n_finite));
    }
    finite.sort_by(f64::total_cmp);
    let g_q = quantile_sorted(&finite, q);
    let (mut u, mut times) = (Vec::new(), Vec::new());
    for (t, &v) in g.iter().enumerate() {
        if v.is_finite() && v > g_q {
            u.push(v - g_q);
            times.push(t);
        }
    }
    finish(0, g_q, q, u, times, n_finite)
}

fn finish(
    query_id: usize,
    g_q: f64,
    q: f64,
    u: Vec<f64>,
    times: Vec<usize>,
    n_finite: usize,
) -> Result<ExceedanceSet, AttractorError> {
    if u.len() < MIN_EXCEEDANCES {
        return Err(AttractorError::TooFewExceedances {
            count: u.len(),
            n_finite,
        });
    }
    Ok(ExceedanceSet {
        query_id,
        g_q,
        q,
        u,
        times,
        n_finite,
    })
}

/// Reusable buffers for [`query_exceedances`].
#[derive(Debug, Default)]
pub struct Scratch {
    d2: Vec<f64>,
    sample: Vec<f64>,
    candidates: Vec<(usize, f64)>,
    values: Vec<f64>,
}

/// Same result as `exceedances(&neg_log_distance_series(reference, query)?, q)`.
pub fn query_exceedances(
    reference: &ReferenceAttractor,
    query: &[f64],
    q: f64,
    scratch: &mut Scratch,
) -> Result<ExceedanceSet, AttractorError> {
    check_query(reference, query)?;
    check_quantile(q)?;

    let d2 = &mut scratch.d2;
    d2.clear();
    d2.extend(
        reference
            .states
            .iter_rows()
            .map(|row| squared_distance(row, query)),
    );
    let is_finite = |v: f64| v > 0.0 && v.is_finite();
    let n_finite = d2.iter().filter(|&&v| is_finite(v)).count();
    if n_finite < MIN_FINITE {
        return Err(AttractorError::TooFewFinite(n_finite));
    }

    // g ascending position `lo` is squared-distance ascending rank `n-1-lo`.
    let h = (n_finite - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let rank = n_finite - 1 - lo;

    let cutoff = sampled_cutoff(d2, n_finite, rank, &mut scratch.sample);
    let candidates = &mut scratch.candidates;
    let collect = |cands: &mut Vec<(usize, f64)>, cutoff: f64| {
        cands.clear();
        cands.extend(
            d2.iter()
                .enumerate()
                .filter(|&(_, &v)| is_finite(v) && v <= cutoff)
                .map(|(t, &v)| (t, v)),
        );
    };
    collect(candidates, cutoff);
    if candidates.len() <= rank {
        collect(candidates, f64::INFINITY);
    }

    let values = &mut scratch.values;
    values.clear();
    values.extend(candidates.iter().map(|&(_, v)| v));
    let (below, at, _) = values.select_nth_unstable_by(rank, f64::total_cmp);
    let g_lo = neg_log_from_squared(*at);
    let g_q = if lo + 1 < n_finite {
        let next = below
            .iter()
            .copied()
            .max_by(f64::total_cmp)
            .expect("rank >= 1 when lo + 1 < n");
        interpolate(g_lo, neg_log_from_squared(next), frac)
    } else {
        g_lo
    };

    let (mut u, mut times) = (Vec::new(), Vec::new());
    for &(t, v) in candidates.iter() {
        let g = neg_log_from_squared(v);
        if g > g_q {
            u.push(g - g_q);
            times.push(t);
        }
    }
    finish(0, g_q, q, u, times, n_finite)
}

/// Upper bound on the `rank`-th smallest finite squared distance estimated
/// from a strided subsample. Returns `+inf` when no useful bound exists;
/// the caller falls back to the full set when the bound proves too tight.
fn sampled_cutoff(d2: &[f64], n_finite: usize, rank: usize, sample: &mut Vec<f64>) -> f64 {
    const SAMPLE_TARGET: usize = 4096;
    if n_finite < 4 * SAMPLE_TARGET {
        return f64::INFINITY;
    }
    let stride = d2.len() / SAMPLE_TARGET;
    sample.clear();
    sample.extend(
        d2.iter()
            .step_by(stride)
            .copied()
            .filter(|&v| v > 0.0 && v.is_finite()),
    );
    let frac = (rank + 1) as f64 / n_finite as f64;
    let k = (sample.len() as f64 * frac * 1.5).ceil() as usize + 16;
    if k >= sample.len() {
        return f64::INFINITY;
    }
    *sample.select_nth_unstable_by(k, f64::total_cmp).1
}

/// Exceedances for every row of `queries`, in query order. Each element is
/// independent; failures do not abort the batch.
pub fn batch_exceedances(
    reference: &ReferenceAttractor,
    queries: &TrajectoryDataset,
    q: f64,
) -> Vec<Result<ExceedanceSet, AttractorError>> {
    (0..queries.n_t())
        .into_par_iter()
        .map_init(Scratch::default, |scratch, i| {
            query_exceedances(reference, queries.row(i), q, scratch).map(|mut e| {
                e.query_id = i;
                e
            })
        })
        .collect()
}
