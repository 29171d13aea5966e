//! Local dynamical indices from threshold exceedances.
//!
//! * Instantaneous dimension `d = 1 / sigma`, with `sigma` the maximum
//!   likelihood scale of the exponential (zero-shape GPD) fitted to the
//!   exceedances.
//! * Inverse persistence `theta`, the Süveges maximum-likelihood extremal
//!   index of the exceedance times.
//!
//! A chi-squared goodness-of-fit test of the exponential fit is provided
//! alongside; its p-value is reported per state but does not affect validity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::attractor::{
    query_exceedances, AttractorError, ExceedanceSet, ReferenceAttractor, Scratch,
};
use crate::data::TrajectoryDataset;

/// Number of equiprobable bins in the goodness-of-fit test.
pub const GOF_BINS: usize = 10;
/// Smallest expected count per (merged) bin.
pub const GOF_MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    #[error("no exceedances")]
    Empty,
    #[error("all exceedances are zero; exponential scale is degenerate")]
    Degenerate,
    #[error("need at least 2 exceedance times, got {0}")]
    TooFewTimes(usize),
    #[error("goodness-of-fit test not applicable: only {bins} bins after merging {n} samples")]
    GofNotApplicable { n: usize, bins: usize },
    #[error(transparent)]
    Attractor(#[from] AttractorError),
}

/// Per-state indices. Invalid states carry `NaN` for `d` and `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicalIndices {
    pub d: Vec<f64>,
    pub theta: Vec<f64>,
    pub valid: Vec<bool>,
    pub q: f64,
    /// Exceedance count per state (0 when the threshold could not be set).
    pub n_exceedances: Vec<usize>,
    /// Goodness-of-fit p-value per state, `NaN` when not applicable.
    pub gof_p: Vec<f64>,
}

impl DynamicalIndices {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Builds an index set from `(d, theta)` pairs, `None` meaning invalid.
    pub fn from_pairs(pairs: &[Option<(f64, f64)>], q: f64) -> Self {
        let mut out = Self::with_capacity(pairs.len(), q);
        for p in pairs {
            match *p {
                Some((d, t)) => out.push_valid(d, t, 0, f64::NAN),
                None => out.push_invalid(0),
            }
        }
        out
    }

    fn with_capacity(n: usize, q: f64) -> Self {
        Self {
            d: Vec::with_capacity(n),
            theta: Vec::with_capacity(n),
            valid: Vec::with_capacity(n),
            q,
            n_exceedances: Vec::with_capacity(n),
            gof_p: Vec::with_capacity(n),
        }
    }

    fn push_valid(&mut self, d: f64, theta: f64, n_exc: usize, p: f64) {
        self.d.push(d);
        self.theta.push(theta);
        self.valid.push(true);
        self.n_exceedances.push(n_exc);
        self.gof_p.push(p);
    }

    fn push_invalid(&mut self, n_exc: usize) {
        self.d.push(f64::NAN);
        self.theta.push(f64::NAN);
        self.valid.push(false);
        self.n_exceedances.push(n_exc);
        self.gof_p.push(f64::NAN);
    }

    /// `index,time,d,theta,valid,n_exceedances,gof_p`, one row per state.
    /// `time` comes from the matching row of `queries`.
    pub fn write_csv(
        &self,
        w: &mut impl std::io::Write,
        queries: &TrajectoryDataset,
    ) -> std::io::Result<()> {
        writeln!(w, "index,time,d,theta,valid,n_exceedances,gof_p")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                queries.start_index() + i as u64,
                queries.time(i),
                self.d[i],
                self.theta[i],
                u8::from(self.valid[i]),
                self.n_exceedances[i],
                self.gof_p[i]
            )?;
        }
        Ok(())
    }

    /// `(d, theta)` of valid states only.
    pub fn valid_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.len())
            .filter(|&i| self.valid[i])
            .map(|i| (self.d[i], self.theta[i]))
    }
}

/// `d = 1 / mean(u)`.
pub fn local_dimension(exc: &ExceedanceSet) -> Result<f64, IndexError> {
    if exc.u.is_empty() {
        return Err(IndexError::Empty);
    }
    let sigma = exc.u.iter().sum::<f64>() / exc.u.len() as f64;
    if sigma <= 0.0 {
        return Err(IndexError::Degenerate);
    }
    Ok(1.0 / sigma)
}

/// Süveges extremal index of the exceedance times, clamped to (0, 1].
///
/// With gaps `S_i = T_i - 1`, `N` gaps, `N_c` nonzero gaps and
/// `A = (1 - q) * sum(S_i)`:
///
/// ```text
/// theta = (A + N + N_c - sqrt((A + N + N_c)^2 - 8 N_c A)) / (2 A)
/// ```
///
/// One unbroken cluster (`A = 0`) returns `1 / len(times)`.
pub fn inverse_persistence(exc: &ExceedanceSet, q: f64) -> Result<f64, IndexError> {
    suveges_theta(&exc.times, q)
}

pub(crate) fn suveges_theta(times: &[usize], q: f64) -> Result<f64, IndexError> {
    if times.len() < 2 {
        return Err(IndexError::TooFewTimes(times.len()));
    }
    let p = 1.0 - q;
    let (mut sum_s, mut n_c) = (0.0, 0.0);
    for w in times.windows(2) {
        let s = (w[1] - w[0] - 1) as f64;
        sum_s += s;
        if s > 0.0 {
            n_c += 1.0;
        }
    }
    let n = (times.len() - 1) as f64;
    let a = p * sum_s;
    let theta = if a == 0.0 {
        1.0 / times.len() as f64
    } else {
        let b = a + n + n_c;
        (b - (b * b - 8.0 * n_c * a).sqrt()) / (2.0 * a)
    };
    Ok(theta.clamp(f64::MIN_POSITIVE, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub n_bins_used: usize,
}

/// Chi-squared test of the exponential fit: equiprobable bins under the
/// fitted scale, adjacent bins merged until each expects at least
/// [`GOF_MIN_EXPECTED`] counts, one degree of freedom lost to the fit.
pub fn gpd_fit_test(exc: &ExceedanceSet) -> Result<GofResult, IndexError> {
    exponential_gof(&exc.u)
}

pub fn exponential_gof(u: &[f64]) -> Result<GofResult, IndexError> {
    let n = u.len();
    if n == 0 {
        return Err(IndexError::Empty);
    }
    let sigma = u.iter().sum::<f64>() / n as f64;
    if sigma <= 0.0 {
        return Err(IndexError::Degenerate);
    }
    let k = GOF_BINS;
    let mut observed = vec![0usize; k];
    for &x in u {
        let cdf = -(-x / sigma).exp_m1();
        let bin = ((cdf * k as f64).floor() as usize).min(k - 1);
        observed[bin] += 1;
    }
    let per_bin = n as f64 / k as f64;

    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(k);
    let (mut obs, mut exp) = (0.0, 0.0);
    for &o in &observed {
        obs += o as f64;
        exp += per_bin;
        if exp >= GOF_MIN_EXPECTED {
            merged.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => merged.push((obs, exp)),
        }
    }
    if merged.len() < 3 {
        return Err(IndexError::GofNotApplicable {
            n,
            bins: merged.len(),
        });
    }
    let statistic: f64 = merged.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = merged.len() - 2;
    let p_value = ChiSquared::new(dof as f64)
        .map(|c| c.sf(statistic))
        .unwrap_or(f64::NAN)
        .clamp(0.0, 1.0);
    Ok(GofResult {
        statistic,
        dof,
        p_value,
        n_bins_used: merged.len(),
    })
}

/// Per-state outcome with the reason a state was rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct StateIndices {
    pub d: f64,
    pub theta: f64,
    pub n_exceedances: usize,
    pub gof: Option<GofResult>,
}

pub fn state_indices(exc: &ExceedanceSet) -> Result<StateIndices, IndexError> {
    let d = local_dimension(exc)?;
    let theta = inverse_persistence(exc, exc.q)?;
    Ok(StateIndices {
        d,
        theta,
        n_exceedances: exc.len(),
        gof: gpd_fit_test(exc).ok(),
    })
}

/// Indices of every query row against `reference`. Parallel over queries,
/// deterministic for any thread count.
pub fn compute_indices(
    reference: &ReferenceAttractor,
    queries: &TrajectoryDataset,
    q: f64,
) -> DynamicalIndices {
    let per_state: Vec<Result<StateIndices, (IndexError, usize)>> = (0..queries.n_t())
        .into_par_iter()
        .map_init(Scratch::default, |scratch, i| {
            match query_exceedances(reference, queries.row(i), q, scratch) {
                Ok(exc) => state_indices(&exc).map_err(|e| (e, exc.len())),
                Err(e) => {
                    let n = match e {
                        AttractorError::TooFewExceedances { count, .. } => count,
                        _ => 0,
                    };
                    Err((e.into(), n))
                }
            }
        })
        .collect();

    let mut out = DynamicalIndices::with_capacity(per_state.len(), q);
    for r in per_state {
        match r {
            Ok(s) => out.push_valid(
                s.d,
                s.theta,
                s.n_exceedances,
                s.gof.map_or(f64::NAN, |g| g.p_value),
            ),
            Err((_, n)) => out.push_invalid(n),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Uniform};

    fn exc_from(u: Vec<f64>, times: Vec<usize>, q: f64) -> ExceedanceSet {
        ExceedanceSet {
            query_id: 0,
            g_q: 0.0,
            q,
            n_finite: 1000,
            u,
            times,
        }
    }

    #[test]
    fn constant_exceedances_give_unit_dimension() {
        let e = exc_from(vec![1.0; 4], vec![1, 2, 3, 4], 0.98);
        assert_eq!(local_dimension(&e).unwrap(), 1.0);
        let z = exc_from(vec![0.0; 4], vec![1, 2, 3, 4], 0.98);
        assert_eq!(local_dimension(&z).unwrap_err(), IndexError::Degenerate);
    }

    #[test]
    fn exponential_scale_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let exp = Exp::new(2.0).unwrap(); // rate 2 -> scale 0.5
        let u: Vec<f64> = (0..10_000).map(|_| exp.sample(&mut rng)).collect();
        let d = local_dimension(&exc_from(u, vec![], 0.98)).unwrap();
        assert!((1.96..=2.04).contains(&d), "{d}");
    }

    #[test]
    fn sparse_evenly_spaced_times_are_independent() {
        // S = [9, 9, 9], N = N_c = 3, A = 0.54; b = 6.54, disc = 29.8116 = 5.46^2
        let e = exc_from(vec![1.0; 4], vec![10, 20, 30, 40], 0.98);
        let theta = inverse_persistence(&e, 0.98).unwrap();
        let b: f64 = 0.54 + 3.0 + 3.0;
        let by_hand = (b - (b * b - 8.0 * 3.0 * 0.54).sqrt()) / (2.0 * 0.54);
        assert!((theta - by_hand.min(1.0)).abs() < 1e-12);
        assert!((theta - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unbroken_cluster_hits_the_floor() {
        let times: Vec<usize> = (5..45).collect();
        let e = exc_from(vec![1.0; 40], times, 0.98);
        assert_eq!(inverse_persistence(&e, 0.98).unwrap(), 1.0 / 40.0);
        let one = exc_from(vec![1.0], vec![3], 0.98);
        assert_eq!(inverse_persistence(&one, 0.98).unwrap_err(), IndexError::TooFewTimes(1));
    }

    #[test]
    fn perfect_exponential_fit() {
        let n = 10_000;
        let u: Vec<f64> = (0..n)
            .map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln())
            .collect();
        let r = exponential_gof(&u).unwrap();
        assert_eq!(r.n_bins_used, 10);
        assert_eq!(r.dof, 8);
        assert!(r.p_value > 0.99, "{r:?}");
    }

    #[test]
    fn uniform_data_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let uni = Uniform::new(0.0, 1.0).unwrap();
        let u: Vec<f64> = (0..1_000).map(|_| uni.sample(&mut rng)).collect();
        assert!(exponential_gof(&u).unwrap().p_value < 0.01);
    }

    #[test]
    fn small_samples_merge_bins() {
        let u: Vec<f64> = (0..30).map(|i| -(1.0 - (i as f64 + 0.5) / 30.0).ln()).collect();
        let r = exponential_gof(&u).unwrap();
        assert_eq!(r.n_bins_used, 5);
        assert_eq!(r.dof, 3);
        let few: Vec<f64> = (0..12).map(|i| i as f64 + 1.0).collect();
        assert!(matches!(
            exponential_gof(&few),
            Err(IndexError::GofNotApplicable { n: 12, bins: 2 })
        ));
    }

    #[test]
    fn from_pairs_marks_invalid() {
        let idx = DynamicalIndices::from_pairs(&[Some((2.0, 0.5)), None], 0.98);
        assert_eq!(idx.valid, vec![true, false]);
        assert!(idx.d[1].is_nan());
        assert_eq!(idx.n_valid(), 1);
    }

    #[test]
    fn csv_rows_follow_query_times() {
        let idx = DynamicalIndices::from_pairs(&[Some((2.0, 0.5)), None], 0.98);
        let q = TrajectoryDataset::new("q", 0.25, 1, 4, vec![0.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        idx.write_csv(&mut buf, &q).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "index,time,d,theta,valid,n_exceedances,gof_p\n4,1,2,0.5,1,0,NaN\n5,1.25,NaN,NaN,0,0,NaN\n"
        );
    }

    proptest! {
        #[test]
        fn theta_in_unit_interval(mut times in proptest::collection::vec(0usize..5_000, 2..200), q in 0.55f64..0.999) {
            times.sort_unstable();
            times.dedup();
            prop_assume!(times.len() >= 2);
            let t = suveges_theta(&times, q).unwrap();
            prop_assert!(t > 0.0 && t <= 1.0);
        }

        #[test]
        fn dimension_scales_inversely(u in proptest::collection::vec(0.001f64..10.0, 1..100), c in 0.01f64..100.0) {
            let a = local_dimension(&exc_from(u.clone(), vec![], 0.98)).unwrap();
            let b = local_dimension(&exc_from(u.iter().map(|x| x * c).collect(), vec![], 0.98)).unwrap();
            prop_assert!((a / c - b).abs() <= 1e-9 * b.abs());
        }
    }
}
