//! Acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line with the measured values before asserting.

use std::sync::OnceLock;
use std::time::Instant;

use dynerr::attractor::{exceedances, ExceedanceSet};
use dynerr::data::{compute_norm_stats, split, zscore, SplitSpec};
use dynerr::forecast::{direct_eval, rollout_study, AnalogForecaster, ForecastTask, RolloutConfig};
use dynerr::generators::{
    simulate_ks_from, simulate_lorenz, time_scale, KsParams, LorenzParams, System,
    ROLLOUT_STEPS_KS, ROLLOUT_STEPS_LORENZ,
};
use dynerr::indices::exponential_gof;
use dynerr::metrics::{
    build_report, per_state_squared_error, quantile_bin_errors, wasserstein_1d, ForecastPair,
};
use dynerr::{
    build_reference, compute_indices, inverse_persistence, local_dimension, DynamicalIndices,
    ReferenceAttractor, TrajectoryDataset, DEFAULT_QUANTILE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal, Uniform};

fn verdict(id: u32, name: &str, ok: bool, detail: String) {
    println!("{} criterion {id} ({name}): {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

fn exc(u: Vec<f64>) -> ExceedanceSet {
    ExceedanceSet {
        query_id: 0,
        g_q: 0.0,
        q: DEFAULT_QUANTILE,
        u,
        times: Vec::new(),
        n_finite: 0,
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

#[test]
fn c01_dimension_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let circle = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> {
        (0..k)
            .flat_map(|_| {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                [a.cos(), a.sin()]
            })
            .collect()
    };
    let square = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> { (0..2 * k).map(|_| rng.random::<f64>()).collect() };
    let run = |points: Vec<f64>, queries: Vec<f64>| {
        let r = build_reference(TrajectoryDataset::new("ref", 1.0, 2, 0, points).unwrap()).unwrap();
        let q = TrajectoryDataset::new("q", 1.0, 2, 0, queries).unwrap();
        let idx = single_threaded(|| compute_indices(&r, &q, DEFAULT_QUANTILE));
        (mean(idx.valid_pairs().map(|p| p.0)), idx.n_valid())
    };
    let (d_circle, v1) = run(circle(&mut rng, n), circle(&mut rng, 200));
    let (d_square, v2) = run(square(&mut rng, n), square(&mut rng, 200));
    let secs = start.elapsed().as_secs_f64();
    let ok = (0.9..=1.1).contains(&d_circle) && (1.8..=2.2).contains(&d_square) && secs < 60.0;
    verdict(
        1,
        "dimension oracle",
        ok,
        format!("circle mean d {d_circle:.4} ({v1}/200 valid), square mean d {d_square:.4} ({v2}/200 valid), {secs:.1} s single-threaded"),
    );
}

#[test]
fn c02_exponential_mle_recovery() {
    let mut worst: f64 = 0.0;
    let mut medians = Vec::new();
    for (i, sigma0) in [0.1, 1.0, 10.0].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + i as u64);
        let dist = Exp::new(1.0 / sigma0).unwrap();
        let mut ratios: Vec<f64> = (0..100)
            .map(|_| {
                let u: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
                local_dimension(&exc(u)).unwrap() * sigma0
            })
            .collect();
        ratios.sort_by(f64::total_cmp);
        let median = (ratios[49] + ratios[50]) / 2.0;
        worst = worst.max((median - 1.0).abs());
        medians.push(median);
    }
    verdict(
        2,
        "exponential MLE",
        worst <= 0.02,
        format!("median d*sigma0 for sigma0 0.1/1/10: {medians:.4?}"),
    );
}

fn theta_of_series(x: &[f64]) -> f64 {
    let e = exceedances(x, DEFAULT_QUANTILE).unwrap();
    inverse_persistence(&e, DEFAULT_QUANTILE).unwrap()
}

#[test]
fn c03_extremal_index_calibration() {
    let n = 100_000;
    let mut below = 0;
    let mut first_iid = f64::NAN;
    let mut iid_range = (f64::INFINITY, f64::NEG_INFINITY);
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3_000 + trial);
        let iid: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut ar = Vec::with_capacity(n);
        let mut x: f64 = StandardNormal.sample(&mut rng);
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            x = 0.99 * x + e;
            ar.push(x);
        }
        let t_iid = theta_of_series(&iid);
        let t_ar = theta_of_series(&ar);
        if trial == 0 {
            first_iid = t_iid;
        }
        iid_range = (iid_range.0.min(t_iid), iid_range.1.max(t_iid));
        below += usize::from(t_ar < t_iid);
    }
    let ok = (0.9..=1.0).contains(&first_iid) && below >= 95;
    verdict(
        3,
        "extremal index",
        ok,
        format!(
            "iid theta {first_iid:.4} (range over trials {:.4}..{:.4}); AR(0.99) below iid in {below}/100",
            iid_range.0, iid_range.1
        ),
    );
}

#[test]
fn c04_chi_squared_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let exp = Exp::new(1.0).unwrap();
    let uni = Uniform::new(0.0, 1.0).unwrap();
    let trials = 1_000;
    let mut pass = 0;
    let mut reject = 0;
    for _ in 0..trials {
        let u: Vec<f64> = (0..1_000).map(|_| exp.sample(&mut rng)).collect();
        pass += usize::from(exponential_gof(&u).unwrap().p_value > 0.05);
        let w: Vec<f64> = (0..1_000).map(|_| uni.sample(&mut rng)).collect();
        reject += usize::from(exponential_gof(&w).unwrap().p_value < 0.01);
    }
    let rate = pass as f64 / trials as f64;
    let rej = reject as f64 / trials as f64;
    verdict(
        4,
        "chi-squared GoF",
        (0.93..=0.97).contains(&rate) && rej >= 0.99,
        format!("null pass rate {rate:.3}, uniform rejection rate {rej:.3}"),
    );
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian
/// algorithm with potentials).
fn assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}

/// Exact optimal transport between two uniform empirical measures. Each
/// point is split into equal atoms so both sides have `lcm(n, m)` atoms;
/// the transport polytope with uniform marginals has permutation vertices,
/// so the optimal assignment solves the linear program.
fn transport_lp(a: &[f64], b: &[f64]) -> f64 {
    fn gcd(x: usize, y: usize) -> usize {
        if y == 0 { x } else { gcd(y, x % y) }
    }
    let l = a.len() / gcd(a.len(), b.len()) * b.len();
    let ea: Vec<f64> = a.iter().flat_map(|&x| std::iter::repeat_n(x, l / a.len())).collect();
    let eb: Vec<f64> = b.iter().flat_map(|&x| std::iter::repeat_n(x, l / b.len())).collect();
    let cost: Vec<Vec<f64>> = ea.iter().map(|x| eb.iter().map(|y| (x - y).abs()).collect()).collect();
    assignment_cost(&cost) / l as f64
}

#[test]
fn c05_wasserstein_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let k = rng.random_range(1..=8);
        (0..k)
            .map(|_| {
                // coarse values so ties occur
                if rng.random_bool(0.3) {
                    rng.random_range(0..4) as f64
                } else {
                    rng.random_range(-5.0..5.0)
                }
            })
            .collect()
    };
    let mut worst_lp: f64 = 0.0;
    for _ in 0..200 {
        let (a, b) = (sample(&mut rng), sample(&mut rng));
        worst_lp = worst_lp.max((wasserstein_1d(&a, &b).unwrap() - transport_lp(&a, &b)).abs());
    }
    let mut axioms = true;
    let mut worst_triangle: f64 = f64::NEG_INFINITY;
    for _ in 0..1_000 {
        let (a, b, c) = (sample(&mut rng), sample(&mut rng), sample(&mut rng));
        let w = |x: &[f64], y: &[f64]| wasserstein_1d(x, y).unwrap();
        axioms &= w(&a, &b) == w(&b, &a) || (w(&a, &b) - w(&b, &a)).abs() < 1e-12;
        axioms &= w(&a, &a) == 0.0;
        let slack = w(&a, &c) - w(&a, &b) - w(&b, &c);
        worst_triangle = worst_triangle.max(slack);
        axioms &= slack <= 1e-12;
    }
    verdict(
        5,
        "Wasserstein oracle",
        worst_lp <= 1e-9 && axioms,
        format!("max |wd - LP| {worst_lp:.2e} over 200 instances; axioms hold on 1000 triples: {axioms} (max triangle slack {worst_triangle:.2e})"),
    );
}

#[test]
fn c06_generator_correctness() {
    let on_attractor = simulate_lorenz(&LorenzParams {
        n_steps: 1_001,
        ..Default::default()
    })
    .unwrap();
    let init: [f64; 3] = on_attractor.row(0).try_into().unwrap();
    let endpoint = |dt: f64| {
        let n = (1.0 / dt).round() as usize;
        let p = LorenzParams {
            dt,
            n_steps: n + 1,
            init,
            transient_discard: n,
            ..Default::default()
        };
        simulate_lorenz(&p).unwrap().row(0).to_vec()
    };
    let reference = endpoint(1e-4);
    let err = |v: Vec<f64>| v.iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let ratio = err(endpoint(0.01)) / err(endpoint(0.005));

    let p = KsParams {
        n_steps_internal: 20_001,
        transient_discard: 0,
        downsample: 1_000,
        ..Default::default()
    };
    let init: Vec<f64> = (0..64)
        .map(|j| {
            let x = 2.0 * std::f64::consts::PI * j as f64 / 64.0;
            0.3 + x.cos() * (1.0 + x.sin())
        })
        .collect();
    let ks = simulate_ks_from(&p, &init).unwrap();
    let means: Vec<f64> = ks.iter_rows().map(|r| mean(r.iter().copied())).collect();
    let drift = means.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let zero = simulate_ks_from(&KsParams { n_steps_internal: 10_000, ..p.clone() }, &[0.0; 64]).unwrap();
    let zero_ok = zero.as_slice().iter().all(|v| v.to_bits() == 0);

    verdict(
        6,
        "generators",
        (12.0..=20.0).contains(&ratio) && drift <= 1e-8 && zero_ok,
        format!("RK4 error ratio {ratio:.2}; KS max mean drift per 1000 steps {drift:.2e}; zero field preserved: {zero_ok}"),
    );
}

struct LorenzSetup {
    reference: ReferenceAttractor,
    forecaster: AnalogForecaster,
    test: TrajectoryDataset,
}

fn lorenz_setup() -> &'static LorenzSetup {
    static SETUP: OnceLock<LorenzSetup> = OnceLock::new();
    SETUP.get_or_init(|| {
        let raw = simulate_lorenz(&LorenzParams::default()).unwrap();
        assert_eq!(raw.n_t(), 1_000_000);
        let (train, _, test) = split(&raw, &SplitSpec::default()).unwrap();
        let stats = compute_norm_stats(&train).unwrap();
        let reference = build_reference(zscore(&train, &stats)).unwrap().with_normalized(true);
        let forecaster = AnalogForecaster::new(reference.clone(), 3, 3).unwrap();
        LorenzSetup {
            reference,
            forecaster,
            test: zscore(&test, &stats),
        }
    })
}

/// Evenly strided subsample of forecast pairs scored in the curves.
const CURVE_STATES: usize = 10_000;

#[test]
fn c07_error_grows_with_index_quantile() {
    let start = Instant::now();
    let s = lorenz_setup();
    let pair = direct_eval(&s.forecaster, &s.test, ForecastTask::direct(3, 1).unwrap()).unwrap();
    let stride = pair.truth.n_t().div_ceil(CURVE_STATES);
    let rows: Vec<usize> = (0..pair.truth.n_t()).step_by(stride).collect();
    let truth = pair.truth.select_rows(&rows).unwrap();
    let pred = pair.pred.select_rows(&rows).unwrap();
    let sub = ForecastPair::new(pred, truth, 1).unwrap();
    let per_state = per_state_squared_error(&sub);
    let idx = compute_indices(&s.reference, &sub.truth, DEFAULT_QUANTILE);
    let curve_d = quantile_bin_errors(&idx.d, &per_state, 10).unwrap();
    let curve_t = quantile_bin_errors(&idx.theta, &per_state, 10).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (d_lo, d_hi) = (curve_d.mean_error[0], curve_d.mean_error[9]);
    let (t_lo, t_hi) = (curve_t.mean_error[0], curve_t.mean_error[9]);
    verdict(
        7,
        "error vs index quantile",
        d_hi > d_lo && t_hi > t_lo && secs < 600.0,
        format!(
            "{} of {} test states ({} valid); MSE bottom/top d bin {d_lo:.3e}/{d_hi:.3e}, theta bin {t_lo:.3e}/{t_hi:.3e}; {secs:.0} s",
            rows.len(),
            pair.truth.n_t(),
            idx.n_valid()
        ),
    );
}

/// Spearman rank correlation; tied values get average ranks.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
                j += 1;
            }
            for &k in &order[i..=j] {
                r[k] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(rx.iter().copied()), mean(ry.iter().copied()));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn c08_rollout_errors_grow_with_horizon() {
    let s = lorenz_setup();
    let ts = time_scale(System::Lorenz, s.test.dt()).unwrap();
    let lts = [0.1, 1.0, 2.0, 3.0];
    let config = RolloutConfig {
        m: 3,
        steps: ROLLOUT_STEPS_LORENZ,
        n_starts: 500,
        eval_times: lts.iter().map(|&t| ts.lt_to_steps(t)).collect(),
        q: DEFAULT_QUANTILE,
        n_bins: 10,
        time_scale: Some(ts),
    };
    let study = rollout_study(&s.forecaster, &s.test, &s.reference, &config).unwrap();
    let reports: Vec<_> = study.reports.iter().map(|r| r.report.as_ref().unwrap()).collect();
    let series = |f: fn(&dynerr::metrics::EvaluationReport) -> f64| -> Vec<f64> { reports.iter().map(|r| f(r)).collect() };
    let cols = [
        ("MSE", series(|r| r.mse)),
        ("MSE_d", series(|r| r.mse_d)),
        ("MSE_theta", series(|r| r.mse_theta)),
        ("WD", series(|r| r.wd)),
    ];
    let rhos: Vec<(String, f64)> = cols.iter().map(|(n, v)| (n.to_string(), spearman(&lts, v))).collect();
    let crashed = study.crashes.iter().filter(|c| c.is_some()).count();
    let detail = cols
        .iter()
        .zip(&rhos)
        .map(|((n, v), (_, rho))| {
            let vals: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
            format!("{n} [{}] rho {rho:.2}", vals.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ");
    verdict(
        8,
        "rollout trends",
        rhos.iter().all(|(_, r)| *r > 0.0),
        format!("500 starts x {} steps, {crashed} crashed; {detail}", ROLLOUT_STEPS_LORENZ),
    );
}

#[test]
fn c09_metric_identities() {
    let data = simulate_lorenz(&LorenzParams {
        n_steps: 31_000,
        ..Default::default()
    })
    .unwrap();
    let reference = build_reference(data.slice(0, 25_000).unwrap()).unwrap();
    let truth = data.slice(25_000, 30_000).unwrap();
    let idx: DynamicalIndices = compute_indices(&reference, &truth, DEFAULT_QUANTILE);
    let pair = ForecastPair::new(truth.clone(), truth, 1).unwrap();
    let r = build_report(&pair, &idx, &idx, None, 10).unwrap();
    let scalars = [
        r.mse, r.nmse, r.mae, r.nmae, r.mse_d, r.mse_theta, r.nmse_d, r.nmse_theta, r.mae_d,
        r.mae_theta, r.nmae_d, r.nmae_theta, r.wd, r.wd_d, r.wd_theta,
    ];
    let zeros = scalars.iter().all(|&v| v == 0.0);
    let did_zero = r.did.iter().all(|s| s.did_d == 0.0 && s.did_theta == 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(10..2_000);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let bins = rng.random_range(2..=10);
        let c = quantile_bin_errors(&x, &e, bins).unwrap();
        let weighted = c.mean_error.iter().zip(&c.count).map(|(m, &k)| m * k as f64).sum::<f64>() / n as f64;
        worst = worst.max((weighted - mean(e.iter().copied())).abs());
    }
    verdict(
        9,
        "metric identities",
        zeros && did_zero && worst <= 1e-12,
        format!(
            "all scalar metrics zero: {zeros}; DID samples (0,0): {did_zero} ({} states); binned mean conservation error {worst:.1e}",
            r.did.len()
        ),
    );
}

#[test]
fn c10_constants() {
    let lorenz = time_scale(System::Lorenz, 0.01).unwrap();
    let ks = time_scale(System::Ks, 0.25).unwrap();
    let ok = DEFAULT_QUANTILE == 0.98
        && lorenz.lt_steps == 110
        && (92..=93).contains(&ks.lt_steps)
        && ROLLOUT_STEPS_LORENZ == 1_100
        && ROLLOUT_STEPS_KS == 279;
    verdict(
        10,
        "constants",
        ok,
        format!(
            "q {DEFAULT_QUANTILE}; Lorenz LT {} steps; KS LT {} steps; rollout presets {ROLLOUT_STEPS_LORENZ}/{ROLLOUT_STEPS_KS}",
            lorenz.lt_steps, ks.lt_steps
        ),
    );
}
