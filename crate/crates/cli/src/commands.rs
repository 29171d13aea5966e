use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use dynerr::data::{compute_norm_stats, split, zscore, SplitSpec};
use dynerr::forecast::{
    rollout_study, AnalogForecaster, Forecaster, Persistence, RolloutConfig,
};
use dynerr::generators::{
    simulate_ks, simulate_lorenz, time_scale, KsParams, LorenzParams, System, ROLLOUT_STEPS_KS,
    ROLLOUT_STEPS_LORENZ,
};
use dynerr::metrics::{build_report, lat_weighted_rmse, EvaluationReport, ForecastPair};
use dynerr::{
    build_reference, compute_indices, load_dataset, save_dataset, Format, NormStats,
    ReferenceAttractor, TrajectoryDataset,
};

use crate::manifest::{sidecar_path, RunManifest};
use crate::{
    EvaluateArgs, GenerateArgs, IndicesArgs, ModelArg, ReportArgs, RolloutArgs, SystemArg,
    UnitsArg,
};

fn load(path: &Path, manifest: &mut RunManifest) -> Result<TrajectoryDataset> {
    manifest.add_input(path)?;
    load_dataset(path, Format::from_path(path)).with_context(|| format!("loading {}", path.display()))
}

fn load_reference(path: &Path, manifest: &mut RunManifest) -> Result<ReferenceAttractor> {
    let ds = load(path, manifest)?;
    build_reference(ds).with_context(|| format!("reference {}", path.display()))
}

fn create(path: &Path, manifest: &mut RunManifest) -> Result<BufWriter<File>> {
    manifest.add_output(path);
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(path: &Path, value: &impl Serialize, manifest: &mut RunManifest) -> Result<()> {
    let mut w = create(path, manifest)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn check_columns(a: &TrajectoryDataset, b: &TrajectoryDataset, what: &str) -> Result<()> {
    ensure!(
        a.n_s() == b.n_s(),
        "{what} has {} columns, reference has {}",
        b.n_s(),
        a.n_s()
    );
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "system", rename_all = "lowercase")]
enum SimConfig {
    Lorenz(LorenzParams),
    Ks { params: KsParams, seed: u64 },
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let sim = match args.system {
        SystemArg::Lorenz => {
            let d = LorenzParams::default();
            let discard = args.discard.unwrap_or(d.transient_discard);
            let rows = args.steps.unwrap_or(1_000_000);
            SimConfig::Lorenz(LorenzParams {
                sigma: args.sigma,
                rho: args.rho,
                beta: args.beta,
                dt: args.dt.unwrap_or(d.dt),
                n_steps: discard + rows,
                transient_discard: discard,
                ..d
            })
        }
        SystemArg::Ks => {
            let d = KsParams::default();
            let discard = args.discard.unwrap_or(d.transient_discard);
            let rows = args.steps.unwrap_or((d.n_steps_internal - d.transient_discard) / d.downsample);
            SimConfig::Ks {
                params: KsParams {
                    length: args.length,
                    n_grid: args.grid,
                    dt_internal: args.dt.unwrap_or(d.dt_internal),
                    n_steps_internal: discard + rows * args.downsample,
                    transient_discard: discard,
                    downsample: args.downsample,
                },
                seed: args.seed,
            }
        }
    };
    let mut manifest = RunManifest::new("generate", &serde_json::json!({ "args": args, "simulation": &sim }))?;
    let data = match &sim {
        SimConfig::Lorenz(p) => simulate_lorenz(p)?,
        SimConfig::Ks { params, seed } => simulate_ks(params, *seed)?,
    };
    let spec = SplitSpec::default();
    let (train, val, test) = split(&data, &spec)?;
    let stats = compute_norm_stats(&train)?;

    out_dir(&args.out)?;
    for (part, ds) in [("train", train), ("val", val), ("test", test)] {
        let ds = if args.raw { ds } else { zscore(&ds, &stats) };
        let path = args.out.join(format!("{part}.{}", args.format.extension()));
        save_dataset(&ds, &path, args.format.format())
            .with_context(|| format!("writing {}", path.display()))?;
        manifest.add_output(&path);
    }
    write_json(&args.out.join("stats.json"), &stats, &mut manifest)?;
    manifest.write(&args.out.join("manifest.json"))
}

pub fn indices(args: &IndicesArgs) -> Result<()> {
    let mut manifest = RunManifest::new("indices", args)?;
    let reference = load_reference(&args.reference, &mut manifest)?;
    let query = load(&args.query, &mut manifest)?;
    check_columns(reference.states(), &query, "query")?;
    let idx = compute_indices(&reference, &query, args.q);
    let mut w = create(&args.out, &mut manifest)?;
    idx.write_csv(&mut w, &query)?;
    w.flush()?;
    manifest.write(&sidecar_path(&args.out))
}

fn read_lats(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("latitude {t:?} in {}", path.display())))
        .collect()
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut manifest = RunManifest::new("evaluate", args)?;
    let pred = load(&args.pred, &mut manifest)?;
    let truth = load(&args.truth, &mut manifest)?;
    let reference = load_reference(&args.reference, &mut manifest)?;
    let norm: Option<NormStats> = match &args.stats {
        Some(p) => {
            manifest.add_input(p)?;
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => None,
    };
    let pair = ForecastPair::new(pred, truth, args.lead).context("prediction and truth are not aligned")?;
    check_columns(reference.states(), &pair.pred, "prediction")?;
    let pred_idx = compute_indices(&reference, &pair.pred, args.q);
    let true_idx = compute_indices(&reference, &pair.truth, args.q);
    let mut report = build_report(&pair, &pred_idx, &true_idx, norm.as_ref(), args.bins)?;
    if let Some(path) = &args.lats {
        manifest.add_input(path)?;
        let lats = read_lats(path)?;
        let n_s = pair.pred.n_s();
        ensure!(
            !lats.is_empty() && n_s % lats.len() == 0,
            "{} latitudes do not divide {n_s} state columns",
            lats.len()
        );
        report.lat_rmse = Some(lat_weighted_rmse(
            pair.pred.as_slice(),
            pair.truth.as_slice(),
            &lats,
            n_s / lats.len(),
        )?);
    }

    out_dir(&args.out)?;
    write_json(&args.out.join("report.json"), &report, &mut manifest)?;
    for (name, curve) in [("curve_d.csv", &report.curves.d), ("curve_theta.csv", &report.curves.theta)] {
        let mut w = create(&args.out.join(name), &mut manifest)?;
        curve.write_csv(&mut w)?;
        w.flush()?;
    }
    let mut w = create(&args.out.join("did.csv"), &mut manifest)?;
    writeln!(w, "index,did_d,did_theta,mse_state")?;
    for s in &report.did {
        writeln!(w, "{},{},{},{}", s.index, s.did_d, s.did_theta, s.mse_state)?;
    }
    w.flush()?;
    manifest.write(&args.out.join("manifest.json"))
}

/// Converts eval times to whole steps; LT units need a system.
fn eval_steps(args: &RolloutArgs, dt: f64) -> Result<(Vec<usize>, Option<dynerr::generators::TimeScale>)> {
    let ts = args
        .system
        .map(|s| time_scale(System::from(s), dt))
        .transpose()?;
    let steps = match args.units {
        UnitsArg::Steps => args
            .eval
            .iter()
            .map(|&t| {
                ensure!(t >= 1.0 && t.fract() == 0.0, "eval time {t} is not a whole step count");
                Ok(t as usize)
            })
            .collect::<Result<_>>()?,
        UnitsArg::Lt => {
            let Some(ts) = ts else {
                bail!("--units lt needs --system");
            };
            args.eval.iter().map(|&t| ts.lt_to_steps(t)).collect()
        }
    };
    Ok((steps, ts))
}

pub fn rollout(args: &RolloutArgs) -> Result<()> {
    let mut manifest = RunManifest::new("rollout", args)?;
    let reference = load_reference(&args.reference, &mut manifest)?;
    let test = load(&args.test, &mut manifest)?;
    check_columns(reference.states(), &test, "test set")?;
    let steps = match (args.steps, args.system) {
        (Some(s), _) => s,
        (None, Some(SystemArg::Lorenz)) => ROLLOUT_STEPS_LORENZ,
        (None, Some(SystemArg::Ks)) => ROLLOUT_STEPS_KS,
        (None, None) => bail!("--steps is required without --system"),
    };
    let (eval_times, time_scale) = eval_steps(args, test.dt())?;
    let config = RolloutConfig {
        m: args.m,
        steps,
        n_starts: args.starts,
        eval_times,
        q: args.q,
        n_bins: args.bins,
        time_scale,
    };
    let model: Box<dyn Forecaster> = match args.model {
        ModelArg::Persistence => Box::new(Persistence),
        ModelArg::Analog => Box::new(AnalogForecaster::new(reference.clone(), args.m, args.k)?),
    };
    let study = rollout_study(model.as_ref(), &test, &reference, &config)?;

    out_dir(&args.out)?;
    for r in &study.reports {
        write_json(&args.out.join(format!("report_step{}.json", r.step)), r, &mut manifest)?;
    }
    let mut w = create(&args.out.join("rollout.csv"), &mut manifest)?;
    study.write_csv(&mut w)?;
    w.flush()?;
    #[derive(Serialize)]
    struct Summary<'a> {
        starts: &'a [usize],
        crashes: &'a [Option<usize>],
        config: &'a RolloutConfig,
    }
    write_json(
        &args.out.join("study.json"),
        &Summary {
            starts: &study.starts,
            crashes: &study.crashes,
            config: &study.config,
        },
        &mut manifest,
    )?;
    manifest.write(&args.out.join("manifest.json"))
}

/// A report file from `evaluate` (bare report) or `rollout` (wrapped with
/// its step).
fn read_report(path: &Path) -> Result<(Option<usize>, EvaluationReport)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if value.get("report").is_some() {
        let step = value.get("step").and_then(|s| s.as_u64()).map(|s| s as usize);
        let inner = value["report"].clone();
        ensure!(!inner.is_null(), "{} holds no report (ensemble was not scored)", path.display());
        return Ok((step, serde_json::from_value(inner).with_context(|| format!("parsing {}", path.display()))?));
    }
    Ok((None, serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))?))
}

const REPORT_COLUMNS: &str = "source,step,mse,nmse,mae,nmae,mse_d,mse_theta,nmse_d,nmse_theta,\
mae_d,mae_theta,nmae_d,nmae_theta,wd,wd_d,wd_theta,mean_d_pred,mean_theta_pred,mean_d_true,\
mean_theta_true,quad_pp,quad_pm,quad_mp,quad_mm,n_valid,n_skipped,lat_rmse";

pub fn report(args: &ReportArgs) -> Result<()> {
    let mut manifest = RunManifest::new("report", args)?;
    let mut rows = Vec::with_capacity(args.inputs.len());
    for p in &args.inputs {
        manifest.add_input(p)?;
        rows.push((p.clone(), read_report(p)?));
    }
    let mut w = create(&args.out, &mut manifest)?;
    writeln!(w, "{REPORT_COLUMNS}")?;
    for (path, (step, r)) in &rows {
        let q = r.quadrants.as_array();
        let values = [
            r.mse, r.nmse, r.mae, r.nmae, r.mse_d, r.mse_theta, r.nmse_d, r.nmse_theta, r.mae_d,
            r.mae_theta, r.nmae_d, r.nmae_theta, r.wd, r.wd_d, r.wd_theta, r.mean_d_pred,
            r.mean_theta_pred, r.mean_d_true, r.mean_theta_true, q[0], q[1], q[2], q[3],
        ];
        let mut line = format!(
            "{},{}",
            csv_field(path),
            step.map(|s| s.to_string()).unwrap_or_default()
        );
        for v in values {
            line.push_str(&format!(",{v}"));
        }
        line.push_str(&format!(
            ",{},{},{}",
            r.n_valid,
            r.n_skipped,
            r.lat_rmse.map(|v| v.to_string()).unwrap_or_default()
        ));
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    manifest.write(&sidecar_path(&args.out))
}

fn csv_field(path: &Path) -> String {
    let s = path.display().to_string();
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}
