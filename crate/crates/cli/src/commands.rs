use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use patchdecomp::config::{DataSource, RunConfig};
use patchdecomp::data::{
    format_timestamp, synth_generate, window_at, window_origins, write_csv, Subset, SynthSpec,
    TimeSeriesDataset, WindowSample,
};
use patchdecomp::eval::{
    compare_strategies, comparison_rows, metrics, seasonal_naive, write_comparison_csv, Metrics,
    ReplacementMeans,
};
use patchdecomp::explain::{
    contribution_records, curve_records, global_explain, importance_records, local_explain,
    variable_curves, write_contributions_csv, write_contributions_json, write_curves_csv,
    write_importance_csv, write_importance_json,
};
use patchdecomp::model::{DataDims, PatchDecomp};
use patchdecomp::train::{load_checkpoint_for, save_checkpoint, train as fit, EpochRecord};

use crate::error::CliError;
use crate::{AopcrArgs, ForecastArgs, RunArgs, SynthArgs, TrainArgs};

/// Largest decomposition residual `--check-decomposition` accepts.
const DECOMPOSITION_TOLERANCE: f64 = 1e-6;

fn load_config(run: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::from_path(&run.config)?;
    if let Some(seed) = run.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Internal(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::User(format!("cannot create {}: {e}", dir.display())))
}

/// Non-overlapping test windows, one per horizon.
fn test_windows(cfg: &RunConfig, ds: &TimeSeriesDataset) -> Vec<WindowSample> {
    let (l, h) = (cfg.model.lookback, cfg.model.horizon);
    window_origins(ds, l, h, h, Subset::Test)
        .into_iter()
        .map(|o| window_at(ds, o, l, h).expect("origin from window_origins"))
        .collect()
}

/// Steps per day when the sampling interval divides a day and the lookback
/// covers it, otherwise the horizon.
fn season(ds: &TimeSeriesDataset, lookback: usize, horizon: usize) -> usize {
    let day = 86_400;
    if ds.step_seconds > 0 && day % ds.step_seconds == 0 {
        let steps = (day / ds.step_seconds) as usize;
        if steps <= lookback {
            return steps;
        }
    }
    horizon.min(lookback)
}

fn load_model(cfg: &RunConfig, checkpoint: Option<&PathBuf>, ds: &TimeSeriesDataset) -> Result<PatchDecomp, CliError> {
    let path = checkpoint.cloned().unwrap_or_else(|| cfg.output_dir.join("best.ckpt"));
    Ok(load_checkpoint_for(&path, &cfg.model, DataDims::of(ds))?)
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let (mut spec, split) = match &args.config {
        Some(path) => {
            let cfg = RunConfig::from_path(path)?;
            match cfg.data {
                DataSource::Synth(spec) => (spec, cfg.split),
                DataSource::Csv(_) => {
                    return Err(CliError::User(format!(
                        "{} describes a CSV dataset, not a synthetic one",
                        path.display()
                    )))
                }
            }
        }
        None => (SynthSpec::default(), Default::default()),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let ds = synth_generate(&spec, &split)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_csv(&ds, &args.out)?;
    println!("wrote {} rows to {}", ds.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct RunMetrics {
    seed: u64,
    best_epoch: usize,
    best_valid_mae: f64,
    stopped_early: bool,
    epochs: Vec<EpochRecord>,
    n_train_windows: usize,
    n_valid_windows: usize,
    n_test_windows: usize,
    test: Metrics,
    season: usize,
    seasonal_naive: Metrics,
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.run)?;
    let dir = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let ds = cfg.load_dataset()?;
    create_dir(&dir)?;
    let model = PatchDecomp::new(cfg.model.clone(), DataDims::of(&ds), cfg.train.seed)?
        .with_variable_names(ds.variable_names())?;
    info!(
        "training on {} rows, {} patches per window",
        ds.len(),
        model.layout.n_patch()
    );
    let (best, report) = fit(model, &ds, &cfg.train)?;
    save_checkpoint(&best, &dir.join("best.ckpt"))?;
    write_json(&report, &dir.join("report.json"))?;
    fs::write(dir.join("config.json"), cfg.to_json() + "\n")?;

    let windows = test_windows(&cfg, &ds);
    if windows.is_empty() {
        return Err(CliError::User("the test subset has no complete window".into()));
    }
    let refs: Vec<&WindowSample> = windows.iter().collect();
    let targets: Vec<Vec<f64>> = windows.iter().map(|w| w.y_future.clone()).collect();
    let test = metrics(&best.predict(&refs)?, &targets)?;
    let s = season(&ds, cfg.model.lookback, cfg.model.horizon);
    let naive: Vec<Vec<f64>> = windows
        .iter()
        .map(|w| seasonal_naive(w, s))
        .collect::<Result<_, _>>()?;
    let run_metrics = RunMetrics {
        seed: cfg.train.seed,
        best_epoch: report.best_epoch,
        best_valid_mae: report.best_valid_mae,
        stopped_early: report.stopped_early,
        epochs: report.epochs.clone(),
        n_train_windows: report.n_train_windows,
        n_valid_windows: report.n_valid_windows,
        n_test_windows: windows.len(),
        test,
        season: s,
        seasonal_naive: metrics(&naive, &targets)?,
    };
    write_json(&run_metrics, &dir.join("metrics.json"))?;
    println!(
        "best epoch {} (valid MAE {:.6}); test MAE {:.6}, MSE {:.6}; seasonal naive MAE {:.6}",
        report.best_epoch,
        report.best_valid_mae,
        test.mae,
        test.mse,
        run_metrics.seasonal_naive.mae
    );
    println!("run written to {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct PredictionRow {
    origin: usize,
    timestamp: String,
    h: usize,
    y_hat: f64,
    y_true: f64,
}

pub fn forecast(args: ForecastArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.run)?;
    let ds = cfg.load_dataset()?;
    let model = load_model(&cfg, args.checkpoint.as_ref(), &ds)?;
    let (l, h) = (cfg.model.lookback, cfg.model.horizon);
    let windows: Vec<WindowSample> = match &args.origins {
        Some(origins) => origins
            .iter()
            .map(|&o| window_at(&ds, o, l, h))
            .collect::<Result<_, _>>()?,
        None => test_windows(&cfg, &ds),
    };
    if windows.is_empty() {
        return Err(CliError::User("no forecast origins".into()));
    }
    let refs: Vec<&WindowSample> = windows.iter().collect();
    let dir = args.out.clone().unwrap_or_else(|| cfg.output_dir.join("forecast"));
    create_dir(&dir)?;

    let decompositions = if args.explain || args.check_decomposition {
        Some(model.explain(&refs)?)
    } else {
        None
    };
    let predictions = match &decompositions {
        Some(ds) => ds.iter().map(|d| d.prediction.clone()).collect(),
        None => model.predict(&refs)?,
    };

    let mut w = csv::Writer::from_path(dir.join("predictions.csv"))?;
    for (win, pred) in windows.iter().zip(&predictions) {
        for (step, (&y_hat, &y_true)) in pred.iter().zip(&win.y_future).enumerate() {
            w.serialize(PredictionRow {
                origin: win.origin,
                timestamp: format_timestamp(ds.timestamps[win.origin + 1 + step]),
                h: step,
                y_hat,
                y_true,
            })?;
        }
    }
    w.flush()?;
    println!("{} forecasts written to {}", windows.len(), dir.display());

    let Some(decompositions) = decompositions else {
        return Ok(());
    };
    if args.check_decomposition {
        let worst = decompositions
            .iter()
            .map(|d| d.max_residual())
            .fold(0.0, f64::max);
        println!("max decomposition residual: {worst:.3e}");
        if !(worst <= DECOMPOSITION_TOLERANCE) {
            return Err(CliError::Internal(format!(
                "decomposition residual {worst:.3e} exceeds {DECOMPOSITION_TOLERANCE:.0e}"
            )));
        }
    }
    if args.explain {
        let layout = &model.layout;
        let mut contributions = Vec::new();
        let mut curves = Vec::new();
        let mut locals = Vec::new();
        for (d, win) in decompositions.iter().zip(&windows) {
            contributions.extend(contribution_records(d, layout, win.origin));
            curves.extend(curve_records(&variable_curves(d, layout, win.origin)?));
            locals.push(local_explain(d, layout, win.origin)?);
        }
        let global = global_explain(&locals)?;
        let importance = importance_records(layout, &locals, Some(&global));
        write_contributions_csv(&contributions, &dir.join("contributions.csv"))?;
        write_contributions_json(&contributions, &dir.join("contributions.json"))?;
        write_curves_csv(&curves, &dir.join("curves.csv"))?;
        write_importance_csv(&importance, &dir.join("importance.csv"))?;
        write_importance_json(&importance, &dir.join("importance.json"))?;
        let top = global.ranking()[0];
        let e = layout.entry(top).expect("ranked index in layout");
        println!(
            "most important patch over {} windows: {} slot {} (flat index {})",
            global.n_windows,
            layout.variable_name(e.variable),
            e.slot,
            top
        );
    }
    Ok(())
}

pub fn aopcr(args: AopcrArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.run)?;
    let ds = cfg.load_dataset()?;
    let model = load_model(&cfg, args.checkpoint.as_ref(), &ds)?;
    let windows = test_windows(&cfg, &ds);
    let refs: Vec<&WindowSample> = windows.iter().collect();
    let means = ReplacementMeans::from_test_region(&ds);
    let (guided, random) = compare_strategies(&model, &refs, &means, &args.k, args.seeds, cfg.train.seed)?;
    let rows = comparison_rows(&[&guided, &random]);
    let path = args.out.clone().unwrap_or_else(|| cfg.output_dir.join("aopcr.csv"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_comparison_csv(&rows, &path)?;
    println!("{:>6}  {:>12}  {:>12}  {:>10}", "k", "guided", "random", "std");
    for (i, k) in args.k.iter().enumerate() {
        println!(
            "{k:>6.1}  {:>12.6}  {:>12.6}  {:>10.6}",
            guided.scores[i], random.scores[i], random.stds[i]
        );
    }
    println!("{} test windows; results written to {}", windows.len(), path.display());
    Ok(())
}
