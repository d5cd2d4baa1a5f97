//! Forecast accuracy and the perturbation test for explanations: remove
//! the patches an explanation ranks highest and measure how much the
//! forecast moves.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{PatchLayout, Subset, TimeSeriesDataset, WindowSample};
use crate::explain::{local_explain, rank_desc, ExplainError};
use crate::model::{ModelError, PatchDecomp};

pub const DEFAULT_KS: [f64; 5] = [5.0, 7.5, 10.0, 12.5, 15.0];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{what}: {left} vs {right} values")]
    Length {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("patch index {index} outside 0..{n_patch}")]
    PatchIndex { index: usize, n_patch: usize },
    #[error("k = {0} is outside (0, 100)")]
    Percentage(f64),
    #[error("nothing to evaluate: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
}

/// MSE and MAE over every window and step.
pub fn metrics(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Metrics, EvalError> {
    if predictions.len() != targets.len() {
        return Err(EvalError::Length {
            what: "windows",
            left: predictions.len(),
            right: targets.len(),
        });
    }
    let (mut se, mut ae, mut n) = (0.0, 0.0, 0usize);
    for (p, t) in predictions.iter().zip(targets) {
        if p.len() != t.len() {
            return Err(EvalError::Length {
                what: "horizon",
                left: p.len(),
                right: t.len(),
            });
        }
        for (a, b) in p.iter().zip(t) {
            se += (a - b) * (a - b);
            ae += (a - b).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::Empty("no forecast values"));
    }
    Ok(Metrics {
        mse: se / n as f64,
        mae: ae / n as f64,
    })
}

/// Forecast that repeats the value observed `season` steps earlier,
/// feeding its own output back once the horizon exceeds one season.
pub fn seasonal_naive(window: &WindowSample, season: usize) -> Result<Vec<f64>, EvalError> {
    let l = window.y_hist.len();
    if season == 0 || season > l {
        return Err(EvalError::Length {
            what: "season vs lookback",
            left: season,
            right: l,
        });
    }
    let mut out: Vec<f64> = Vec::with_capacity(window.y_future.len());
    for h in 0..window.y_future.len() {
        let v = if h < season { window.y_hist[l - season + h] } else { out[h - season] };
        out.push(v);
    }
    Ok(out)
}

/// Per-variable values that stand in for removed data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplacementMeans {
    /// One per layout variable: target, hist_exog, futr_exog.
    pub means: Vec<f64>,
}

impl ReplacementMeans {
    /// Means of every variable over the test region.
    pub fn from_test_region(ds: &TimeSeriesDataset) -> Self {
        let range = ds.subset_range(Subset::Test);
        let means = (0..1 + ds.d_hist() + ds.d_futr())
            .map(|v| {
                let values = &ds.variable(v).values[range.clone()];
                values.iter().sum::<f64>() / values.len().max(1) as f64
            })
            .collect();
        Self { means }
    }
}

/// Replaces every observed point of the listed patches with its variable's
/// replacement mean. Padding, `y_future` and other patches are untouched.
pub fn remove_patches(
    sample: &WindowSample,
    layout: &PatchLayout,
    patch_ids: &[usize],
    means: &ReplacementMeans,
) -> Result<WindowSample, EvalError> {
    if means.means.len() != layout.n_variables() {
        return Err(EvalError::Length {
            what: "replacement means",
            left: means.means.len(),
            right: layout.n_variables(),
        });
    }
    layout.check_sample(sample).map_err(ModelError::from)?;
    let mut out = sample.clone();
    for &j in patch_ids {
        let e = layout.entry(j).ok_or(EvalError::PatchIndex {
            index: j,
            n_patch: layout.n_patch(),
        })?;
        out.variable_series_mut(e.variable)[e.series_range.clone()].fill(means.means[e.variable]);
    }
    Ok(out)
}

/// Patches removed for percentage `k`: `max(1, round_half_up(k/100 * N))`.
pub fn removal_count(k: f64, n_patch: usize) -> usize {
    ((k / 100.0 * n_patch as f64 + 0.5).floor() as usize).clamp(1, n_patch.max(1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Remove patches in order of local importance.
    Guided,
    /// Remove patches in a seeded random order.
    Random,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Guided => "guided",
            Strategy::Random => "random",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AopcrConfig {
    pub ks: Vec<f64>,
    pub strategy: Strategy,
    pub seed: u64,
    /// Fixed number of removed patches for every `k`; tests only.
    #[serde(default)]
    pub m_override: Option<usize>,
}

impl Default for AopcrConfig {
    fn default() -> Self {
        Self {
            ks: DEFAULT_KS.to_vec(),
            strategy: Strategy::Guided,
            seed: 0,
            m_override: None,
        }
    }
}

impl AopcrConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        match self.ks.iter().find(|k| !(**k > 0.0 && **k < 100.0)) {
            Some(&k) => Err(EvalError::Percentage(k)),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AopcrResult {
    pub strategy: Strategy,
    pub ks: Vec<f64>,
    pub scores: Vec<f64>,
    /// Spread over random seeds; zero for a single run.
    pub stds: Vec<f64>,
    pub n_windows: usize,
    pub n_seeds: usize,
}

/// Removal order of each window's patches, most important first.
pub fn removal_orders(
    model: &PatchDecomp,
    windows: &[&WindowSample],
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<Vec<usize>>, EvalError> {
    let np = model.layout.n_patch();
    match strategy {
        Strategy::Guided => model
            .explain(windows)?
            .iter()
            .zip(windows)
            .map(|(d, w)| Ok(rank_desc(&local_explain(d, &model.layout, w.origin)?.importance)))
            .collect(),
        Strategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(windows
                .iter()
                .map(|_| {
                    let mut order: Vec<usize> = (0..np).collect();
                    order.shuffle(&mut rng);
                    order
                })
                .collect())
        }
    }
}

/// Mean absolute forecast change when each window loses the first `m`
/// patches of its order: `sum_t sum_h |F(x_t) - F(x_t \ m)| / (T * H)`.
pub fn perturbation_score(
    model: &PatchDecomp,
    windows: &[&WindowSample],
    base: &[Vec<f64>],
    orders: &[Vec<usize>],
    m: usize,
    means: &ReplacementMeans,
) -> Result<f64, EvalError> {
    let perturbed: Vec<WindowSample> = windows
        .iter()
        .zip(orders)
        .map(|(w, o)| remove_patches(w, &model.layout, &o[..m.min(o.len())], means))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&WindowSample> = perturbed.iter().collect();
    let preds = model.predict(&refs)?;
    let h = model.layout.horizon;
    let total: f64 = preds
        .iter()
        .zip(base)
        .flat_map(|(p, b)| p.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .sum();
    Ok(total / (windows.len() * h) as f64)
}

/// One strategy, one seed.
pub fn aopcr(
    model: &PatchDecomp,
    windows: &[&WindowSample],
    means: &ReplacementMeans,
    config: &AopcrConfig,
) -> Result<AopcrResult, EvalError> {
    config.validate()?;
    if windows.is_empty() {
        return Err(EvalError::Empty("no test windows"));
    }
    let base = model.predict(windows)?;
    let orders = removal_orders(model, windows, config.strategy, config.seed)?;
    let np = model.layout.n_patch();
    let scores = config
        .ks
        .iter()
        .map(|&k| {
            let m = config.m_override.unwrap_or_else(|| removal_count(k, np));
            perturbation_score(model, windows, &base, &orders, m, means)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AopcrResult {
        strategy: config.strategy,
        ks: config.ks.clone(),
        stds: vec![0.0; scores.len()],
        scores,
        n_windows: windows.len(),
        n_seeds: 1,
    })
}

/// Mean and population standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Guided once, random over seeds `seed .. seed + n_seeds`.
pub fn compare_strategies(
    model: &PatchDecomp,
    windows: &[&WindowSample],
    means: &ReplacementMeans,
    ks: &[f64],
    n_seeds: usize,
    seed: u64,
) -> Result<(AopcrResult, AopcrResult), EvalError> {
    if n_seeds == 0 {
        return Err(EvalError::Empty("n_seeds must be at least 1"));
    }
    let base_cfg = AopcrConfig {
        ks: ks.to_vec(),
        strategy: Strategy::Guided,
        seed,
        m_override: None,
    };
    let guided = aopcr(model, windows, means, &base_cfg)?;
    let runs = (0..n_seeds as u64)
        .map(|i| {
            let cfg = AopcrConfig {
                strategy: Strategy::Random,
                seed: seed + i,
                ..base_cfg.clone()
            };
            aopcr(model, windows, means, &cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (scores, stds) = (0..ks.len())
        .map(|i| mean_std(&runs.iter().map(|r| r.scores[i]).collect::<Vec<_>>()))
        .unzip();
    let random = AopcrResult {
        strategy: Strategy::Random,
        ks: ks.to_vec(),
        scores,
        stds,
        n_windows: windows.len(),
        n_seeds,
    };
    Ok((guided, random))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: Strategy,
    pub k: f64,
    pub score: f64,
    pub std: f64,
    #[serde(rename = "T")]
    pub n_windows: usize,
    pub n_seeds: usize,
}

pub fn comparison_rows(results: &[&AopcrResult]) -> Vec<ComparisonRow> {
    results
        .iter()
        .flat_map(|r| {
            r.ks.iter().enumerate().map(move |(i, &k)| ComparisonRow {
                strategy: r.strategy,
                k,
                score: r.scores[i],
                std: r.stds[i],
                n_windows: r.n_windows,
                n_seeds: r.n_seeds,
            })
        })
        .collect()
}

pub fn write_comparison_csv(rows: &[ComparisonRow], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_comparison_csv(path: &Path) -> Result<Vec<ComparisonRow>, EvalError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
