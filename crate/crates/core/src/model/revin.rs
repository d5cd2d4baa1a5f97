//! Reversible instance normalization over a window's lookback.

use crate::data::WindowSample;

pub const REVIN_EPS: f64 = 1e-5;

/// Lookback statistics of one variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesStats {
    pub mean: f64,
    /// Population standard deviation, clamped below at [`REVIN_EPS`].
    pub std: f64,
}

impl SeriesStats {
    /// Statistics over `lookback`. A constant series gets its exact value as
    /// mean so that it standardizes to exactly zero.
    pub fn of(lookback: &[f64]) -> Self {
        let first = lookback.first().copied().unwrap_or(0.0);
        if lookback.iter().all(|&v| v == first) {
            return Self {
                mean: first,
                std: REVIN_EPS,
            };
        }
        let n = lookback.len() as f64;
        let mean = lookback.iter().sum::<f64>() / n;
        let var = lookback.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt().max(REVIN_EPS),
        }
    }
}

/// Everything needed to undo [`revin_normalize`].
#[derive(Clone, Debug, PartialEq)]
pub struct RevInState {
    /// One entry per layout variable (target, hist_exog, futr_exog).
    pub stats: Vec<SeriesStats>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

fn n_variables(sample: &WindowSample) -> usize {
    1 + sample.x_hist.len() + sample.x_futr.len()
}

/// Lookback statistics of every variable. Future-known channels use only
/// their first `L` values.
pub fn window_stats(sample: &WindowSample) -> Vec<SeriesStats> {
    let l = sample.lookback();
    (0..n_variables(sample))
        .map(|v| SeriesStats::of(&sample.variable_series(v)[..l]))
        .collect()
}

/// Standardizes every channel with its lookback statistics, then applies
/// the affine `(gamma, beta)` per variable. `y_future` is left untouched.
pub fn revin_normalize(
    sample: &WindowSample,
    gamma: &[f64],
    beta: &[f64],
) -> (WindowSample, RevInState) {
    let stats = window_stats(sample);
    let mut out = sample.clone();
    for (v, s) in stats.iter().enumerate() {
        for x in out.variable_series_mut(v).iter_mut() {
            *x = (*x - s.mean) / s.std * gamma[v] + beta[v];
        }
    }
    let state = RevInState {
        stats,
        gamma: gamma.to_vec(),
        beta: beta.to_vec(),
    };
    (out, state)
}

impl RevInState {
    pub fn identity_affine(stats: Vec<SeriesStats>) -> Self {
        let n = stats.len();
        Self {
            stats,
            gamma: vec![1.0; n],
            beta: vec![0.0; n],
        }
    }

    /// Inverse transform of one value of variable `v`.
    pub fn denormalize_value(&self, v: usize, x: f64) -> f64 {
        let s = self.stats[v];
        (x - self.beta[v]) / self.gamma[v] * s.std + s.mean
    }

    /// Maps a normalized forecast of the target back to original units.
    pub fn denormalize_target(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&x| self.denormalize_value(0, x)).collect()
    }

    pub fn denormalize(&self, sample: &WindowSample) -> WindowSample {
        let mut out = sample.clone();
        for v in 0..self.stats.len() {
            for x in out.variable_series_mut(v).iter_mut() {
                *x = self.denormalize_value(v, *x);
            }
        }
        out
    }
}
