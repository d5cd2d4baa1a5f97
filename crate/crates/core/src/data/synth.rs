//! Seeded synthetic datasets with known structure.
//!
//! The target is
//!
//! ```text
//! y_t = level + a * sin(2π (t mod 24) / 24) + b * cos(2π d(t) / 7)
//!       + Σ_j c_j * exog_j(t + δ_j) + ε_t
//! ```
//!
//! with `d(t) = floor(t / 24) mod 7` the day of week, `exog_j` unit-variance
//! AR(1) processes emitted as future-known channels, and `ε_t ~ N(0, σ²)`.
//! Seasonal terms are evaluated on `t mod period` so they repeat bit-exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Channel, DataError, SplitSpec, TimeSeriesDataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub length: usize,
    /// Epoch seconds of the first row; the default is a Monday midnight.
    pub start: i64,
    pub step_seconds: i64,
    pub level: f64,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    /// One coupling weight per exogenous channel.
    pub coupling: Vec<f64>,
    /// Non-negative lead of each exogenous channel; empty means all zero.
    pub lags: Vec<usize>,
    /// AR(1) coefficient of the exogenous processes.
    pub exog_persistence: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            length: 4032,
            start: 1_704_067_200,
            step_seconds: 3600,
            level: 0.0,
            daily_amplitude: 1.0,
            weekly_amplitude: 0.5,
            coupling: vec![1.0, 0.5],
            lags: Vec::new(),
            exog_persistence: 0.95,
            noise_sigma: 0.1,
            seed: 7,
        }
    }
}

fn daily(t: usize) -> f64 {
    (2.0 * std::f64::consts::PI * (t % 24) as f64 / 24.0).sin()
}

fn weekly(t: usize) -> f64 {
    let day = (t / 24) % 7;
    (2.0 * std::f64::consts::PI * day as f64 / 7.0).cos()
}

pub fn synth_generate(spec: &SynthSpec, split: &SplitSpec) -> Result<TimeSeriesDataset, DataError> {
    if spec.length < 2 {
        return Err(DataError::TooShort {
            len: spec.length,
            needed: 2,
        });
    }
    if !spec.lags.is_empty() && spec.lags.len() != spec.coupling.len() {
        return Err(DataError::InvalidSynth(format!(
            "{} lags for {} exogenous channels",
            spec.lags.len(),
            spec.coupling.len()
        )));
    }
    if !(spec.exog_persistence.abs() < 1.0) || !(spec.noise_sigma >= 0.0) {
        return Err(DataError::InvalidSynth(
            "exog_persistence must lie in (-1, 1) and noise_sigma must be non-negative".into(),
        ));
    }
    let lag = |j: usize| spec.lags.get(j).copied().unwrap_or(0);
    let max_lag = (0..spec.coupling.len()).map(lag).max().unwrap_or(0);
    let n = spec.length;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let phi = spec.exog_persistence;
    let innovation = (1.0 - phi * phi).sqrt();
    let exog: Vec<Vec<f64>> = spec
        .coupling
        .iter()
        .map(|_| {
            let mut series = Vec::with_capacity(n + max_lag);
            let mut state = normal();
            for _ in 0..n + max_lag {
                series.push(state);
                state = phi * state + innovation * normal();
            }
            series
        })
        .collect();

    let target: Vec<f64> = (0..n)
        .map(|t| {
            let mut y = spec.level
                + spec.daily_amplitude * daily(t)
                + spec.weekly_amplitude * weekly(t);
            for (j, c) in spec.coupling.iter().enumerate() {
                y += c * exog[j][t + lag(j)];
            }
            y + spec.noise_sigma * normal()
        })
        .collect();

    let timestamps = (0..n as i64).map(|i| spec.start + i * spec.step_seconds).collect();
    let futr = exog
        .into_iter()
        .enumerate()
        .map(|(j, mut s)| {
            s.truncate(n);
            Channel::new(format!("exog{}", j + 1), s)
        })
        .collect();
    TimeSeriesDataset::new(
        timestamps,
        Channel::new("y", target),
        Vec::new(),
        futr,
        Vec::new(),
        split.resolve(n)?,
    )
}
