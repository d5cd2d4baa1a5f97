#![allow(dead_code)]

use patchdecomp::data::WindowSample;
use patchdecomp::model::{DataDims, ModelConfig, Params, PatchDecomp};
use patchdecomp::numerics::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config(l: usize, h: usize, p: usize, d: usize, heads: usize) -> ModelConfig {
    ModelConfig {
        lookback: l,
        horizon: h,
        patch_len: p,
        d_model: d,
        n_heads: heads,
        n_enc: 1,
        d_ff: d,
        dropout: 0.0,
    }
}

pub fn tiny_config() -> ModelConfig {
    config(8, 4, 4, 8, 2)
}

/// Model with every tensor drawn at random, including the parts that a
/// fresh initialization leaves at constants (`w_bias`, RevIN affine).
pub fn random_model(config: ModelConfig, dims: DataDims, seed: u64) -> PatchDecomp {
    let mut model = PatchDecomp::new(config, dims, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    model.params.for_each_mut(|name, t| {
        for v in t.data_mut() {
            *v = if name == "revin.gamma" {
                rng.random_range(0.5..1.5)
            } else {
                rng.random_range(-0.5..0.5)
            };
        }
    });
    model
}

/// Window with values uniform in `[-scale, scale]` around `offset`.
pub fn random_sample(config: &ModelConfig, dims: DataDims, seed: u64) -> WindowSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l, h) = (config.lookback, config.horizon);
    let series = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let offset = rng.random_range(-5.0..5.0);
        let scale = rng.random_range(0.5..3.0);
        (0..n).map(|_| offset + scale * rng.random_range(-1.0..1.0)).collect()
    };
    WindowSample {
        y_hist: series(l, &mut rng),
        x_hist: (0..dims.d_hist).map(|_| series(l, &mut rng)).collect(),
        x_futr: (0..dims.d_futr).map(|_| series(l + h, &mut rng)).collect(),
        x_stat: (0..dims.d_stat).map(|_| rng.random_range(-1.0..1.0)).collect(),
        y_future: series(h, &mut rng),
        origin: l - 1,
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub struct GradientCheck {
    /// Loss recomputed from eval-mode predictions.
    pub loss: f64,
    pub worst: f64,
    pub detail: String,
    pub checked: usize,
}

/// Compares every scalar of `grads` against central differences of an
/// MAE recomputed from eval-mode predictions. Relative error uses
/// `max(|a|, |n|, floor)` as denominator.
pub fn gradient_check(
    model: &PatchDecomp,
    samples: &[&WindowSample],
    grads: &Params<Tensor>,
    step: f64,
    floor: f64,
) -> GradientCheck {
    let h = model.config.horizon;
    let loss_of = |m: &PatchDecomp| {
        let preds = m.predict(samples).unwrap();
        let mut total = 0.0;
        for (p, s) in preds.iter().zip(samples) {
            total += p.iter().zip(&s.y_future).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
        total / (samples.len() * h) as f64
    };
    let named: Vec<(String, Vec<f64>)> = grads
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();
    let mut worst = (0.0, String::new());
    let mut checked = 0;
    for (name, analytic) in &named {
        for (i, &a) in analytic.iter().enumerate() {
            let bump = |delta: f64| {
                let mut m = model.clone();
                m.params.for_each_mut(|n, t| {
                    if n == name {
                        t.data_mut()[i] += delta;
                    }
                });
                loss_of(&m)
            };
            let numeric = (bump(step) - bump(-step)) / (2.0 * step);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}] analytic {a} numeric {numeric}"));
            }
            checked += 1;
        }
    }
    GradientCheck {
        loss: loss_of(model),
        worst: worst.0,
        detail: worst.1,
        checked,
    }
}
