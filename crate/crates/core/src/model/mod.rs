//! The patch-decomposable forecasting network.

mod config;
mod network;
mod params;
mod revin;

pub use config::{DataDims, ModelConfig};
pub use network::{observed_mask, prepare, ForwardOptions, Prepared};
pub use params::{EncoderBlock, Linear, Params};
pub use revin::{revin_normalize, window_stats, RevInState, SeriesStats, REVIN_EPS};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{DataError, PatchLayout, WindowSample};
use crate::numerics::{Graph, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, masks drawn from a generator seeded with `seed`.
    Train { seed: u64 },
    Eval,
}

/// Per-patch additive explanation of one forecast.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    /// `contributions[h][j]`: amount input patch `j` adds at step `h`, in
    /// target units.
    pub contributions: Vec<Vec<f64>>,
    /// RevIN mean plus every global additive bias.
    pub baseline: Vec<f64>,
    pub prediction: Vec<f64>,
}

impl Decomposition {
    pub fn horizon(&self) -> usize {
        self.baseline.len()
    }

    pub fn n_patch(&self) -> usize {
        self.contributions.first().map_or(0, Vec::len)
    }

    /// `baseline[h] + sum_j c[h][j]`
    pub fn reconstruct(&self) -> Vec<f64> {
        self.contributions
            .iter()
            .zip(&self.baseline)
            .map(|(row, b)| b + row.iter().sum::<f64>())
            .collect()
    }

    /// `max_h |reconstruct[h] - prediction[h]| / (1 + |prediction[h]|)`
    pub fn max_residual(&self) -> f64 {
        self.reconstruct()
            .iter()
            .zip(&self.prediction)
            .map(|(r, p)| (r - p).abs() / (1.0 + p.abs()))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastOutput {
    pub y_hat: Vec<f64>,
    pub decomposition: Option<Decomposition>,
}

/// Raw tensors of one batched forward pass.
#[derive(Clone, Debug)]
pub struct BatchOutput {
    /// `[B, H]`
    pub y_hat: Tensor,
    /// `[B * nh, Nf, Np]`
    pub alpha: Tensor,
    /// `[B, Np, D]`
    pub z_src: Tensor,
    /// `[B, Nf, D]`
    pub z_tgt: Tensor,
    /// `[B, Nf, D]`, dense attention path.
    pub z_pred: Tensor,
    /// `[B, Nf, Np, D]`
    pub per_patch: Option<Tensor>,
    pub decompositions: Option<Vec<Decomposition>>,
}

impl BatchOutput {
    pub fn predictions(&self) -> Vec<Vec<f64>> {
        let h = self.y_hat.shape()[1];
        self.y_hat.data().chunks(h.max(1)).map(<[f64]>::to_vec).collect()
    }
}

/// Windows per graph when predicting many windows.
pub const EVAL_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct PatchDecomp {
    pub config: ModelConfig,
    pub dims: DataDims,
    pub layout: PatchLayout,
    pub params: Params<Tensor>,
}

impl PatchDecomp {
    /// Freshly initialized model.
    pub fn new(config: ModelConfig, dims: DataDims, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = config.layout(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::init(&config, dims, &layout, &mut rng);
        Ok(Self {
            config,
            dims,
            layout,
            params,
        })
    }

    /// Wraps existing parameters after checking every shape.
    pub fn from_params(
        config: ModelConfig,
        dims: DataDims,
        params: Params<Tensor>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = config.layout(dims)?;
        let expected = Params::zeros(&config, dims, &layout).shapes();
        if params.encoder.len() != config.n_enc || params.shapes() != expected {
            return Err(ModelError::Config(
                "parameter shapes do not match the configuration".into(),
            ));
        }
        Ok(Self {
            config,
            dims,
            layout,
            params,
        })
    }

    /// Attaches display names for the layout's variables.
    pub fn with_variable_names(mut self, names: Vec<String>) -> Result<Self, ModelError> {
        self.layout = self.layout.with_variable_names(names)?;
        Ok(self)
    }

    pub fn prepare(&self, samples: &[&WindowSample]) -> Result<Prepared, ModelError> {
        prepare(&self.layout, self.dims.d_stat, samples)
    }

    fn leaves(&self, g: &mut Graph, requires_grad: bool) -> Params<Var> {
        self.params.map(|_, t| g.leaf(t.clone(), requires_grad))
    }

    /// One forward pass over a prepared batch.
    pub fn forward_prepared(
        &self,
        batch: &Prepared,
        opts: ForwardOptions<'_>,
    ) -> Result<BatchOutput, ModelError> {
        let mut g = Graph::new();
        let p = self.leaves(&mut g, false);
        let nodes = network::build(&mut g, &p, &self.config, &self.layout, batch, opts)?;
        let y_hat = g.value(nodes.y_hat).clone();
        let (per_patch, decompositions) = match &nodes.decomposed {
            Some(dn) => {
                let bias_head = g.value(dn.bias_through_head).data().to_vec();
                let c = g.value(dn.contributions);
                (
                    Some(g.value(dn.per_patch).clone()),
                    Some(self.assemble(batch, &y_hat, c, &bias_head)),
                )
            }
            None => (None, None),
        };
        Ok(BatchOutput {
            alpha: g.value(nodes.alpha).clone(),
            z_src: g.value(nodes.z_src).clone(),
            z_tgt: g.value(nodes.z_tgt).clone(),
            z_pred: g.value(nodes.z_pred).clone(),
            y_hat,
            per_patch,
            decompositions,
        })
    }

    fn assemble(
        &self,
        batch: &Prepared,
        y_hat: &Tensor,
        contributions: &Tensor,
        bias_head: &[f64],
    ) -> Vec<Decomposition> {
        let (np, h) = (self.layout.n_patch(), self.layout.horizon);
        let gamma0 = self.params.revin_gamma.data()[0];
        let beta0 = self.params.revin_beta.data()[0];
        let c = contributions.data();
        (0..batch.batch_size())
            .map(|b| {
                let (mu, sd) = (batch.mean[b], batch.std[b]);
                let block = &c[b * np * h..(b + 1) * np * h];
                Decomposition {
                    contributions: (0..h)
                        .map(|t| (0..np).map(|j| block[j * h + t]).collect())
                        .collect(),
                    baseline: bias_head
                        .iter()
                        .map(|v| (v - beta0) / gamma0 * sd + mu)
                        .collect(),
                    prediction: y_hat.data()[b * h..(b + 1) * h].to_vec(),
                }
            })
            .collect()
    }

    /// Forecast for a single window.
    pub fn forward(
        &self,
        sample: &WindowSample,
        mode: Mode,
        want_decomposition: bool,
    ) -> Result<ForecastOutput, ModelError> {
        let batch = self.prepare(&[sample])?;
        let mut rng;
        let rng_ref: Option<&mut dyn RngCore> = match mode {
            Mode::Train { seed } => {
                rng = ChaCha8Rng::seed_from_u64(seed);
                Some(&mut rng)
            }
            Mode::Eval => None,
        };
        let out = self.forward_prepared(
            &batch,
            ForwardOptions {
                rng: rng_ref,
                alpha: None,
                decompose: want_decomposition,
            },
        )?;
        Ok(ForecastOutput {
            y_hat: out.y_hat.into_data(),
            decomposition: out.decompositions.and_then(|mut d| d.pop()),
        })
    }

    /// Eval-mode forecasts, chunked.
    pub fn predict(&self, samples: &[&WindowSample]) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(EVAL_CHUNK) {
            let batch = self.prepare(chunk)?;
            out.extend(self.forward_prepared(&batch, ForwardOptions::eval())?.predictions());
        }
        Ok(out)
    }

    /// Eval-mode forecasts with decompositions, chunked.
    pub fn explain(&self, samples: &[&WindowSample]) -> Result<Vec<Decomposition>, ModelError> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(EVAL_CHUNK) {
            let batch = self.prepare(chunk)?;
            let opts = ForwardOptions {
                decompose: true,
                ..ForwardOptions::eval()
            };
            out.extend(
                self.forward_prepared(&batch, opts)?
                    .decompositions
                    .expect("requested"),
            );
        }
        Ok(out)
    }

    /// Batch MAE and its gradient with respect to every parameter.
    /// Dropout masks come from `rng` when given.
    pub fn loss_and_grads(
        &self,
        batch: &Prepared,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(f64, Params<Tensor>), ModelError> {
        let targets = batch.targets.as_ref().ok_or_else(|| {
            ModelError::Config("training windows must carry their full horizon".into())
        })?;
        let mut g = Graph::new();
        let p = self.leaves(&mut g, true);
        let opts = ForwardOptions {
            rng,
            alpha: None,
            decompose: false,
        };
        let nodes = network::build(&mut g, &p, &self.config, &self.layout, batch, opts)?;
        let loss = network::mae_node(&mut g, nodes.y_hat, targets)?;
        let value = g.value(loss).data()[0];
        let mut grads = g.backward(loss)?;
        let mut shapes = self.params.named().into_iter().map(|(_, t)| t.shape().to_vec());
        let result = p.map(|_, &v| {
            let shape = shapes.next().expect("same traversal");
            grads.take_or_zeros(v, &shape)
        });
        Ok((value, result))
    }

    /// Batch MAE in eval mode.
    pub fn mae(&self, samples: &[&WindowSample]) -> Result<f64, ModelError> {
        let preds = self.predict(samples)?;
        let (mut total, mut n) = (0.0, 0usize);
        for (p, s) in preds.iter().zip(samples) {
            for (a, b) in p.iter().zip(&s.y_future) {
                total += (a - b).abs();
                n += 1;
            }
        }
        Ok(if n == 0 { 0.0 } else { total / n as f64 })
    }
}

