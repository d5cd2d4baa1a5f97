//! Learnable tensors of the network.
//!
//! [`Params`] is generic over its leaf type so the same structure holds
//! parameter values (`Params<Tensor>`), graph handles during a forward pass
//! (`Params<Var>`), gradients, and optimizer moments. Traversal order is
//! fixed by [`Params::map`] and shared by every other traversal.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{DataDims, ModelConfig};
use crate::data::{PatchLayout, VariableKind};
use crate::numerics::Tensor;

/// `x · weight + bias` with `weight: [in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: T,
    pub bias: T,
}

/// `x + W2 · relu(W1 · x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderBlock<T> {
    pub hidden: Linear<T>,
    pub output: Linear<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    /// RevIN affine scale per variable.
    pub revin_gamma: T,
    /// RevIN affine shift per variable.
    pub revin_beta: T,
    /// One patch embedding per [`VariableKind`], `P -> D`.
    pub patch_embed: Vec<Linear<T>>,
    /// Learned positional table, `(N_hist + N_futr) x D`.
    pub position: T,
    /// `D_stat x D`, no bias so that an empty static input embeds to zero.
    pub static_embed: T,
    pub encoder: Vec<EncoderBlock<T>>,
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub output: Linear<T>,
    /// Per-patch elementwise bias path, `N_patch x D`.
    pub w_bias: T,
    /// `D -> P`
    pub head: Linear<T>,
}

impl<T> Linear<T> {
    fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> Linear<U> {
        Linear {
            weight: f(&format!("{prefix}.weight"), &self.weight),
            bias: f(&format!("{prefix}.bias"), &self.bias),
        }
    }

    fn for_each_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut T)) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        f(&format!("{prefix}.bias"), &mut self.bias);
    }
}

impl<T> Params<T> {
    /// Applies `f` to every leaf in canonical order, naming each one.
    pub fn map<'a, U>(&'a self, mut f: impl FnMut(&str, &'a T) -> U) -> Params<U> {
        let f = &mut f;
        Params {
            revin_gamma: f("revin.gamma", &self.revin_gamma),
            revin_beta: f("revin.beta", &self.revin_beta),
            patch_embed: self
                .patch_embed
                .iter()
                .zip(VariableKind::ALL)
                .map(|(l, kind)| l.map(&format!("patch_embed.{}", kind.as_str()), f))
                .collect(),
            position: f("position", &self.position),
            static_embed: f("static_embed", &self.static_embed),
            encoder: self
                .encoder
                .iter()
                .enumerate()
                .map(|(i, b)| EncoderBlock {
                    hidden: b.hidden.map(&format!("encoder.{i}.hidden"), f),
                    output: b.output.map(&format!("encoder.{i}.output"), f),
                })
                .collect(),
            query: self.query.map("attention.query", f),
            key: self.key.map("attention.key", f),
            value: self.value.map("attention.value", f),
            output: self.output.map("attention.output", f),
            w_bias: f("w_bias", &self.w_bias),
            head: self.head.map("head", f),
        }
    }

    /// Mutable traversal in the same order as [`Params::map`].
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut T)) {
        let f = &mut f;
        f("revin.gamma", &mut self.revin_gamma);
        f("revin.beta", &mut self.revin_beta);
        for (l, kind) in self.patch_embed.iter_mut().zip(VariableKind::ALL) {
            l.for_each_mut(&format!("patch_embed.{}", kind.as_str()), f);
        }
        f("position", &mut self.position);
        f("static_embed", &mut self.static_embed);
        for (i, b) in self.encoder.iter_mut().enumerate() {
            b.hidden.for_each_mut(&format!("encoder.{i}.hidden"), f);
            b.output.for_each_mut(&format!("encoder.{i}.output"), f);
        }
        self.query.for_each_mut("attention.query", f);
        self.key.for_each_mut("attention.key", f);
        self.value.for_each_mut("attention.value", f);
        self.output.for_each_mut("attention.output", f);
        f("w_bias", &mut self.w_bias);
        self.head.for_each_mut("head", f);
    }

    /// `(name, leaf)` pairs in canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.map(|name, t| out.push((name.to_string(), t)));
        out
    }
}

impl Params<Tensor> {
    /// Zero tensors with the shapes implied by the configuration.
    pub fn zeros(config: &ModelConfig, dims: DataDims, layout: &PatchLayout) -> Self {
        let (p, d, ff) = (config.patch_len, config.d_model, config.d_ff);
        let lin = |i: usize, o: usize| Linear {
            weight: Tensor::zeros(&[i, o]),
            bias: Tensor::zeros(&[o]),
        };
        Params {
            revin_gamma: Tensor::zeros(&[layout.n_variables()]),
            revin_beta: Tensor::zeros(&[layout.n_variables()]),
            patch_embed: VariableKind::ALL.iter().map(|_| lin(p, d)).collect(),
            position: Tensor::zeros(&[layout.n_slots(), d]),
            static_embed: Tensor::zeros(&[dims.d_stat, d]),
            encoder: (0..config.n_enc)
                .map(|_| EncoderBlock {
                    hidden: lin(d, ff),
                    output: lin(ff, d),
                })
                .collect(),
            query: lin(d, d),
            key: lin(d, d),
            value: lin(d, d),
            output: lin(d, d),
            w_bias: Tensor::zeros(&[layout.n_patch(), d]),
            head: lin(d, p),
        }
    }

    /// Standard initialization: linear layers uniform in `±1/sqrt(fan_in)`,
    /// positional table `N(0, 0.02)`, `w_bias` zero, RevIN affine `(1, 0)`.
    pub fn init<R: Rng + ?Sized>(
        config: &ModelConfig,
        dims: DataDims,
        layout: &PatchLayout,
        rng: &mut R,
    ) -> Self {
        let mut params = Self::zeros(config, dims, layout);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        params.for_each_mut(|name, t| {
            if name == "revin.gamma" {
                t.data_mut().fill(1.0);
            } else if name == "position" {
                t.data_mut().iter_mut().for_each(|v| *v = normal.sample(rng));
            } else if name == "revin.beta" || name == "w_bias" {
                // zero
            } else {
                let fan_in = if name == "static_embed" || name.ends_with(".weight") {
                    t.shape()[0]
                } else {
                    0
                };
                let fan_in = if fan_in == 0 { bias_fan_in(name, config) } else { fan_in };
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                t.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-bound..=bound));
            }
        });
        params
    }

    pub fn num_scalars(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Global L2 norm over every leaf.
    pub fn l2_norm(&self) -> f64 {
        self.named()
            .iter()
            .flat_map(|(_, t)| t.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.named()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect()
    }
}

/// Fan-in of the layer a bias belongs to.
fn bias_fan_in(name: &str, config: &ModelConfig) -> usize {
    if name.starts_with("patch_embed") {
        config.patch_len
    } else if name.contains(".output.") && name.starts_with("encoder") {
        config.d_ff
    } else {
        config.d_model
    }
}
