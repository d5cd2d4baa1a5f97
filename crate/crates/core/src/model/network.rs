//! Graph construction for the forward pass.
//!
//! Batched shapes use `B` windows, `Np` input patches, `Nf` horizon
//! patches, model width `D` split into `nh` heads of width `dk`.

use rand::RngCore;

use super::params::{Linear, Params};
use super::revin::window_stats;
use super::{ModelConfig, ModelError};
use crate::data::{patchify, PatchLayout, VariableKind, WindowSample};
use crate::numerics::{Graph, Tensor, TensorError, Var};

/// A batch of windows, standardized and cut into patches, ready to enter
/// the graph. The learnable RevIN affine is applied inside the graph.
#[derive(Clone, Debug)]
pub struct Prepared {
    /// `[B, Np, P]`, standardized with lookback statistics, pads zero.
    pub patches: Tensor,
    /// `[Np, P]`, one on observed positions, zero on pads.
    pub mask: Tensor,
    /// Target lookback mean per window.
    pub mean: Vec<f64>,
    /// Target lookback std (clamped) per window.
    pub std: Vec<f64>,
    /// `[B, D_stat]`
    pub x_stat: Tensor,
    /// `[B, H]` when every window carries its full horizon.
    pub targets: Option<Tensor>,
}

impl Prepared {
    pub fn batch_size(&self) -> usize {
        self.mean.len()
    }

    /// Sub-batch of the given windows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Prepared {
        let take = |t: &Tensor| {
            let row: usize = t.shape()[1..].iter().product();
            let mut data = Vec::with_capacity(indices.len() * row);
            for &i in indices {
                data.extend_from_slice(&t.data()[i * row..(i + 1) * row]);
            }
            let mut shape = t.shape().to_vec();
            shape[0] = indices.len();
            Tensor::new(&shape, data).expect("sized")
        };
        Prepared {
            patches: take(&self.patches),
            mask: self.mask.clone(),
            mean: indices.iter().map(|&i| self.mean[i]).collect(),
            std: indices.iter().map(|&i| self.std[i]).collect(),
            x_stat: take(&self.x_stat),
            targets: self.targets.as_ref().map(take),
        }
    }

    /// Overwrites one standardized patch of window `b`.
    pub fn set_patch(&mut self, b: usize, flat_index: usize, values: &[f64]) {
        let (np, p) = (self.patches.shape()[1], self.patches.shape()[2]);
        let start = (b * np + flat_index) * p;
        self.patches.data_mut()[start..start + p].copy_from_slice(values);
    }
}

pub fn observed_mask(layout: &PatchLayout) -> Tensor {
    let p = layout.patch_len;
    let mut data = vec![0.0; layout.n_patch() * p];
    for e in layout.entries() {
        let row = e.flat_index * p + e.pad_lead;
        data[row..row + e.series_range.len()].fill(1.0);
    }
    Tensor::new(&[layout.n_patch(), p], data).expect("sized from layout")
}

pub fn prepare(
    layout: &PatchLayout,
    d_stat: usize,
    samples: &[&WindowSample],
) -> Result<Prepared, ModelError> {
    let b = samples.len();
    let (np, p, h) = (layout.n_patch(), layout.patch_len, layout.horizon);
    let mut patches = Vec::with_capacity(b * np * p);
    let mut mean = Vec::with_capacity(b);
    let mut std = Vec::with_capacity(b);
    let mut x_stat = Vec::with_capacity(b * d_stat);
    let mut targets = Vec::with_capacity(b * h);
    for s in samples {
        layout.check_sample(s)?;
        if s.x_stat.len() != d_stat {
            return Err(ModelError::Config(format!(
                "window has {} static values, model expects {d_stat}",
                s.x_stat.len()
            )));
        }
        let stats = window_stats(s);
        let mut standardized = (*s).clone();
        for (v, st) in stats.iter().enumerate() {
            for x in standardized.variable_series_mut(v).iter_mut() {
                *x = (*x - st.mean) / st.std;
            }
        }
        patches.extend_from_slice(patchify(&standardized, layout)?.data());
        mean.push(stats[0].mean);
        std.push(stats[0].std);
        x_stat.extend_from_slice(&s.x_stat);
        targets.extend_from_slice(&s.y_future);
    }
    let targets = (targets.len() == b * h).then(|| Tensor::new(&[b, h], targets).expect("sized"));
    Ok(Prepared {
        patches: Tensor::new(&[b, np, p], patches).expect("sized"),
        mask: observed_mask(layout),
        mean,
        std,
        x_stat: Tensor::new(&[b, d_stat], x_stat).expect("sized"),
        targets,
    })
}

/// Knobs of a single graph build.
pub struct ForwardOptions<'r> {
    /// Dropout source; `None` means evaluation mode.
    pub rng: Option<&'r mut dyn RngCore>,
    /// Replaces the attention weights, `[B * nh, Nf, Np]`.
    pub alpha: Option<Tensor>,
    pub decompose: bool,
}

impl ForwardOptions<'_> {
    pub fn eval() -> Self {
        Self {
            rng: None,
            alpha: None,
            decompose: false,
        }
    }
}

/// Handles to the interesting nodes of a built graph.
pub struct Nodes {
    /// `[B, H]` in original units.
    pub y_hat: Var,
    /// `[B * nh, Nf, Np]`
    pub alpha: Var,
    /// `[B, Np, D]`
    pub z_src: Var,
    /// `[B, Nf, D]`
    pub z_tgt: Var,
    /// `[B, Nf, D]`, dense attention plus bias path.
    pub z_pred: Var,
    pub decomposed: Option<DecomposedNodes>,
}

pub struct DecomposedNodes {
    /// `[B, Nf, Np, D]`
    pub per_patch: Var,
    /// `[B, Np, H]` in original units.
    pub contributions: Var,
    /// `[H]`, head and output-projection biases through the head,
    /// still in normalized units.
    pub bias_through_head: Var,
}

struct Ctx<'a, 'r> {
    g: &'a mut Graph,
    config: &'a ModelConfig,
    rng: Option<&'r mut dyn RngCore>,
}

impl Ctx<'_, '_> {
    /// Applies `x · W + b` over the last axis of any-rank `x`.
    fn linear(&mut self, x: Var, l: &Linear<Var>, bias: bool) -> Result<Var, TensorError> {
        let shape = self.g.shape(x).to_vec();
        let (last, lead) = shape.split_last().expect("rank >= 1");
        let rows: usize = lead.iter().product();
        let flat = self.g.reshape(x, &[rows, *last])?;
        let mut y = self.g.matmul(flat, l.weight)?;
        if bias {
            y = self.g.add(y, l.bias)?;
        }
        let out = self.g.shape(y)[1];
        let mut out_shape = lead.to_vec();
        out_shape.push(out);
        self.g.reshape(y, &out_shape)
    }

    fn dropout(&mut self, x: Var) -> Result<Var, TensorError> {
        match self.rng.as_deref_mut() {
            Some(rng) => self.g.dropout(x, self.config.dropout, rng),
            None => Ok(x),
        }
    }

    /// Residual MLP stack shared by sources and targets.
    fn encoder_blocks(&mut self, params: &Params<Var>, mut x: Var) -> Result<Var, TensorError> {
        for block in &params.encoder {
            let h = self.linear(x, &block.hidden, true)?;
            let h = self.g.relu(h)?;
            let h = self.linear(h, &block.output, true)?;
            let h = self.dropout(h)?;
            x = self.g.add(x, h)?;
        }
        Ok(x)
    }

    /// `[B, N, D] -> [B * nh, N, dk]`
    fn split_heads(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.g.shape(x).to_vec();
        let (nh, dk) = (self.config.n_heads, self.config.head_dim());
        let x = self.g.reshape(x, &[s[0], s[1], nh, dk])?;
        let x = self.g.permute(x, &[0, 2, 1, 3])?;
        self.g.reshape(x, &[s[0] * nh, s[1], dk])
    }
}

/// Builds the forward graph for a prepared batch.
pub fn build(
    g: &mut Graph,
    params: &Params<Var>,
    config: &ModelConfig,
    layout: &PatchLayout,
    batch: &Prepared,
    opts: ForwardOptions<'_>,
) -> Result<Nodes, ModelError> {
    let b = batch.batch_size();
    let (np, nf, d, p, h) = (
        layout.n_patch(),
        layout.n_futr,
        config.d_model,
        layout.patch_len,
        layout.horizon,
    );
    let nh = config.n_heads;
    if g.shape(params.w_bias) != [np, d] {
        return Err(ModelError::Config(format!(
            "w_bias {:?} does not match {np} patches of width {d}",
            g.shape(params.w_bias)
        )));
    }
    let mut cx = Ctx {
        g,
        config,
        rng: opts.rng,
    };

    // RevIN affine on standardized patches; pads stay zero.
    let var_of_patch: Vec<usize> = layout.entries().iter().map(|e| e.variable).collect();
    let gamma_rows = cx.g.gather(params.revin_gamma, &var_of_patch)?;
    let gamma_rows = cx.g.reshape(gamma_rows, &[np, 1])?;
    let beta_rows = cx.g.gather(params.revin_beta, &var_of_patch)?;
    let beta_rows = cx.g.reshape(beta_rows, &[np, 1])?;
    let mask = cx.g.constant(batch.mask.clone());
    let shift = cx.g.mul(mask, beta_rows)?;
    let patches = cx.g.constant(batch.patches.clone());
    let x = cx.g.mul(patches, gamma_rows)?;
    let x = cx.g.add(x, shift)?;

    // Patch embedding per kind, then position and static terms.
    let mut embedded = Vec::new();
    for kind in VariableKind::ALL {
        let range = layout.kind_range(kind);
        if range.is_empty() {
            continue;
        }
        let part = cx.g.slice(x, 1, range.start, range.end)?;
        embedded.push(cx.linear(part, &params.patch_embed[kind.index()], true)?);
    }
    let z = cx.g.concat(&embedded, 1)?;
    let pos = cx.g.gather(params.position, &layout.slots())?;
    let z = cx.g.add(z, pos)?;
    let stat = if batch.x_stat.shape()[1] > 0 {
        let xs = cx.g.constant(batch.x_stat.clone());
        let s = cx.g.matmul(xs, params.static_embed)?;
        cx.g.unsqueeze(s, 1)?
    } else {
        cx.g.constant(Tensor::zeros(&[b, 1, d]))
    };
    let z = cx.g.add(z, stat)?;
    let z_src = cx.encoder_blocks(params, z)?;

    // Target queries: position of each horizon slot plus static term only.
    let tpos = cx.g.slice(params.position, 0, layout.n_hist, layout.n_slots())?;
    let zt = cx.g.add(stat, tpos)?;
    let z_tgt = cx.encoder_blocks(params, zt)?;

    // Multi-head attention.
    let q = cx.linear(z_tgt, &params.query, true)?;
    let k = cx.linear(z_src, &params.key, true)?;
    let v = cx.linear(z_src, &params.value, true)?;
    let (q, k, v) = (cx.split_heads(q)?, cx.split_heads(k)?, cx.split_heads(v)?);
    let alpha = match opts.alpha {
        Some(a) => {
            if a.shape() != [b * nh, nf, np] {
                return Err(ModelError::Config(format!(
                    "attention override {:?} != [{}, {nf}, {np}]",
                    a.shape(),
                    b * nh
                )));
            }
            cx.g.constant(a)
        }
        None => {
            let kt = cx.g.transpose(k)?;
            let scores = cx.g.batch_matmul(q, kt)?;
            let scores = cx.g.scale(scores, 1.0 / (config.head_dim() as f64).sqrt())?;
            cx.g.softmax(scores, 2)?
        }
    };
    let ctx = cx.g.batch_matmul(alpha, v)?;
    let ctx = cx.g.reshape(ctx, &[b, nh, nf, config.head_dim()])?;
    let ctx = cx.g.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = cx.g.reshape(ctx, &[b, nf, d])?;
    let z_mha = cx.linear(ctx, &params.output, true)?;

    // Bias path: elementwise product with w_bias, summed over patches.
    let bias_path = cx.g.mul(z_src, params.w_bias)?;
    let bias_sum = cx.g.sum(bias_path, 1)?;
    let bias_sum = cx.g.unsqueeze(bias_sum, 1)?;
    let z_pred = cx.g.add(z_mha, bias_sum)?;

    // Head, trim, inverse RevIN of the target.
    let out = cx.linear(z_pred, &params.head, true)?;
    let out = cx.g.reshape(out, &[b, nf * p])?;
    let out = cx.g.slice(out, 1, 0, h)?;
    let gamma0 = cx.g.slice(params.revin_gamma, 0, 0, 1)?;
    let beta0 = cx.g.slice(params.revin_beta, 0, 0, 1)?;
    let std = cx.g.constant(Tensor::new(&[b, 1], batch.std.clone()).expect("sized"));
    let mean = cx.g.constant(Tensor::new(&[b, 1], batch.mean.clone()).expect("sized"));
    let y = cx.g.sub(out, beta0)?;
    let y = cx.g.div(y, gamma0)?;
    let y = cx.g.mul(y, std)?;
    let y_hat = cx.g.add(y, mean)?;

    let decomposed = if opts.decompose {
        // alpha[.., t, j, 1] * v[.., 1, j, :] keeps the patch axis separate.
        let dk = config.head_dim();
        let a4 = cx.g.reshape(alpha, &[b * nh, nf, np, 1])?;
        let v4 = cx.g.reshape(v, &[b * nh, 1, np, dk])?;
        let terms = cx.g.mul(a4, v4)?;
        let terms = cx.g.reshape(terms, &[b, nh, nf, np, dk])?;
        let terms = cx.g.permute(terms, &[0, 2, 3, 1, 4])?;
        let terms = cx.g.reshape(terms, &[b, nf, np, d])?;
        let projected = cx.linear(terms, &params.output, false)?;
        let bias4 = cx.g.unsqueeze(bias_path, 1)?;
        let per_patch = cx.g.add(projected, bias4)?;

        let through_head = cx.linear(per_patch, &params.head, false)?;
        let through_head = cx.g.permute(through_head, &[0, 2, 1, 3])?;
        let through_head = cx.g.reshape(through_head, &[b, np, nf * p])?;
        let through_head = cx.g.slice(through_head, 2, 0, h)?;
        let std3 = cx.g.reshape(std, &[b, 1, 1])?;
        let c = cx.g.div(through_head, gamma0)?;
        let contributions = cx.g.mul(c, std3)?;

        let b_o = cx.g.reshape(params.output.bias, &[1, d])?;
        let bias_head = cx.linear(b_o, &params.head, true)?;
        let tiled = cx.g.concat(&vec![bias_head; nf], 1)?;
        let tiled = cx.g.reshape(tiled, &[nf * p])?;
        let bias_through_head = cx.g.slice(tiled, 0, 0, h)?;
        Some(DecomposedNodes {
            per_patch,
            contributions,
            bias_through_head,
        })
    } else {
        None
    };

    Ok(Nodes {
        y_hat,
        alpha,
        z_src,
        z_tgt,
        z_pred,
        decomposed,
    })
}

/// Mean absolute error over every window and horizon step, as a graph node.
pub fn mae_node(g: &mut Graph, y_hat: Var, targets: &Tensor) -> Result<Var, TensorError> {
    let t = g.constant(targets.clone());
    let diff = g.sub(y_hat, t)?;
    let abs = g.abs(diff)?;
    g.mean_all(abs)
}
