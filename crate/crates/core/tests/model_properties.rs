mod common;

use common::{config, gradient_check, max_abs_diff, random_model, random_sample, tiny_config};
use patchdecomp::data::{build_layout, WindowSample};
use patchdecomp::model::{
    revin_normalize, DataDims, ForwardOptions, Mode, ModelConfig, PatchDecomp, Prepared,
};
use patchdecomp::numerics::Tensor;
use proptest::prelude::*;

fn row(t: &Tensor, index: &[usize]) -> Vec<f64> {
    // contiguous trailing axis at `index`
    let shape = t.shape();
    let last = *shape.last().unwrap();
    let mut offset = 0;
    for (i, &ix) in index.iter().enumerate() {
        offset = offset * shape[i] + ix;
    }
    t.data()[offset * last..(offset + 1) * last].to_vec()
}

fn affine(x: &[f64], w: &Tensor, b: Option<&Tensor>) -> Vec<f64> {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    assert_eq!(rows, x.len());
    (0..cols)
        .map(|c| {
            let s: f64 = (0..rows).map(|r| x[r] * w.data()[r * cols + c]).sum();
            s + b.map_or(0.0, |b| b.data()[c])
        })
        .collect()
}

/// Attention, bias path and head recomputed with plain loops from the
/// encoder outputs of window `b`.
struct Oracle {
    alpha: Vec<Vec<Vec<f64>>>,
    z_pred: Vec<Vec<f64>>,
    per_patch: Vec<Vec<Vec<f64>>>,
    y_hat: Vec<f64>,
}

fn oracle(model: &PatchDecomp, out_z_src: &Tensor, out_z_tgt: &Tensor, prep: &Prepared, b: usize) -> Oracle {
    let p = &model.params;
    let (np, nf, d) = (model.layout.n_patch(), model.layout.n_futr, model.config.d_model);
    let (nh, dk) = (model.config.n_heads, model.config.head_dim());
    let src: Vec<Vec<f64>> = (0..np).map(|j| row(out_z_src, &[b, j])).collect();
    let tgt: Vec<Vec<f64>> = (0..nf).map(|t| row(out_z_tgt, &[b, t])).collect();
    let q: Vec<_> = tgt.iter().map(|z| affine(z, &p.query.weight, Some(&p.query.bias))).collect();
    let k: Vec<_> = src.iter().map(|z| affine(z, &p.key.weight, Some(&p.key.bias))).collect();
    let v: Vec<_> = src.iter().map(|z| affine(z, &p.value.weight, Some(&p.value.bias))).collect();
    let mut alpha = vec![vec![vec![0.0; np]; nf]; nh];
    for m in 0..nh {
        for t in 0..nf {
            let scores: Vec<f64> = (0..np)
                .map(|j| {
                    (0..dk).map(|i| q[t][m * dk + i] * k[j][m * dk + i]).sum::<f64>()
                        / (dk as f64).sqrt()
                })
                .collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            alpha[m][t] = e.iter().map(|x| x / z).collect();
        }
    }
    let w_bias = |j: usize| row(&p.w_bias, &[j]);
    let mut per_patch = vec![vec![vec![0.0; d]; np]; nf];
    let mut z_pred = vec![vec![0.0; d]; nf];
    for t in 0..nf {
        let mut ctx = vec![0.0; d];
        for j in 0..np {
            let mut term = vec![0.0; d];
            for m in 0..nh {
                for i in 0..dk {
                    term[m * dk + i] = alpha[m][t][j] * v[j][m * dk + i];
                    ctx[m * dk + i] += term[m * dk + i];
                }
            }
            let projected = affine(&term, &p.output.weight, None);
            let wb = w_bias(j);
            per_patch[t][j] = (0..d).map(|i| projected[i] + src[j][i] * wb[i]).collect();
        }
        let mha = affine(&ctx, &p.output.weight, Some(&p.output.bias));
        for i in 0..d {
            z_pred[t][i] = mha[i] + (0..np).map(|j| src[j][i] * w_bias(j)[i]).sum::<f64>();
        }
    }
    let head: Vec<f64> = z_pred
        .iter()
        .flat_map(|z| affine(z, &p.head.weight, Some(&p.head.bias)))
        .collect();
    let (g0, b0) = (p.revin_gamma.data()[0], p.revin_beta.data()[0]);
    let y_hat = head[..model.layout.horizon]
        .iter()
        .map(|y| (y - b0) / g0 * prep.std[b] + prep.mean[b])
        .collect();
    Oracle { alpha, z_pred, per_patch, y_hat }
}

fn run(model: &PatchDecomp, samples: &[&WindowSample], decompose: bool) -> (Prepared, patchdecomp::model::BatchOutput) {
    let prep = model.prepare(samples).unwrap();
    let opts = ForwardOptions { decompose, ..ForwardOptions::eval() };
    let out = model.forward_prepared(&prep, opts).unwrap();
    (prep, out)
}

fn dims(h: usize, f: usize, s: usize) -> DataDims {
    DataDims { d_hist: h, d_futr: f, d_stat: s }
}

#[test]
fn graph_matches_loop_oracle() {
    let cfg = ModelConfig { n_enc: 2, ..config(20, 8, 4, 4, 2) };
    for seed in 0..5 {
        let dm = dims(1, 1, 2);
        let model = random_model(cfg.clone(), dm, seed);
        let samples: Vec<_> = (0..3).map(|i| random_sample(&cfg, dm, seed * 10 + i)).collect();
        let refs: Vec<_> = samples.iter().collect();
        let (prep, out) = run(&model, &refs, true);
        let pp = out.per_patch.as_ref().unwrap();
        let (np, nf) = (model.layout.n_patch(), model.layout.n_futr);
        for b in 0..3 {
            let o = oracle(&model, &out.z_src, &out.z_tgt, &prep, b);
            for m in 0..2 {
                for t in 0..nf {
                    let got = row(&out.alpha, &[b * 2 + m, t]);
                    assert!(max_abs_diff(&got, &o.alpha[m][t]) < 1e-12);
                }
            }
            for t in 0..nf {
                assert!(max_abs_diff(&row(&out.z_pred, &[b, t]), &o.z_pred[t]) < 1e-10);
                for j in 0..np {
                    assert!(max_abs_diff(&row(pp, &[b, t, j]), &o.per_patch[t][j]) < 1e-10);
                }
            }
            assert!(max_abs_diff(&out.predictions()[b], &o.y_hat) < 1e-9);
        }
    }
}

#[test]
fn zero_weights_give_zero_encodings() {
    let cfg = tiny_config();
    let dm = dims(1, 1, 0);
    let mut model = PatchDecomp::new(cfg.clone(), dm, 0).unwrap();
    model.params.for_each_mut(|name, t| {
        let v = if name == "revin.gamma" { 1.0 } else { 0.0 };
        t.data_mut().fill(v);
    });
    let s = random_sample(&cfg, dm, 1);
    let (_, out) = run(&model, &[&s], false);
    assert!(out.z_src.data().iter().all(|&v| v == 0.0));
    assert!(out.z_tgt.data().iter().all(|&v| v == 0.0));
    assert_eq!(out.z_src.shape(), &[1, model.layout.n_patch(), 8]);
    assert_eq!(out.z_tgt.shape(), &[1, 1, 8]);
}

#[test]
fn epf_shaped_source_encoding() {
    let cfg = config(168, 24, 24, 16, 4);
    let model = PatchDecomp::new(cfg.clone(), dims(0, 5, 0), 3).unwrap();
    let s = random_sample(&cfg, dims(0, 5, 0), 2);
    let (_, out) = run(&model, &[&s], false);
    assert_eq!(out.z_src.shape(), &[1, 47, 16]);
}

#[test]
fn swapping_patches_and_positions_permutes_encodings() {
    let cfg = config(12, 4, 4, 8, 2);
    let dm = dims(0, 0, 1);
    let model = random_model(cfg.clone(), dm, 11);
    let s = random_sample(&cfg, dm, 12);
    let (prep, out) = run(&model, &[&s], false);

    let (s1, s2) = (0, 2);
    let mut swapped = prep.clone();
    let p0 = prep.patches.data()[s1 * 4..s1 * 4 + 4].to_vec();
    let p2 = prep.patches.data()[s2 * 4..s2 * 4 + 4].to_vec();
    swapped.set_patch(0, s1, &p2);
    swapped.set_patch(0, s2, &p0);
    let mut permuted = model.clone();
    let pos = permuted.params.position.data_mut();
    for i in 0..8 {
        pos.swap(s1 * 8 + i, s2 * 8 + i);
    }
    let out2 = permuted.forward_prepared(&swapped, ForwardOptions::eval()).unwrap();
    assert_eq!(row(&out2.z_src, &[0, s1]), row(&out.z_src, &[0, s2]));
    assert_eq!(row(&out2.z_src, &[0, s2]), row(&out.z_src, &[0, s1]));
    assert_eq!(row(&out2.z_src, &[0, 1]), row(&out.z_src, &[0, 1]));
}

#[test]
fn target_queries_ignore_window_values() {
    let cfg = tiny_config();
    let dm = dims(1, 1, 1);
    let model = random_model(cfg.clone(), dm, 4);
    let a = random_sample(&cfg, dm, 5);
    let mut b = random_sample(&cfg, dm, 6);
    b.x_stat = a.x_stat.clone();
    let (_, oa) = run(&model, &[&a], false);
    let (_, ob) = run(&model, &[&b], false);
    assert_eq!(oa.z_tgt, ob.z_tgt);
    assert_ne!(oa.z_src, ob.z_src);
}

#[test]
fn equal_scores_give_uniform_attention() {
    let cfg = config(16, 4, 4, 4, 1);
    let dm = dims(0, 1, 0);
    let mut model = random_model(cfg.clone(), dm, 8);
    model.params.query.weight.data_mut().fill(0.0);
    model.params.query.bias.data_mut().fill(0.0);
    model.params.w_bias.data_mut().fill(0.0);
    let eye = model.params.output.weight.data_mut();
    eye.fill(0.0);
    for i in 0..4 {
        eye[i * 4 + i] = 1.0;
    }
    let s = random_sample(&cfg, dm, 9);
    let (_, out) = run(&model, &[&s], true);
    let np = model.layout.n_patch();
    assert!(out.alpha.data().iter().all(|&a| (a - 1.0 / np as f64).abs() < 1e-15));
    let pp = out.per_patch.unwrap();
    let p = &model.params;
    for j in 0..np {
        let v = affine(&row(&out.z_src, &[0, j]), &p.value.weight, Some(&p.value.bias));
        let expected: Vec<f64> = v.iter().map(|x| x / np as f64).collect();
        assert!(max_abs_diff(&row(&pp, &[0, 0, j]), &expected) < 1e-14);
    }
}

#[test]
fn zero_bias_weights_leave_pure_attention() {
    let cfg = config(20, 8, 4, 4, 2);
    let dm = dims(0, 0, 0);
    let mut model = random_model(cfg.clone(), dm, 21);
    model.params.w_bias.data_mut().fill(0.0);
    let s = random_sample(&cfg, dm, 22);
    let (prep, out) = run(&model, &[&s], true);
    let o = oracle(&model, &out.z_src, &out.z_tgt, &prep, 0);
    let pp = out.per_patch.unwrap();
    let p = &model.params;
    let nh = 2;
    for t in 0..2 {
        for j in 0..5 {
            let v = affine(&row(&out.z_src, &[0, j]), &p.value.weight, Some(&p.value.bias));
            let term: Vec<f64> = (0..4).map(|i| o.alpha[i / 2][t][j] * v[i]).collect();
            let expected = affine(&term, &p.output.weight, None);
            assert!(max_abs_diff(&row(&pp, &[0, t, j]), &expected) < 1e-12);
        }
    }
    assert_eq!(out.alpha.shape(), &[nh, 2, 5]);
}

#[test]
fn decomposed_sum_matches_dense_attention() {
    // N_futr = 2, N_patch = 5, D = 4
    let cfg = config(20, 8, 4, 4, 2);
    let dm = dims(0, 0, 0);
    for seed in 0..20 {
        let model = random_model(cfg.clone(), dm, seed);
        let s = random_sample(&cfg, dm, seed + 100);
        let (_, out) = run(&model, &[&s], true);
        let pp = out.per_patch.unwrap();
        let b_o = model.params.output.bias.data();
        for t in 0..2 {
            let mut sum = b_o.to_vec();
            for j in 0..5 {
                for (acc, v) in sum.iter_mut().zip(row(&pp, &[0, t, j])) {
                    *acc += v;
                }
            }
            assert!(max_abs_diff(&sum, &row(&out.z_pred, &[0, t])) < 1e-10);
        }
    }
}

#[test]
fn horizon_trim_discards_tail_of_last_patch() {
    for (h, p) in [(24, 24), (20, 24), (5, 3)] {
        let cfg = config(48, h, p, 8, 2);
        let dm = dims(0, 1, 0);
        let model = random_model(cfg.clone(), dm, h as u64);
        let s = random_sample(&cfg, dm, 3);
        let (prep, out) = run(&model, &[&s], true);
        assert_eq!(out.y_hat.shape(), &[1, h]);
        let d = &out.decompositions.as_ref().unwrap()[0];
        assert_eq!(d.contributions.len(), h);
        let o = oracle(&model, &out.z_src, &out.z_tgt, &prep, 0);
        assert!(max_abs_diff(&out.predictions()[0], &o.y_hat) < 1e-9);
    }
}

#[test]
fn zeroed_patch_terms_leave_only_baseline() {
    let cfg = tiny_config();
    let dm = dims(1, 1, 1);
    let mut model = random_model(cfg.clone(), dm, 30);
    // no value, no bias path: every per-patch term vanishes
    model.params.value.weight.data_mut().fill(0.0);
    model.params.value.bias.data_mut().fill(0.0);
    model.params.w_bias.data_mut().fill(0.0);
    let s = random_sample(&cfg, dm, 31);
    let d = model.forward(&s, Mode::Eval, true).unwrap().decomposition.unwrap();
    assert!(d.contributions.iter().flatten().all(|&c| c == 0.0));
    assert!(max_abs_diff(&d.prediction, &d.baseline) < 1e-12);
}

#[test]
fn eval_forward_is_deterministic() {
    let cfg = ModelConfig { dropout: 0.3, ..tiny_config() };
    let dm = dims(1, 1, 1);
    let model = random_model(cfg.clone(), dm, 40);
    let s = random_sample(&cfg, dm, 41);
    let a = model.forward(&s, Mode::Eval, true).unwrap();
    let b = model.forward(&s, Mode::Eval, true).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.y_hat), bits(&b.y_hat));
    assert_eq!(a, b);
    // dropout only acts in training mode
    let t1 = model.forward(&s, Mode::Train { seed: 1 }, false).unwrap();
    let t1b = model.forward(&s, Mode::Train { seed: 1 }, false).unwrap();
    let t2 = model.forward(&s, Mode::Train { seed: 2 }, false).unwrap();
    assert_eq!(t1, t1b);
    assert_ne!(t1.y_hat, t2.y_hat);
    assert_ne!(t1.y_hat, a.y_hat);
}

#[test]
fn target_affine_equivariance() {
    let cfg = config(24, 8, 4, 8, 2);
    let dm = dims(0, 2, 1);
    let mut model = random_model(cfg.clone(), dm, 50);
    model.params.revin_gamma.data_mut().fill(1.0);
    model.params.revin_beta.data_mut().fill(0.0);
    let s = random_sample(&cfg, dm, 51);
    let base = model.forward(&s, Mode::Eval, false).unwrap().y_hat;
    for (a, b) in [(3.0, -7.0), (0.25, 100.0), (12.5, 0.0)] {
        let mut t = s.clone();
        t.y_hist.iter_mut().for_each(|v| *v = a * *v + b);
        let y = model.forward(&t, Mode::Eval, false).unwrap().y_hat;
        for (got, y0) in y.iter().zip(&base) {
            let want = a * y0 + b;
            assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{got} vs {want}");
        }
    }
}

#[test]
fn teacher_forced_ablation_matches_contribution() {
    let cfg = config(16, 8, 4, 8, 2);
    let dm = dims(1, 1, 1);
    let model = random_model(cfg.clone(), dm, 60);
    let s = random_sample(&cfg, dm, 61);
    let prep = model.prepare(&[&s]).unwrap();
    let opts = || ForwardOptions { decompose: true, ..ForwardOptions::eval() };
    let out = model.forward_prepared(&prep, opts()).unwrap();
    let d0 = &out.decompositions.as_ref().unwrap()[0];
    let np = model.layout.n_patch();
    for j in 0..np {
        let mut ablated = prep.clone();
        ablated.set_patch(0, j, &[0.0; 4]);
        let forced = ForwardOptions { alpha: Some(out.alpha.clone()), ..opts() };
        let out2 = model.forward_prepared(&ablated, forced).unwrap();
        let d1 = &out2.decompositions.as_ref().unwrap()[0];
        for h in 0..8 {
            let delta = d1.prediction[h] - d0.prediction[h];
            let dc = d1.contributions[h][j] - d0.contributions[h][j];
            assert!((delta - dc).abs() < 1e-6 * (1.0 + delta.abs()));
            for i in (0..np).filter(|&i| i != j) {
                assert!((d1.contributions[h][i] - d0.contributions[h][i]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn prepared_patches_match_sample_normalization() {
    let cfg = config(10, 6, 4, 8, 2);
    let dm = dims(1, 2, 0);
    let model = random_model(cfg.clone(), dm, 70);
    let s = random_sample(&cfg, dm, 71);
    let prep = model.prepare(&[&s]).unwrap();
    let n = model.layout.n_variables();
    let (norm, state) = revin_normalize(&s, &vec![1.0; n], &vec![0.0; n]);
    let patches = patchdecomp::data::patchify(&norm, &model.layout).unwrap();
    assert!(max_abs_diff(prep.patches.data(), patches.data()) < 1e-15);
    assert_eq!(prep.mean[0], state.stats[0].mean);
    assert_eq!(prep.std[0], state.stats[0].std);
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let cfg = tiny_config();
    let dm = dims(1, 1, 1);
    let model = random_model(cfg.clone(), dm, 80);
    let samples: Vec<_> = (0..3).map(|i| random_sample(&cfg, dm, 81 + i)).collect();
    let refs: Vec<_> = samples.iter().collect();
    let prep = model.prepare(&refs).unwrap();
    let (loss, grads) = model.loss_and_grads(&prep, None).unwrap();

    let check = gradient_check(&model, &refs, &grads, 1e-5, 1e-3);
    assert!((loss - check.loss).abs() < 1e-12);
    assert!(check.checked > 500);
    assert!(check.worst <= 1e-4, "worst gradient mismatch {}", check.detail);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_is_exact(l in prop::sample::select(vec![8usize, 13, 24]),
                              h in prop::sample::select(vec![4usize, 7]),
                              p in prop::sample::select(vec![3usize, 4, 6]),
                              heads in prop::sample::select(vec![1usize, 2, 4]),
                              d_hist in 0usize..2, d_futr in 0usize..3, d_stat in 0usize..2,
                              seed in any::<u64>()) {
        let cfg = config(l, h, p, 8, heads);
        let dm = dims(d_hist, d_futr, d_stat);
        let model = random_model(cfg.clone(), dm, seed);
        let s = random_sample(&cfg, dm, seed.wrapping_add(1));
        let d = model.forward(&s, Mode::Eval, true).unwrap().decomposition.unwrap();
        prop_assert!(d.max_residual() <= 1e-9);
        prop_assert_eq!(d.n_patch(), build_layout(l, h, p, d_hist, d_futr).unwrap().n_patch());
    }

    #[test]
    fn attention_rows_sum_to_one(seed in any::<u64>(), heads in prop::sample::select(vec![1usize, 2, 4, 8])) {
        let cfg = config(24, 8, 4, 8, heads);
        let dm = dims(1, 1, 0);
        let model = random_model(cfg.clone(), dm, seed);
        let samples: Vec<_> = (0..2).map(|i| random_sample(&cfg, dm, seed ^ i)).collect();
        let refs: Vec<_> = samples.iter().collect();
        let (_, out) = run(&model, &refs, false);
        let np = model.layout.n_patch();
        for r in out.alpha.data().chunks(np) {
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(r.iter().all(|&a| a > 0.0));
        }
    }
}
