//! Shape contracts, gradient checks and equivalences of both networks.

use cuisine_core::classifier::{Swin, SwinConfig, WindowLayout};
use cuisine_core::detector::{UNet, UNetConfig};
use cuisine_nn::gradcheck::DEFAULT_STEP;
use cuisine_nn::{grad_check_many, Graph, NormMode, RunningStats, SplitMix64, Tensor, Var};

fn nn<T>(r: cuisine_core::Result<T>) -> cuisine_nn::Result<T> {
    r.map_err(|e| match e {
        cuisine_core::CoreError::Nn(e) => e,
        other => panic!("{other}"),
    })
}

fn normal(rng: &mut SplitMix64, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.normal())
}

fn small_unet() -> UNetConfig {
    UNetConfig {
        in_channels: 12,
        base_channels: 4,
        depth: 2,
        seq_len: 16,
        mask_ratio: 0.25,
        mask_segment_len: 2,
    }
}

#[test]
fn unet_output_matches_input_shape() {
    for (base, depth, len) in [(32, 3, 128), (4, 2, 16), (8, 1, 8), (2, 4, 32)] {
        let cfg = UNetConfig {
            base_channels: base,
            depth,
            seq_len: len,
            ..UNetConfig::default()
        };
        let net = UNet::<f32>::new(cfg, 5).unwrap();
        let y = net.predict(Tensor::full(&[2, 12, len], 0.5)).unwrap();
        assert_eq!(y.shape(), &[2, 12, len]);
    }
}

/// Central-difference check that tolerates piecewise-linear kinks.
///
/// Coordinates where the step-`h` and step-`h/2` differences disagree have a
/// ReLU or max-pool switch inside `[x - h, x + h]`; those are re-checked with
/// a step small enough to stay on one side. Returns (max relative error,
/// number of coordinates re-checked, total).
fn kink_aware_check<F>(f: F, inputs: &[Tensor<f64>], h: f64) -> (f64, usize, usize)
where
    F: Fn(&mut Graph<f64>, &[Var]) -> cuisine_nn::Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars).unwrap();
    let grads = g.backward(out);
    let eval = |w: &[Tensor<f64>]| {
        let mut g = Graph::inference();
        let v: Vec<Var> = w.iter().map(|t| g.constant(t.clone())).collect();
        let o = f(&mut g, &v).unwrap();
        g.value(o).item()
    };
    let mut work = inputs.to_vec();
    let central = |work: &mut Vec<Tensor<f64>>, k: usize, i: usize, step: f64| {
        let x0 = work[k].data()[i];
        work[k].data_mut()[i] = x0 + step;
        let fp = eval(work);
        work[k].data_mut()[i] = x0 - step;
        let fm = eval(work);
        work[k].data_mut()[i] = x0;
        (fp - fm) / (2.0 * step)
    };
    let (mut worst, mut rechecked, mut total) = (0.0f64, 0, 0);
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        let numeric: Vec<(f64, f64)> = (0..inputs[k].len())
            .map(|i| (central(&mut work, k, i, h), central(&mut work, k, i, h / 2.0)))
            .collect();
        let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.0.abs()));
        let floor = (1e-3 * scale).max(f64::MIN_POSITIVE);
        for (i, (&a, &(n, n_half))) in analytic.data().iter().zip(&numeric).enumerate() {
            total += 1;
            let n = if (n - n_half).abs() > 1e-5 * n.abs().max(floor) {
                rechecked += 1;
                central(&mut work, k, i, 1e-6)
            } else {
                n
            };
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(floor));
        }
    }
    (worst, rechecked, total)
}

#[test]
fn unet_gradient_check() {
    for seed in [21, 22, 23] {
        let net = UNet::<f64>::new(small_unet(), seed).unwrap();
        let n = net.params.params().len();
        let mut rng = SplitMix64::new(seed + 50);
        let mut inputs: Vec<Tensor<f64>> = net.params.params().iter().map(|p| p.value.clone()).collect();
        inputs.push(normal(&mut rng, &[2, 12, 16]));
        let target = normal(&mut rng, &[2, 12, 16]);
        let mask: Vec<bool> = (0..2 * 12 * 16).map(|i| (i % 16) % 3 == 0).collect();
        let stats: Vec<RunningStats<f64>> = net.bn_stats.iter().map(|(_, s)| s.clone()).collect();
        let (worst, rechecked, total) = kink_aware_check(
            |g: &mut Graph<f64>, v: &[Var]| {
                let mut st = stats.clone();
                let y = nn(net.forward_with(g, &v[..n], &mut st, v[n], NormMode::Train, None))?;
                let t = g.constant(target.clone());
                g.mse_loss(y, t, Some(&mask))
            },
            &inputs,
            DEFAULT_STEP,
        );
        assert!(worst < 1e-4, "seed {seed}: {worst:e}");
        // kinks are the exception, not the rule
        assert!(rechecked * 4 < total, "seed {seed}: {rechecked} of {total} straddle a kink");
    }
}

fn small_swin() -> SwinConfig {
    SwinConfig {
        in_channels: 2,
        seq_len: 32,
        patch_size: 4,
        embed_dim: 8,
        stage_depths: vec![2, 2],
        stage_heads: vec![2, 2],
        window_size: 4,
        mlp_ratio: 2,
        num_classes: 3,
    }
}

/// Perturb the constant-initialized tensors (biases, norms, position bias)
/// so every path carries a non-trivial gradient.
fn randomized(mut net: Swin<f64>, seed: u64) -> Swin<f64> {
    let mut rng = SplitMix64::new(seed);
    for p in net.params.params_mut() {
        if p.value.rank() == 1 || p.name.contains("rel_pos") {
            for v in p.value.data_mut() {
                *v += 0.1 * rng.normal();
            }
        }
    }
    net
}

#[test]
fn swin_block_gradient_check() {
    for seed in 1..=3 {
        let net = randomized(Swin::<f64>::new(small_swin(), seed).unwrap(), seed);
        let n = net.params.params().len();
        let mut rng = SplitMix64::new(100 + seed);
        let mut inputs: Vec<Tensor<f64>> = net.params.params().iter().map(|p| p.value.clone()).collect();
        inputs.push(normal(&mut rng, &[2, 8, 8]));
        let target = normal(&mut rng, &[2, 8, 8]);
        for block in 0..2 {
            let report = grad_check_many(
                |g: &mut Graph<f64>, v: &[Var]| {
                    let y = nn(net.block(g, &v[..n], 0, block, v[n]))?;
                    let t = g.constant(target.clone());
                    g.mse_loss(y, t, None)
                },
                &inputs,
                DEFAULT_STEP,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "seed {seed} block {block}: {report:?}");
        }
    }
}

#[test]
fn swin_embed_merge_and_head_gradient_check() {
    let net = randomized(Swin::<f64>::new(small_swin(), 4).unwrap(), 4);
    let n = net.params.params().len();
    let mut rng = SplitMix64::new(9);
    let mut inputs: Vec<Tensor<f64>> = net.params.params().iter().map(|p| p.value.clone()).collect();
    inputs.push(normal(&mut rng, &[2, 2, 32]));
    // patch embedding alone
    let target = normal(&mut rng, &[2, 8, 8]);
    let r = grad_check_many(
        |g: &mut Graph<f64>, v: &[Var]| {
            let y = nn(net.patch_embed(g, &v[..n], v[n]))?;
            let t = g.constant(target.clone());
            g.mse_loss(y, t, None)
        },
        &inputs,
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "patch_embed {r:?}");
    // patch merging alone
    let mut merge_inputs = inputs[..n].to_vec();
    merge_inputs.push(normal(&mut rng, &[2, 8, 8]));
    let target = normal(&mut rng, &[2, 4, 16]);
    let r = grad_check_many(
        |g: &mut Graph<f64>, v: &[Var]| {
            let y = nn(net.patch_merge(g, &v[..n], 0, v[n]))?;
            let t = g.constant(target.clone());
            g.mse_loss(y, t, None)
        },
        &merge_inputs,
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "patch_merge {r:?}");
    // pooling head under cross-entropy
    let (hw, hb) = (net.param_id("head.weight").unwrap(), net.param_id("head.bias").unwrap());
    let head_inputs = vec![
        net.params.get(hw).value.clone(),
        net.params.get(hb).value.clone(),
        normal(&mut rng, &[2, 4, 16]),
    ];
    let r = grad_check_many(
        |g: &mut Graph<f64>, v: &[Var]| {
            let pooled = g.mean_axis(v[2], 1)?;
            let logits = g.linear(pooled, v[0], Some(v[1]))?;
            g.cross_entropy(logits, &[2, 0])
        },
        &head_inputs,
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "head {r:?}");
    // The whole stack is smooth but its third derivative is large enough that
    // O(h^2) truncation at h = 1e-3 sits right at 1e-4, so use a finer step.
    let r = grad_check_many(
        |g: &mut Graph<f64>, v: &[Var]| {
            let y = nn(net.forward_with(g, &v[..n], v[n]))?;
            g.cross_entropy(y, &[2, 0])
        },
        &inputs,
        1e-4,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "full swin {r:?}");
}

#[test]
fn patch_embed_identity_and_zero() {
    let cfg = SwinConfig {
        in_channels: 12,
        seq_len: 128,
        patch_size: 4,
        embed_dim: 48,
        ..SwinConfig::default()
    };
    let mut net = Swin::<f64>::new(cfg, 0).unwrap();
    let w = net.param_id("patch.weight").unwrap();
    net.params.get_mut(w).value = Tensor::from_fn(&[48, 48], |i| if i / 48 == i % 48 { 1.0 } else { 0.0 });
    let mut rng = SplitMix64::new(1);
    let x = normal(&mut rng, &[1, 12, 128]);
    let mut g = Graph::inference();
    let p = net.bind(&mut g);
    let xv = g.constant(x.clone());
    let tokens = net.patch_embed(&mut g, &p, xv).unwrap();
    assert_eq!(g.shape(tokens), &[1, 32, 48]);
    let td = g.value(tokens).data();
    for t in 0..32 {
        for c in 0..12 {
            for k in 0..4 {
                assert_eq!(td[t * 48 + c * 4 + k], x.data()[c * 128 + t * 4 + k]);
            }
        }
    }
    let zero = g.constant(Tensor::zeros(&[1, 12, 128]));
    let z = net.patch_embed(&mut g, &p, zero).unwrap();
    assert!(g.value(z).data().iter().all(|&v| v == 0.0));
}

/// Plain-loop global attention block on `[T, D]`, reading weights by name.
fn reference_block(net: &Swin<f64>, x: &[f64], t: usize, d: usize, heads: usize, prefix: &str) -> Vec<f64> {
    let w = |name: &str| net.params.get(net.param_id(&format!("{prefix}.{name}")).unwrap()).value.data().to_vec();
    let ln = |x: &[f64], gname: &str, bname: &str| -> Vec<f64> {
        let (gm, bt) = (w(gname), w(bname));
        x.chunks(d)
            .flat_map(|row| {
                let m = row.iter().sum::<f64>() / d as f64;
                let v = row.iter().map(|a| (a - m).powi(2)).sum::<f64>() / d as f64;
                let s = (v + 1e-5).sqrt();
                row.iter().enumerate().map(|(i, a)| (a - m) / s * gm[i] + bt[i]).collect::<Vec<_>>()
            })
            .collect()
    };
    let lin = |x: &[f64], wn: &str, bn: Option<&str>, d_in: usize| -> Vec<f64> {
        let wt = w(wn);
        let d_out = wt.len() / d_in;
        let b = bn.map(&w);
        x.chunks(d_in)
            .flat_map(|row| {
                (0..d_out)
                    .map(|o| {
                        let s: f64 = (0..d_in).map(|i| row[i] * wt[o * d_in + i]).sum();
                        s + b.as_ref().map_or(0.0, |b| b[o])
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    let n1 = ln(x, "ln1.gamma", "ln1.beta");
    let qkv = lin(&n1, "qkv.weight", Some("qkv.bias"), d);
    let hd = d / heads;
    let mut att = vec![0.0; t * d];
    for h in 0..heads {
        for i in 0..t {
            let q = &qkv[i * 3 * d + h * hd..i * 3 * d + (h + 1) * hd];
            let scores: Vec<f64> = (0..t)
                .map(|j| {
                    let k = &qkv[j * 3 * d + d + h * hd..j * 3 * d + d + (h + 1) * hd];
                    q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / (hd as f64).sqrt()
                })
                .collect();
            let mx = scores.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            for j in 0..t {
                let v = &qkv[j * 3 * d + 2 * d + h * hd..j * 3 * d + 2 * d + (h + 1) * hd];
                for k in 0..hd {
                    att[i * d + h * hd + k] += e[j] / z * v[k];
                }
            }
        }
    }
    let proj = lin(&att, "proj.weight", Some("proj.bias"), d);
    let x1: Vec<f64> = x.iter().zip(&proj).map(|(a, b)| a + b).collect();
    let n2 = ln(&x1, "ln2.gamma", "ln2.beta");
    let h1: Vec<f64> = lin(&n2, "fc1.weight", Some("fc1.bias"), d)
        .into_iter()
        .map(|v| 0.5 * v * (1.0 + libm::erf(v / std::f64::consts::SQRT_2)))
        .collect();
    let h2 = lin(&h1, "fc2.weight", Some("fc2.bias"), h1.len() / t);
    x1.iter().zip(&h2).map(|(a, b)| a + b).collect()
}

#[test]
fn full_window_matches_global_attention() {
    // 8 tokens with a window of 8: both blocks reduce to global attention
    let cfg = SwinConfig {
        window_size: 8,
        ..small_swin()
    };
    let mut net = Swin::<f64>::new(cfg, 12).unwrap();
    let mut rng = SplitMix64::new(3);
    for p in net.params.params_mut() {
        if !p.name.contains("rel_pos") {
            for v in p.value.data_mut() {
                *v += 0.2 * rng.normal();
            }
        }
    }
    let x = normal(&mut rng, &[1, 8, 8]);
    for block in 0..2 {
        let mut g = Graph::inference();
        let p = net.bind(&mut g);
        let xv = g.constant(x.clone());
        let y = net.block(&mut g, &p, 0, block, xv).unwrap();
        let expect = reference_block(&net, x.data(), 8, 8, 2, &format!("stage0.block{block}"));
        let diff = g.value(y).data().iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-5, "block {block}: {diff}");
    }
}

#[test]
fn zero_branches_make_identity_block() {
    let mut net = Swin::<f64>::new(small_swin(), 2).unwrap();
    for p in net.params.params_mut() {
        if p.name.contains("proj") || p.name.contains("fc2") {
            p.value.fill(0.0);
        }
    }
    let mut rng = SplitMix64::new(4);
    let x = normal(&mut rng, &[2, 8, 8]);
    let mut g = Graph::inference();
    let p = net.bind(&mut g);
    let xv = g.constant(x.clone());
    for block in 0..2 {
        let y = net.block(&mut g, &p, 0, block, xv).unwrap();
        assert_eq!(g.value(y), &x);
    }
}

#[test]
fn shifted_mask_blocks_cross_boundary_pairs() {
    // With v = identity, attention output rows are the attention weights.
    let layout = WindowLayout::new(8, 4, 2).unwrap();
    let mask = layout.attention_mask::<f64>();
    let mut rng = SplitMix64::new(8);
    let (nw, w) = (2, 4);
    let q = Tensor::from_fn(&[nw, 1, w, w], |_| 3.0 * rng.normal());
    let k = Tensor::from_fn(&[nw, 1, w, w], |_| 3.0 * rng.normal());
    let v = Tensor::from_fn(&[nw, 1, w, w], |i| if (i / w) % w == i % w { 1.0 } else { 0.0 });
    let mut g = Graph::inference();
    let (qv, kv, vv) = (g.constant(q), g.constant(k), g.constant(v));
    let out = g.attention(qv, kv, vv, None, Some(&mask)).unwrap();
    let p = g.value(out).data();
    let windows = layout.partition();
    for win in 0..nw {
        for i in 0..w {
            let row = &p[(win * w + i) * w..(win * w + i + 1) * w];
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..w {
                let (a, b) = (windows[win][i], windows[win][j]);
                // tokens {6,7} and {0,1} share the wrap window but were never adjacent
                let crosses = win == 1 && ((a >= 6) != (b >= 6));
                if crosses {
                    assert!(row[j] < 1e-6, "weight {} between tokens {a} and {b}", row[j]);
                }
            }
        }
    }
}

#[test]
fn fresh_classifier_is_near_uniform() {
    let net = Swin::<f64>::new(SwinConfig::default(), 42).unwrap();
    let mut rng = SplitMix64::new(5);
    let x = normal(&mut rng, &[16, 12, 128]);
    let mut g = Graph::inference();
    let xv = g.constant(x);
    let logits = net.forward(&mut g, xv).unwrap();
    let labels: Vec<usize> = (0..16).map(|i| i % 11).collect();
    let ce = g.cross_entropy(logits, &labels).unwrap();
    let ce = g.value(ce).item();
    assert!((ce - 11f64.ln()).abs() < 0.1, "{ce}");
}

#[test]
fn class_permutation_permutes_probabilities() {
    let net = Swin::<f64>::new(small_swin(), 6).unwrap();
    let mut permuted = net.clone();
    let perm = [2usize, 0, 1];
    let (hw, hb) = (net.param_id("head.weight").unwrap(), net.param_id("head.bias").unwrap());
    let d = net.params.get(hw).value.shape()[1];
    let mut rng = SplitMix64::new(2);
    let bias: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
    let mut base = net.clone();
    base.params.get_mut(hb).value = Tensor::new(&[3], bias.clone()).unwrap();
    permuted.params.get_mut(hw).value = Tensor::from_fn(&[3, d], |i| {
        net.params.get(hw).value.data()[perm[i / d] * d + i % d]
    });
    permuted.params.get_mut(hb).value = Tensor::from_fn(&[3], |i| bias[perm[i]]);
    let x = normal(&mut rng, &[2, 2, 32]);
    let a = base.predict_proba(x.clone()).unwrap();
    let b = permuted.predict_proba(x).unwrap();
    for r in 0..2 {
        for c in 0..3 {
            assert!((b.data()[r * 3 + c] - a.data()[r * 3 + perm[c]]).abs() < 1e-12);
        }
    }
}
