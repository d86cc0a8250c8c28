//! Gradient-check sweep over every differentiable op, at two shapes each.

use std::sync::Arc;

use crate::error::Result;
use crate::gradcheck::{grad_check_many, GradCheckReport, DEFAULT_STEP};
use crate::graph::{Graph, Var};
use crate::ops::{BatchNormOpts, NormMode, RunningStats, MASKED};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub op: &'static str,
    pub shape: String,
    pub seed: u64,
    pub report: GradCheckReport,
}

fn normal(rng: &mut SplitMix64, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.normal())
}

/// Values bounded away from zero, so relu kinks sit outside the difference stencil.
fn away_from_zero(rng: &mut SplitMix64, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = 0.1 + rng.normal().abs();
        if rng.next_f64() < 0.5 {
            -m
        } else {
            m
        }
    })
}

/// Adjacent pairs separated by at least 0.1, so the max-pool argmax is stable.
fn separated_pairs(rng: &mut SplitMix64, shape: &[usize]) -> Tensor<f64> {
    let mut t = normal(rng, shape);
    for pair in t.data_mut().chunks_mut(2) {
        if pair.len() == 2 {
            let gap = 0.1 + rng.normal().abs();
            pair[1] = if rng.next_f64() < 0.5 { pair[0] + gap } else { pair[0] - gap };
        }
    }
    t
}

/// Reduce any tensor to a scalar through a squared error against a fixed
/// random target, so every output element carries a distinct weight.
fn reduce(g: &mut Graph<f64>, y: Var, target: &Tensor<f64>) -> Result<Var> {
    let t = g.constant(target.clone());
    g.mse_loss(y, t, None)
}

type Case = (
    &'static str,
    String,
    Vec<Tensor<f64>>,
    Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>,
);

fn cases(seed: u64) -> Vec<Case> {
    let mut rng = SplitMix64::for_purpose(seed, "grad-suite");
    let mut out: Vec<Case> = Vec::new();

    for &(b, ci, co, l, k, stride, pad) in &[(2, 3, 4, 8, 3, 1, 1), (1, 2, 3, 9, 2, 2, 0)] {
        let x = normal(&mut rng, &[b, ci, l]);
        let w = normal(&mut rng, &[co, ci, k]);
        let bias = normal(&mut rng, &[co]);
        let lo = (l + 2 * pad - k) / stride + 1;
        let target = normal(&mut rng, &[b, co, lo]);
        out.push((
            "conv1d",
            format!("x{:?} w{:?} s{stride} p{pad}", [b, ci, l], [co, ci, k]),
            vec![x, w, bias],
            Box::new(move |g, v| {
                let y = g.conv1d(v[0], v[1], Some(v[2]), stride, pad)?;
                reduce(g, y, &target)
            }),
        ));
    }

    for &(b, ci, co, l, k, stride) in &[(2, 3, 2, 4, 2, 2), (1, 2, 3, 5, 3, 1)] {
        let x = normal(&mut rng, &[b, ci, l]);
        let w = normal(&mut rng, &[ci, co, k]);
        let bias = normal(&mut rng, &[co]);
        let target = normal(&mut rng, &[b, co, (l - 1) * stride + k]);
        out.push((
            "conv1d_transposed",
            format!("x{:?} w{:?} s{stride}", [b, ci, l], [ci, co, k]),
            vec![x, w, bias],
            Box::new(move |g, v| {
                let y = g.conv1d_transposed(v[0], v[1], Some(v[2]), stride)?;
                reduce(g, y, &target)
            }),
        ));
    }

    for &(b, c, l) in &[(2, 3, 5), (3, 2, 4)] {
        for mode in [NormMode::Train, NormMode::Eval] {
            let x = normal(&mut rng, &[b, c, l]);
            let gamma = normal(&mut rng, &[c]);
            let beta = normal(&mut rng, &[c]);
            let target = normal(&mut rng, &[b, c, l]);
            let stats = RunningStats {
                mean: normal(&mut rng, &[c]),
                var: Tensor::from_fn(&[c], |_| 0.5 + rng.next_f64()),
            };
            out.push((
                if mode == NormMode::Train { "batch_norm1d(train)" } else { "batch_norm1d(eval)" },
                format!("{:?}", [b, c, l]),
                vec![x, gamma, beta],
                Box::new(move |g, v| {
                    let mut s = stats.clone();
                    let y = g.batch_norm1d(v[0], v[1], v[2], &mut s, mode, BatchNormOpts::default())?;
                    reduce(g, y, &target)
                }),
            ));
        }
    }

    for &(b, h, t, d) in &[(1, 2, 4, 3), (2, 1, 3, 2)] {
        let q = normal(&mut rng, &[b, h, t, d]);
        let k = normal(&mut rng, &[b, h, t, d]);
        let v = normal(&mut rng, &[b, h, t, d]);
        let bias = normal(&mut rng, &[h, t, t]);
        let target = normal(&mut rng, &[b, h, t, d]);
        // Block the last key for the first query, as a shifted-window mask would.
        let mut mask = Tensor::zeros(&[1, t, t]);
        mask.data_mut()[t - 1] = MASKED;
        out.push((
            "attention",
            format!("{:?}", [b, h, t, d]),
            vec![q, k, v, bias],
            Box::new(move |g, vs| {
                let y = g.attention(vs[0], vs[1], vs[2], Some(vs[3]), Some(&mask))?;
                reduce(g, y, &target)
            }),
        ));
    }

    for &shape in &[&[2usize, 3, 4][..], &[5, 3][..]] {
        let x = away_from_zero(&mut rng, shape);
        let target = normal(&mut rng, shape);
        out.push((
            "relu",
            format!("{shape:?}"),
            vec![x],
            Box::new(move |g, v| {
                let y = g.relu(v[0])?;
                reduce(g, y, &target)
            }),
        ));
        let x = normal(&mut rng, shape);
        let target = normal(&mut rng, shape);
        out.push((
            "gelu",
            format!("{shape:?}"),
            vec![x],
            Box::new(move |g, v| {
                let y = g.gelu(v[0])?;
                reduce(g, y, &target)
            }),
        ));
        let x = normal(&mut rng, shape);
        let target = normal(&mut rng, shape);
        out.push((
            "softmax",
            format!("{shape:?}"),
            vec![x],
            Box::new(move |g, v| {
                let y = g.softmax(v[0])?;
                reduce(g, y, &target)
            }),
        ));
        let d = *shape.last().unwrap();
        let x = normal(&mut rng, shape);
        let gamma = normal(&mut rng, &[d]);
        let beta = normal(&mut rng, &[d]);
        let target = normal(&mut rng, shape);
        out.push((
            "layer_norm",
            format!("{shape:?}"),
            vec![x, gamma, beta],
            Box::new(move |g, v| {
                let y = g.layer_norm(v[0], v[1], v[2])?;
                reduce(g, y, &target)
            }),
        ));
        let x = normal(&mut rng, shape);
        let y0 = normal(&mut rng, shape);
        let target = normal(&mut rng, shape);
        out.push((
            "add",
            format!("{shape:?}"),
            vec![x, y0],
            Box::new(move |g, v| {
                let y = g.add(v[0], v[1])?;
                reduce(g, y, &target)
            }),
        ));
    }

    for &(b, c, l) in &[(2, 3, 8), (1, 2, 7)] {
        let x = separated_pairs(&mut rng, &[b, c, l]);
        let target = normal(&mut rng, &[b, c, l / 2]);
        out.push((
            "max_pool1d",
            format!("{:?}", [b, c, l]),
            vec![x],
            Box::new(move |g, v| {
                let y = g.max_pool1d(v[0])?;
                reduce(g, y, &target)
            }),
        ));
    }

    for &(lead, din, dout) in &[(&[3usize][..], 4, 5), (&[2, 3][..], 3, 2)] {
        let mut xs = lead.to_vec();
        xs.push(din);
        let mut ys = lead.to_vec();
        ys.push(dout);
        let x = normal(&mut rng, &xs);
        let w = normal(&mut rng, &[dout, din]);
        let bias = normal(&mut rng, &[dout]);
        let target = normal(&mut rng, &ys);
        out.push((
            "linear",
            format!("x{xs:?} w{:?}", [dout, din]),
            vec![x, w, bias],
            Box::new(move |g, v| {
                let y = g.linear(v[0], v[1], Some(v[2]))?;
                reduce(g, y, &target)
            }),
        ));
    }

    for &(b, c1, c2, l) in &[(2, 2, 3, 4), (1, 1, 2, 5)] {
        let a = normal(&mut rng, &[b, c1, l]);
        let c = normal(&mut rng, &[b, c2, l]);
        let target = normal(&mut rng, &[b, c1 + c2, l]);
        out.push((
            "concat",
            format!("{:?}+{:?}", [b, c1, l], [b, c2, l]),
            vec![a, c],
            Box::new(move |g, v| {
                let y = g.concat(&[v[0], v[1]], 1)?;
                reduce(g, y, &target)
            }),
        ));
    }

    for &(t, d, shift) in &[(6usize, 2usize, 2usize), (8, 3, 3)] {
        let x = normal(&mut rng, &[t, d]);
        // cyclic roll of tokens followed by a transpose
        let idx: Arc<[usize]> = (0..d)
            .flat_map(|j| (0..t).map(move |i| ((i + shift) % t) * d + j))
            .collect();
        let target = normal(&mut rng, &[d, t]);
        out.push((
            "gather",
            format!("roll {shift} of {:?}", [t, d]),
            vec![x],
            Box::new(move |g, v| {
                let y = g.gather(v[0], idx.clone(), &[d, t])?;
                reduce(g, y, &target)
            }),
        ));
        let x = normal(&mut rng, &[2, t, d]);
        let target = normal(&mut rng, &[2, d]);
        out.push((
            "mean_axis",
            format!("{:?} axis 1", [2, t, d]),
            vec![x],
            Box::new(move |g, v| {
                let y = g.mean_axis(v[0], 1)?;
                reduce(g, y, &target)
            }),
        ));
    }

    for &(b, c) in &[(3usize, 11usize), (4, 2)] {
        let logits = normal(&mut rng, &[b, c]);
        let labels: Vec<usize> = (0..b).map(|_| rng.below(c)).collect();
        out.push((
            "cross_entropy",
            format!("{:?}", [b, c]),
            vec![logits],
            Box::new(move |g, v| g.cross_entropy(v[0], &labels)),
        ));
    }

    for &shape in &[&[2usize, 3, 4][..], &[7][..]] {
        let x = normal(&mut rng, shape);
        let y = normal(&mut rng, shape);
        let n: usize = shape.iter().product();
        let mask: Vec<bool> = (0..n).map(|i| i % 3 != 1).collect();
        out.push((
            "mse_loss",
            format!("{shape:?}"),
            vec![x.clone(), y.clone()],
            Box::new(|g, v| g.mse_loss(v[0], v[1], None)),
        ));
        out.push((
            "mse_loss(masked)",
            format!("{shape:?}"),
            vec![x, y],
            Box::new(move |g, v| g.mse_loss(v[0], v[1], Some(&mask))),
        ));
    }

    out
}

/// Run every case for one seed.
pub fn run_suite(seed: u64) -> Result<Vec<SuiteEntry>> {
    cases(seed)
        .into_iter()
        .map(|(op, shape, inputs, f)| {
            let report = grad_check_many(|g, v| f(g, v), &inputs, DEFAULT_STEP)?;
            Ok(SuiteEntry {
                op,
                shape,
                seed,
                report,
            })
        })
        .collect()
}
