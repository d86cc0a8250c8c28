//! 1-D U-Net: Conv-BN-ReLU encoder with max-pool downsampling, an
//! up-convolution decoder with skip concatenation, and a 1-wide output conv.

use std::collections::BTreeMap;

use cuisine_nn::{
    init_fan_in, BatchNormOpts, Float, Graph, NormMode, ParamId, ParamStore, RunningStats,
    SplitMix64, Tensor, Var,
};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

const KERNEL: usize = 3;
const PAD: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub seq_len: usize,
    pub mask_ratio: f64,
    pub mask_segment_len: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            in_channels: 12,
            base_channels: 32,
            depth: 3,
            seq_len: 128,
            mask_ratio: 0.15,
            mask_segment_len: 8,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Config(m));
        if self.in_channels == 0 || self.base_channels == 0 || self.mask_segment_len == 0 {
            return bad("channel counts and mask segment length must be positive".into());
        }
        if self.seq_len == 0 || !self.seq_len.is_multiple_of(1 << self.depth) || self.seq_len >> self.depth < 1 {
            return bad(format!("seq_len {} not divisible by 2^{}", self.seq_len, self.depth));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return bad(format!("mask_ratio {} outside (0, 1)", self.mask_ratio));
        }
        if (self.mask_ratio * self.seq_len as f64).round() < 1.0 {
            return bad(format!("mask_ratio {} masks no timestep", self.mask_ratio));
        }
        Ok(())
    }

    /// Channels at encoder level `i`; level `depth` is the bottleneck.
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

/// Two Conv-BN-ReLU layers.
#[derive(Clone, Debug)]
struct DoubleConv {
    conv: [ParamId; 2],
    gamma: [ParamId; 2],
    beta: [ParamId; 2],
    bn: [usize; 2],
}

#[derive(Clone, Debug)]
struct UpBlock {
    weight: ParamId,
    bias: ParamId,
    convs: DoubleConv,
}

#[derive(Clone, Debug)]
pub struct UNet<T: Float> {
    pub config: UNetConfig,
    pub params: ParamStore<T>,
    /// Batch-norm running statistics with their checkpoint name prefixes.
    pub bn_stats: Vec<(String, RunningStats<T>)>,
    encoder: Vec<DoubleConv>,
    bottleneck: DoubleConv,
    decoder: Vec<UpBlock>,
    head_weight: ParamId,
    head_bias: ParamId,
}

/// Channel count and length after each stage, for inspecting the schedule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageShape {
    pub name: String,
    pub channels: usize,
    pub len: usize,
}

struct Builder<'a, T: Float> {
    rng: &'a mut SplitMix64,
    params: ParamStore<T>,
    bn_stats: Vec<(String, RunningStats<T>)>,
}

impl<T: Float> Builder<'_, T> {
    fn conv(&mut self, name: &str, c_out: usize, c_in: usize, k: usize) -> ParamId {
        let w = init_fan_in(self.rng, &[c_out, c_in, k], c_in * k);
        self.params.add(format!("{name}.weight"), w)
    }

    fn double_conv(&mut self, name: &str, c_in: usize, c_out: usize) -> DoubleConv {
        let mut conv = [0; 2];
        let mut gamma = [0; 2];
        let mut beta = [0; 2];
        let mut bn = [0; 2];
        for j in 0..2 {
            let ci = if j == 0 { c_in } else { c_out };
            conv[j] = self.conv(&format!("{name}.conv{j}"), c_out, ci, KERNEL);
            gamma[j] = self.params.add(format!("{name}.bn{j}.gamma"), Tensor::full(&[c_out], T::one()));
            beta[j] = self.params.add(format!("{name}.bn{j}.beta"), Tensor::zeros(&[c_out]));
            self.bn_stats.push((format!("{name}.bn{j}"), RunningStats::new(c_out)));
            bn[j] = self.bn_stats.len() - 1;
        }
        DoubleConv {
            conv,
            gamma,
            beta,
            bn,
        }
    }
}

impl<T: Float> UNet<T> {
    pub fn new(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::for_purpose(seed, "unet/init");
        let mut b = Builder {
            rng: &mut rng,
            params: ParamStore::new(),
            bn_stats: Vec::new(),
        };
        let mut encoder = Vec::with_capacity(config.depth);
        let mut c_in = config.in_channels;
        for i in 0..config.depth {
            encoder.push(b.double_conv(&format!("enc{i}"), c_in, config.channels(i)));
            c_in = config.channels(i);
        }
        let bottleneck = b.double_conv("mid", c_in, config.channels(config.depth));
        let mut decoder = Vec::with_capacity(config.depth);
        for i in (0..config.depth).rev() {
            let (hi, lo) = (config.channels(i + 1), config.channels(i));
            // fan-in of a stride-2, width-2 up-convolution: c_in * K / stride
            let w = init_fan_in(b.rng, &[hi, lo, 2], hi);
            let weight = b.params.add(format!("dec{i}.up.weight"), w);
            let bias = b.params.add(format!("dec{i}.up.bias"), Tensor::zeros(&[lo]));
            let convs = b.double_conv(&format!("dec{i}"), 2 * lo, lo);
            decoder.push(UpBlock { weight, bias, convs });
        }
        let c0 = config.channels(0);
        let head_weight = b.conv("head", config.in_channels, c0, 1);
        let head_bias = b.params.add("head.bias", Tensor::zeros(&[config.in_channels]));
        let Builder { params, bn_stats, .. } = b;
        Ok(UNet {
            config,
            params,
            bn_stats,
            encoder,
            bottleneck,
            decoder,
            head_weight,
            head_bias,
        })
    }

    /// Bind every parameter into `g`, in parameter order.
    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        (0..self.params.params().len()).map(|id| self.params.bind(g, id)).collect()
    }

    fn double_conv(
        g: &mut Graph<T>,
        p: &[Var],
        stats: &mut [RunningStats<T>],
        dc: &DoubleConv,
        mut h: Var,
        mode: NormMode,
    ) -> Result<Var> {
        for j in 0..2 {
            h = g.conv1d(h, p[dc.conv[j]], None, 1, PAD)?;
            h = g.batch_norm1d(h, p[dc.gamma[j]], p[dc.beta[j]], &mut stats[dc.bn[j]], mode, BatchNormOpts::default())?;
            h = g.relu(h)?;
        }
        Ok(h)
    }

    /// Forward pass over `x: [B, C, L]` with explicit parameter vars and
    /// running statistics, so the same code serves training, inference and
    /// gradient checks. Stage shapes are appended to `trace` when given.
    pub fn forward_with(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        stats: &mut [RunningStats<T>],
        x: Var,
        mode: NormMode,
        mut trace: Option<&mut Vec<StageShape>>,
    ) -> Result<Var> {
        let mut record = |g: &Graph<T>, name: String, v: Var| {
            if let Some(t) = trace.as_deref_mut() {
                let s = g.shape(v);
                t.push(StageShape {
                    name,
                    channels: s[1],
                    len: s[2],
                });
            }
        };
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut h = x;
        for (i, dc) in self.encoder.iter().enumerate() {
            h = Self::double_conv(g, p, stats, dc, h, mode)?;
            record(g, format!("enc{i}"), h);
            skips.push(h);
            h = g.max_pool1d(h)?;
        }
        h = Self::double_conv(g, p, stats, &self.bottleneck, h, mode)?;
        record(g, "bottleneck".into(), h);
        for (up, i) in self.decoder.iter().zip((0..self.config.depth).rev()) {
            h = g.conv1d_transposed(h, p[up.weight], Some(p[up.bias]), 2)?;
            h = g.concat(&[skips[i], h], 1)?;
            h = Self::double_conv(g, p, stats, &up.convs, h, mode)?;
            record(g, format!("dec{i}"), h);
        }
        let out = g.conv1d(h, p[self.head_weight], Some(p[self.head_bias]), 1, 0)?;
        record(g, "output".into(), out);
        Ok(out)
    }

    /// Forward with the model's own running statistics (updated in train mode).
    pub fn forward(&mut self, g: &mut Graph<T>, x: Var, mode: NormMode) -> Result<Var> {
        let p = self.bind(g);
        let mut stats: Vec<RunningStats<T>> = self.bn_stats.iter().map(|(_, s)| s.clone()).collect();
        let out = self.forward_with(g, &p, &mut stats, x, mode, None)?;
        if mode == NormMode::Train {
            for ((_, dst), src) in self.bn_stats.iter_mut().zip(stats) {
                *dst = src;
            }
        }
        Ok(out)
    }

    /// Eval-mode reconstruction of `x: [B, C, L]`.
    pub fn predict(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::inference();
        let p = self.bind(&mut g);
        let mut stats: Vec<RunningStats<T>> = self.bn_stats.iter().map(|(_, s)| s.clone()).collect();
        let xv = g.constant(x);
        let out = self.forward_with(&mut g, &p, &mut stats, xv, NormMode::Eval, None)?;
        Ok(g.value(out).clone())
    }

    /// Stage shapes of one eval-mode pass on a zero input of batch 1.
    pub fn shape_trace(&self) -> Result<Vec<StageShape>> {
        let mut g = Graph::inference();
        let p = self.bind(&mut g);
        let mut stats: Vec<RunningStats<T>> = self.bn_stats.iter().map(|(_, s)| s.clone()).collect();
        let x = g.constant(Tensor::zeros(&[1, self.config.in_channels, self.config.seq_len]));
        let mut trace = Vec::new();
        self.forward_with(&mut g, &p, &mut stats, x, NormMode::Eval, Some(&mut trace))?;
        Ok(trace)
    }

    /// Parameters and running statistics by name.
    pub fn named_tensors(&self) -> BTreeMap<String, Tensor<f32>> {
        let mut out = self.params.named_tensors();
        for (name, s) in &self.bn_stats {
            out.insert(format!("{name}.running_mean"), s.mean.cast());
            out.insert(format!("{name}.running_var"), s.var.cast());
        }
        out
    }

    pub fn load_named(&mut self, tensors: &BTreeMap<String, Tensor<f32>>) -> Result<()> {
        self.params.load_named(tensors)?;
        for (name, s) in &mut self.bn_stats {
            for (suffix, dst) in [("running_mean", &mut s.mean), ("running_var", &mut s.var)] {
                let key = format!("{name}.{suffix}");
                let t = tensors
                    .get(&key)
                    .ok_or_else(|| CoreError::Config(format!("checkpoint lacks `{key}`")))?;
                if t.shape() != dst.shape() {
                    return Err(CoreError::Config(format!("`{key}` has shape {:?}", t.shape())));
                }
                *dst = t.cast();
            }
        }
        Ok(())
    }
}
