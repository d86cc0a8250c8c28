//! 1-D hierarchical shifted-window transformer.
//!
//! Patch embedding, stages of pre-norm attention/MLP blocks alternating plain
//! and half-window-shifted windows, patch merging between stages, mean
//! pooling and a linear head.

use std::collections::BTreeMap;
use std::sync::Arc;

use cuisine_nn::{init_fan_in, Float, Graph, ParamId, ParamStore, SplitMix64, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::window::WindowLayout;
use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwinConfig {
    pub in_channels: usize,
    pub seq_len: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub stage_depths: Vec<usize>,
    pub stage_heads: Vec<usize>,
    pub window_size: usize,
    pub mlp_ratio: usize,
    pub num_classes: usize,
}

impl Default for SwinConfig {
    fn default() -> Self {
        SwinConfig {
            in_channels: 12,
            seq_len: 128,
            patch_size: 4,
            embed_dim: 48,
            stage_depths: vec![2, 2],
            stage_heads: vec![3, 6],
            window_size: 8,
            mlp_ratio: 4,
            num_classes: 11,
        }
    }
}

impl SwinConfig {
    pub fn num_stages(&self) -> usize {
        self.stage_depths.len()
    }

    pub fn stage_tokens(&self, s: usize) -> usize {
        (self.seq_len / self.patch_size) >> s
    }

    pub fn stage_dim(&self, s: usize) -> usize {
        self.embed_dim << s
    }

    /// Window actually used at a stage (capped at the token count).
    pub fn stage_window(&self, s: usize) -> usize {
        self.window_size.min(self.stage_tokens(s))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Config(m));
        if self.in_channels == 0 || self.patch_size == 0 || self.embed_dim == 0 || self.window_size == 0 {
            return bad("swin sizes must be positive".into());
        }
        if self.mlp_ratio == 0 || self.num_classes < 2 {
            return bad("mlp_ratio must be positive and num_classes at least 2".into());
        }
        if self.seq_len == 0 || !self.seq_len.is_multiple_of(self.patch_size) {
            return bad(format!("seq_len {} not divisible by patch_size {}", self.seq_len, self.patch_size));
        }
        if self.stage_depths.is_empty() || self.stage_depths.len() != self.stage_heads.len() {
            return bad("stage_depths and stage_heads must be non-empty and equally long".into());
        }
        for s in 0..self.num_stages() {
            let t = self.stage_tokens(s);
            if t == 0 || (s + 1 < self.num_stages() && !t.is_multiple_of(2)) {
                return bad(format!("stage {s} has {t} tokens; merging needs an even count"));
            }
            if !t.is_multiple_of(self.stage_window(s)) {
                return bad(format!("stage {s}: {t} tokens not divisible by window {}", self.window_size));
            }
            let (d, h) = (self.stage_dim(s), self.stage_heads[s]);
            if h == 0 || d % h != 0 {
                return bad(format!("stage {s}: dim {d} not divisible by {h} heads"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Block {
    ln1: (ParamId, ParamId),
    qkv: (ParamId, ParamId),
    proj: (ParamId, ParamId),
    ln2: (ParamId, ParamId),
    fc1: (ParamId, ParamId),
    fc2: (ParamId, ParamId),
}

#[derive(Clone, Debug)]
struct Stage {
    rel_pos: ParamId,
    blocks: Vec<Block>,
}

#[derive(Clone, Debug)]
struct Merge {
    norm: (ParamId, ParamId),
    reduction: ParamId,
}

#[derive(Clone, Debug)]
pub struct Swin<T: Float> {
    pub config: SwinConfig,
    pub params: ParamStore<T>,
    patch: (ParamId, ParamId),
    stages: Vec<Stage>,
    merges: Vec<Merge>,
    head: (ParamId, ParamId),
}

struct Init<'a, T: Float> {
    rng: &'a mut SplitMix64,
    params: ParamStore<T>,
}

impl<T: Float> Init<'_, T> {
    fn linear(&mut self, name: &str, d_out: usize, d_in: usize, bias: bool) -> (ParamId, ParamId) {
        let w = init_fan_in(self.rng, &[d_out, d_in], d_in);
        let wid = self.params.add(format!("{name}.weight"), w);
        let bid = if bias {
            self.params.add(format!("{name}.bias"), Tensor::zeros(&[d_out]))
        } else {
            usize::MAX
        };
        (wid, bid)
    }

    fn norm(&mut self, name: &str, d: usize) -> (ParamId, ParamId) {
        (
            self.params.add(format!("{name}.gamma"), Tensor::full(&[d], T::one())),
            self.params.add(format!("{name}.beta"), Tensor::zeros(&[d])),
        )
    }
}

/// Flat index map from `[B, C, L]` to patch tokens `[B, T, C * P]`; token
/// feature `c * P + p` is timestep `t * P + p` of channel `c`.
fn patch_index(batch: usize, c: usize, l: usize, p: usize) -> Vec<usize> {
    let t = l / p;
    let mut idx = Vec::with_capacity(batch * c * l);
    for b in 0..batch {
        for tok in 0..t {
            for ch in 0..c {
                for k in 0..p {
                    idx.push(b * c * l + ch * l + tok * p + k);
                }
            }
        }
    }
    idx
}

impl<T: Float> Swin<T> {
    pub fn new(config: SwinConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::for_purpose(seed, "swin/init");
        let mut b = Init {
            rng: &mut rng,
            params: ParamStore::new(),
        };
        let patch = b.linear("patch", config.embed_dim, config.in_channels * config.patch_size, true);
        let mut stages = Vec::new();
        let mut merges = Vec::new();
        for s in 0..config.num_stages() {
            let (d, h, w) = (config.stage_dim(s), config.stage_heads[s], config.stage_window(s));
            // relative position bias, zero at start so attention begins content-only
            let rel_pos = b.params.add(format!("stage{s}.rel_pos"), Tensor::zeros(&[2 * w - 1, h]));
            let blocks = (0..config.stage_depths[s])
                .map(|k| {
                    let n = format!("stage{s}.block{k}");
                    Block {
                        ln1: b.norm(&format!("{n}.ln1"), d),
                        qkv: b.linear(&format!("{n}.qkv"), 3 * d, d, true),
                        proj: b.linear(&format!("{n}.proj"), d, d, true),
                        ln2: b.norm(&format!("{n}.ln2"), d),
                        fc1: b.linear(&format!("{n}.fc1"), config.mlp_ratio * d, d, true),
                        fc2: b.linear(&format!("{n}.fc2"), d, config.mlp_ratio * d, true),
                    }
                })
                .collect();
            stages.push(Stage { rel_pos, blocks });
            if s + 1 < config.num_stages() {
                merges.push(Merge {
                    norm: b.norm(&format!("merge{s}.norm"), 2 * d),
                    reduction: b.linear(&format!("merge{s}.reduction"), 2 * d, 2 * d, false).0,
                });
            }
        }
        let last = config.stage_dim(config.num_stages() - 1);
        let head = b.linear("head", config.num_classes, last, true);
        Ok(Swin {
            config,
            params: b.params,
            patch,
            stages,
            merges,
            head,
        })
    }

    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        (0..self.params.params().len()).map(|id| self.params.bind(g, id)).collect()
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.params().iter().position(|p| p.name == name)
    }

    /// `[B, C, L]` to tokens `[B, T, D]`.
    pub fn patch_embed(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let c = &self.config;
        if s.len() != 3 || s[1] != c.in_channels || s[2] != c.seq_len {
            return Err(CoreError::Nn(cuisine_nn::NnError::ShapeMismatch {
                op: "patch_embed",
                detail: format!("input {s:?}"),
            }));
        }
        let tokens = c.seq_len / c.patch_size;
        let idx: Arc<[usize]> = patch_index(s[0], c.in_channels, c.seq_len, c.patch_size).into();
        let patches = g.gather(x, idx, &[s[0], tokens, c.in_channels * c.patch_size])?;
        Ok(g.linear(patches, p[self.patch.0], Some(p[self.patch.1]))?)
    }

    /// Windowed multi-head attention over `h: [B, T, D]` (already normalized).
    fn window_attention(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        stage: usize,
        block: &Block,
        layout: &WindowLayout,
        h: Var,
    ) -> Result<Var> {
        let s = g.shape(h).to_vec();
        let (batch, t, d) = (s[0], s[1], s[2]);
        let heads = self.config.stage_heads[stage];
        let hd = d / heads;
        let (nw, w) = (layout.num_windows(), layout.window);
        let qkv = g.linear(h, p[block.qkv.0], Some(p[block.qkv.1]))?;
        let qkv_shape = [batch * nw, heads, w, hd];
        let split = |part: usize| -> Arc<[usize]> {
            let mut idx = Vec::with_capacity(batch * t * d);
            for b in 0..batch {
                for win in 0..nw {
                    for hh in 0..heads {
                        for i in 0..w {
                            let tok = layout.source(win * w + i);
                            let base = (b * t + tok) * 3 * d + part * d + hh * hd;
                            idx.extend(base..base + hd);
                        }
                    }
                }
            }
            idx.into()
        };
        let q = g.gather(qkv, split(0), &qkv_shape)?;
        let k = g.gather(qkv, split(1), &qkv_shape)?;
        let v = g.gather(qkv, split(2), &qkv_shape)?;

        let mut bias_idx = Vec::with_capacity(heads * w * w);
        for hh in 0..heads {
            for i in 0..w {
                for j in 0..w {
                    bias_idx.push((i + w - 1 - j) * heads + hh);
                }
            }
        }
        let bias = g.gather(p[self.stages[stage].rel_pos], bias_idx.into(), &[heads, w, w])?;
        let mask = layout.is_masked().then(|| layout.attention_mask::<T>());
        let att = g.attention(q, k, v, Some(bias), mask.as_ref())?;

        let mut back = Vec::with_capacity(batch * t * d);
        for b in 0..batch {
            for tok in 0..t {
                let r = layout.position(tok);
                let (win, i) = (r / w, r % w);
                for hh in 0..heads {
                    let base = (((b * nw + win) * heads + hh) * w + i) * hd;
                    back.extend(base..base + hd);
                }
            }
        }
        let merged = g.gather(att, back.into(), &[batch, t, d])?;
        Ok(g.linear(merged, p[block.proj.0], Some(p[block.proj.1]))?)
    }

    /// One pre-norm block: attention then MLP, each with a residual.
    pub fn block(&self, g: &mut Graph<T>, p: &[Var], stage: usize, index: usize, x: Var) -> Result<Var> {
        let blk = &self.stages[stage].blocks[index];
        let layout = WindowLayout::for_block(self.config.stage_tokens(stage), self.config.window_size, index)?;
        let n = g.layer_norm(x, p[blk.ln1.0], p[blk.ln1.1])?;
        let a = self.window_attention(g, p, stage, blk, &layout, n)?;
        let x = g.add(x, a)?;
        let n = g.layer_norm(x, p[blk.ln2.0], p[blk.ln2.1])?;
        let m = g.linear(n, p[blk.fc1.0], Some(p[blk.fc1.1]))?;
        let m = g.gelu(m)?;
        let m = g.linear(m, p[blk.fc2.0], Some(p[blk.fc2.1]))?;
        Ok(g.add(x, m)?)
    }

    /// `[B, T, D]` to `[B, T/2, 2D]`: concatenate adjacent tokens, normalize,
    /// project.
    pub fn patch_merge(&self, g: &mut Graph<T>, p: &[Var], stage: usize, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || !s[1].is_multiple_of(2) {
            return Err(CoreError::Nn(cuisine_nn::NnError::ShapeMismatch {
                op: "patch_merge",
                detail: format!("tokens {s:?}"),
            }));
        }
        let m = &self.merges[stage];
        let pairs = g.reshape(x, &[s[0], s[1] / 2, 2 * s[2]])?;
        let n = g.layer_norm(pairs, p[m.norm.0], p[m.norm.1])?;
        Ok(g.linear(n, p[m.reduction], None)?)
    }

    /// Logits `[B, num_classes]` for `x: [B, C, L]`.
    pub fn forward_with(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Result<Var> {
        let mut h = self.patch_embed(g, p, x)?;
        for s in 0..self.config.num_stages() {
            for k in 0..self.config.stage_depths[s] {
                h = self.block(g, p, s, k, h)?;
            }
            if s + 1 < self.config.num_stages() {
                h = self.patch_merge(g, p, s, h)?;
            }
        }
        let pooled = g.mean_axis(h, 1)?;
        Ok(g.linear(pooled, p[self.head.0], Some(p[self.head.1]))?)
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let p = self.bind(g);
        self.forward_with(g, &p, x)
    }

    /// Class probabilities `[B, num_classes]`.
    pub fn predict_proba(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::inference();
        let xv = g.constant(x);
        let logits = self.forward(&mut g, xv)?;
        let probs = g.softmax(logits)?;
        Ok(g.value(probs).clone())
    }

    pub fn named_tensors(&self) -> BTreeMap<String, Tensor<f32>> {
        self.params.named_tensors()
    }

    pub fn load_named(&mut self, tensors: &BTreeMap<String, Tensor<f32>>) -> Result<()> {
        Ok(self.params.load_named(tensors)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_layout() {
        // 2 channels, 8 steps, patch 4 -> token 1 = [c0 t4..8, c1 t4..8]
        let idx = patch_index(1, 2, 8, 4);
        assert_eq!(&idx[8..16], &[4, 5, 6, 7, 12, 13, 14, 15]);
    }

    #[test]
    fn default_config_is_valid() {
        let c = SwinConfig::default();
        c.validate().unwrap();
        assert_eq!(c.stage_tokens(0), 32);
        assert_eq!(c.stage_tokens(1), 16);
        assert_eq!(c.stage_dim(1), 96);
        let mut bad = c.clone();
        bad.stage_heads = vec![5, 6];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn merge_shapes() {
        let net = Swin::<f64>::new(SwinConfig::default(), 0).unwrap();
        let mut g = Graph::new();
        let p = net.bind(&mut g);
        let x = g.constant(Tensor::from_fn(&[2, 32, 48], |i| (i as f64 * 0.01).sin()));
        let y = net.patch_merge(&mut g, &p, 0, x).unwrap();
        assert_eq!(g.shape(y), &[2, 16, 96]);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let net = Swin::<f32>::new(SwinConfig::default(), 3).unwrap();
        let x = Tensor::from_fn(&[3, 12, 128], |i| ((i * 7919) % 101) as f32 / 50.0 - 1.0);
        let p = net.predict_proba(x).unwrap();
        for row in p.data().chunks(11) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }
}
