use crate::error::{shape_err, NnError, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Float;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

/// Per-channel running statistics of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Float> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: Tensor::zeros(&[channels]),
            var: Tensor::full(&[channels], T::one()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BatchNormOpts {
    pub eps: f64,
    pub momentum: f64,
}

impl Default for BatchNormOpts {
    fn default() -> Self {
        BatchNormOpts {
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }
}

impl<T: Float> Graph<T> {
    /// Batch normalization over `[B, C, L]`, statistics per channel.
    ///
    /// Train mode normalizes with biased batch variance and folds the batch
    /// mean and unbiased variance into `stats` with the given momentum. Eval
    /// mode normalizes with `stats` and leaves them untouched.
    pub fn batch_norm1d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats<T>,
        mode: NormMode,
        opts: BatchNormOpts,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(shape_err("batch_norm1d", format!("x {xs:?}")));
        }
        let (batch, ch, len) = (xs[0], xs[1], xs[2]);
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != [ch] {
                return Err(shape_err("batch_norm1d", format!("{name} {:?} for {ch} channels", self.shape(v))));
            }
        }
        if stats.mean.shape() != [ch] || stats.var.shape() != [ch] {
            return Err(shape_err("batch_norm1d", "running stats shape"));
        }
        let count = batch * len;
        if mode == NormMode::Train && count <= 1 {
            return Err(NnError::DegenerateBatch { count });
        }
        let eps = T::from_f64_lossy(opts.eps);
        let xd = self.value(x).data();
        let (mean, var) = match mode {
            NormMode::Train => {
                let n = T::from_usize(count).unwrap();
                let mut mean = vec![T::zero(); ch];
                let mut var = vec![T::zero(); ch];
                for c in 0..ch {
                    let mut s = T::zero();
                    for b in 0..batch {
                        s += xd[(b * ch + c) * len..(b * ch + c + 1) * len].iter().copied().sum::<T>();
                    }
                    let m = s / n;
                    let mut ss = T::zero();
                    for b in 0..batch {
                        for &v in &xd[(b * ch + c) * len..(b * ch + c + 1) * len] {
                            ss += (v - m) * (v - m);
                        }
                    }
                    mean[c] = m;
                    var[c] = ss / n;
                }
                let mom = T::from_f64_lossy(opts.momentum);
                let unbias = n / (n - T::one());
                for c in 0..ch {
                    let rm = &mut stats.mean.data_mut()[c];
                    *rm = (T::one() - mom) * *rm + mom * mean[c];
                    let rv = &mut stats.var.data_mut()[c];
                    *rv = (T::one() - mom) * *rv + mom * var[c] * unbias;
                }
                (mean, var)
            }
            NormMode::Eval => (stats.mean.data().to_vec(), stats.var.data().to_vec()),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        for b in 0..batch {
            for c in 0..ch {
                let off = (b * ch + c) * len;
                for i in off..off + len {
                    xhat[i] = (xd[i] - mean[c]) * inv_std[c];
                    out[i] = gd[c] * xhat[i] + bd[c];
                }
            }
        }
        let value = Tensor::new(&xs, out)?;
        self.push("batch_norm1d", value, &[x, gamma, beta], move |a| {
            let gd = a.grad.data();
            let gamma = a.inputs[1].data();
            let mut dgamma = vec![T::zero(); ch];
            let mut dbeta = vec![T::zero(); ch];
            for b in 0..batch {
                for c in 0..ch {
                    let off = (b * ch + c) * len;
                    for i in off..off + len {
                        dgamma[c] += gd[i] * xhat[i];
                        dbeta[c] += gd[i];
                    }
                }
            }
            let mut dx = vec![T::zero(); gd.len()];
            match mode {
                NormMode::Train => {
                    // dx = inv_std / n * (n*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
                    let n = T::from_usize(count).unwrap();
                    for c in 0..ch {
                        let (sum_dxhat, sum_dxhat_xhat) = (dbeta[c] * gamma[c], dgamma[c] * gamma[c]);
                        let k = inv_std[c] / n;
                        for b in 0..batch {
                            let off = (b * ch + c) * len;
                            for i in off..off + len {
                                let dxhat = gd[i] * gamma[c];
                                dx[i] = k * (n * dxhat - sum_dxhat - xhat[i] * sum_dxhat_xhat);
                            }
                        }
                    }
                }
                NormMode::Eval => {
                    for b in 0..batch {
                        for c in 0..ch {
                            let off = (b * ch + c) * len;
                            for i in off..off + len {
                                dx[i] = gd[i] * gamma[c] * inv_std[c];
                            }
                        }
                    }
                }
            }
            vec![
                Some(Tensor::new(&[batch, ch, len], dx).expect("dx")),
                Some(Tensor::new(&[ch], dgamma).expect("dgamma")),
                Some(Tensor::new(&[ch], dbeta).expect("dbeta")),
            ]
        })
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta` of
    /// that axis' extent.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let d = *xs.last().ok_or_else(|| shape_err("layer_norm", "rank 0 input"))?;
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != [d] {
                return Err(shape_err("layer_norm", format!("{name} {:?} for last axis {d}", self.shape(v))));
            }
        }
        if d == 0 {
            return Err(shape_err("layer_norm", "empty last axis"));
        }
        let eps = T::from_f64_lossy(LN_EPS);
        let nd = T::from_usize(d).unwrap();
        let xd = self.value(x).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let rows = xd.len() / d;
        let mut xhat = vec![T::zero(); xd.len()];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xd.len()];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let m = row.iter().copied().sum::<T>() / nd;
            let v = row.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / nd;
            let is = T::one() / (v + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - m) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = gd[j] * h + bd[j];
            }
        }
        let value = Tensor::new(&xs, out)?;
        self.push("layer_norm", value, &[x, gamma, beta], move |a| {
            let g = a.grad.data();
            let gamma = a.inputs[1].data();
            let mut dgamma = vec![T::zero(); d];
            let mut dbeta = vec![T::zero(); d];
            let mut dx = vec![T::zero(); g.len()];
            let mut dxhat = vec![T::zero(); d];
            for r in 0..rows {
                let mut s1 = T::zero();
                let mut s2 = T::zero();
                for j in 0..d {
                    let i = r * d + j;
                    dgamma[j] += g[i] * xhat[i];
                    dbeta[j] += g[i];
                    dxhat[j] = g[i] * gamma[j];
                    s1 += dxhat[j];
                    s2 += dxhat[j] * xhat[i];
                }
                let k = inv_std[r] / nd;
                for j in 0..d {
                    let i = r * d + j;
                    dx[i] = k * (nd * dxhat[j] - s1 - xhat[i] * s2);
                }
            }
            vec![
                Some(Tensor::new(a.inputs[0].shape(), dx).expect("dx")),
                Some(Tensor::new(&[d], dgamma).expect("dgamma")),
                Some(Tensor::new(&[d], dbeta).expect("dbeta")),
            ]
        })
    }
}
