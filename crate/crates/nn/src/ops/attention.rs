use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::ops::activation::softmax_in_place;
use crate::scalar::Float;
use crate::tensor::Tensor;

/// Additive entry that disables an attention pair.
pub const MASKED: f64 = -1e9;

impl<T: Float> Graph<T> {
    /// Scaled dot-product attention per head:
    /// `softmax(q k^T / sqrt(d) + bias + mask) v`.
    ///
    /// `q, k, v: [B, H, T, d]`. `bias: [H, T, T]` is learnable and shared by all
    /// batch entries. `mask: [M, T, T]` is a constant additive mask where batch
    /// entry `b` uses `mask[b % M]`; window layouts put the window index last so
    /// `M` equals the window count.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        bias: Option<Var>,
        mask: Option<&Tensor<T>>,
    ) -> Result<Var> {
        let qs = self.shape(q).to_vec();
        if qs.len() != 4 || self.shape(k) != qs.as_slice() || self.shape(v) != qs.as_slice() {
            return Err(shape_err(
                "attention",
                format!("q {qs:?}, k {:?}, v {:?}", self.shape(k), self.shape(v)),
            ));
        }
        let (batch, heads, t, d) = (qs[0], qs[1], qs[2], qs[3]);
        if let Some(b) = bias {
            if self.shape(b) != [heads, t, t] {
                return Err(shape_err("attention", format!("bias {:?}", self.shape(b))));
            }
        }
        let mask_groups = match mask {
            Some(m) => {
                let ms = m.shape();
                if ms.len() != 3 || ms[1] != t || ms[2] != t || ms[0] == 0 || batch % ms[0] != 0 {
                    return Err(shape_err("attention", format!("mask {ms:?} for batch {batch}, T {t}")));
                }
                ms[0]
            }
            None => 1,
        };
        let mask_data: Option<Vec<T>> = mask.map(|m| m.data().to_vec());
        let scale = T::one() / T::from_usize(d).unwrap().sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let bd = bias.map(|b| self.value(b).data());
        let tt = t * t;
        let mut probs = vec![T::zero(); batch * heads * tt];
        let mut out = vec![T::zero(); batch * heads * t * d];
        for b in 0..batch {
            for h in 0..heads {
                let base = (b * heads + h) * t * d;
                let p = &mut probs[(b * heads + h) * tt..(b * heads + h + 1) * tt];
                for i in 0..t {
                    let qi = &qd[base + i * d..base + (i + 1) * d];
                    for j in 0..t {
                        let kj = &kd[base + j * d..base + (j + 1) * d];
                        let mut s = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<T>() * scale;
                        if let Some(bd) = bd {
                            s += bd[h * tt + i * t + j];
                        }
                        if let Some(md) = &mask_data {
                            s += md[(b % mask_groups) * tt + i * t + j];
                        }
                        p[i * t + j] = s;
                    }
                    softmax_in_place(&mut p[i * t..(i + 1) * t]);
                    let o = &mut out[base + i * d..base + (i + 1) * d];
                    for j in 0..t {
                        let pij = p[i * t + j];
                        for (oc, &vc) in o.iter_mut().zip(&vd[base + j * d..base + (j + 1) * d]) {
                            *oc += pij * vc;
                        }
                    }
                }
            }
        }
        let value = Tensor::new(&qs, out)?;
        let mut inputs = vec![q, k, v];
        inputs.extend(bias);
        let has_bias = bias.is_some();
        self.push("attention", value, &inputs, move |a| {
            let (qd, kd, vd, g) = (a.inputs[0].data(), a.inputs[1].data(), a.inputs[2].data(), a.grad.data());
            let mut dq = vec![T::zero(); qd.len()];
            let mut dk = vec![T::zero(); kd.len()];
            let mut dv = vec![T::zero(); vd.len()];
            let mut dbias = vec![T::zero(); if has_bias { heads * tt } else { 0 }];
            let mut ds = vec![T::zero(); tt];
            for b in 0..batch {
                for h in 0..heads {
                    let base = (b * heads + h) * t * d;
                    let p = &probs[(b * heads + h) * tt..(b * heads + h + 1) * tt];
                    for i in 0..t {
                        let gi = &g[base + i * d..base + (i + 1) * d];
                        // dP_ij = g_i . v_j ; dS = P * (dP - rowsum(P * dP))
                        let mut row_dot = T::zero();
                        for j in 0..t {
                            let vj = &vd[base + j * d..base + (j + 1) * d];
                            let dp = gi.iter().zip(vj).map(|(&x, &y)| x * y).sum::<T>();
                            ds[i * t + j] = dp;
                            row_dot += dp * p[i * t + j];
                            let pij = p[i * t + j];
                            for (dvc, &gc) in dv[base + j * d..base + (j + 1) * d].iter_mut().zip(gi) {
                                *dvc += pij * gc;
                            }
                        }
                        for j in 0..t {
                            ds[i * t + j] = p[i * t + j] * (ds[i * t + j] - row_dot);
                        }
                    }
                    if has_bias {
                        for (acc, &s) in dbias[h * tt..(h + 1) * tt].iter_mut().zip(&ds) {
                            *acc += s;
                        }
                    }
                    for i in 0..t {
                        for j in 0..t {
                            let s = ds[i * t + j] * scale;
                            if s == T::zero() {
                                continue;
                            }
                            for c in 0..d {
                                dq[base + i * d + c] += s * kd[base + j * d + c];
                                dk[base + j * d + c] += s * qd[base + i * d + c];
                            }
                        }
                    }
                }
            }
            let mut grads = vec![
                Some(Tensor::new(&qs, dq).expect("dq")),
                Some(Tensor::new(&qs, dk).expect("dk")),
                Some(Tensor::new(&qs, dv).expect("dv")),
            ];
            if has_bias {
                grads.push(Some(Tensor::new(&[heads, t, t], dbias).expect("dbias")));
            }
            grads
        })
    }
}
