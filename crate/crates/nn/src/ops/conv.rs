use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::scalar::{matmul, Float, MatRef};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    batch: usize,
    c_in: usize,
    c_out: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    len_out: usize,
}

/// `col[(ci*K + k), t] = x[ci, t*stride + k - padding]` (zero outside).
fn im2col<T: Float>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    for ci in 0..g.c_in {
        let xrow = &x[ci * g.len..(ci + 1) * g.len];
        for k in 0..g.kernel {
            let crow = &mut col[(ci * g.kernel + k) * g.len_out..(ci * g.kernel + k + 1) * g.len_out];
            for (t, c) in crow.iter_mut().enumerate() {
                let pos = (t * g.stride + k) as isize - g.padding as isize;
                *c = if pos >= 0 && (pos as usize) < g.len {
                    xrow[pos as usize]
                } else {
                    T::zero()
                };
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into `x`.
fn col2im<T: Float>(col: &[T], g: &ConvGeom, x: &mut [T]) {
    for ci in 0..g.c_in {
        let xrow = &mut x[ci * g.len..(ci + 1) * g.len];
        for k in 0..g.kernel {
            let crow = &col[(ci * g.kernel + k) * g.len_out..(ci * g.kernel + k + 1) * g.len_out];
            for (t, &c) in crow.iter().enumerate() {
                let pos = (t * g.stride + k) as isize - g.padding as isize;
                if pos >= 0 && (pos as usize) < g.len {
                    xrow[pos as usize] += c;
                }
            }
        }
    }
}

fn bias_shape_ok<T: Float>(graph: &Graph<T>, bias: Option<Var>, c_out: usize) -> Result<()> {
    if let Some(b) = bias {
        if graph.shape(b) != [c_out] {
            return Err(shape_err(
                "conv bias",
                format!("expected [{c_out}], got {:?}", graph.shape(b)),
            ));
        }
    }
    Ok(())
}

fn bias_grad<T: Float>(grad: &[T], batch: usize, c: usize, len: usize) -> Tensor<T> {
    let mut db = vec![T::zero(); c];
    for b in 0..batch {
        for (co, acc) in db.iter_mut().enumerate() {
            let off = (b * c + co) * len;
            *acc += grad[off..off + len].iter().copied().sum::<T>();
        }
    }
    Tensor::new(&[c], db).expect("bias grad shape")
}

impl<T: Float> Graph<T> {
    /// 1-D cross-correlation. `x: [B, C_in, L]`, `weight: [C_out, C_in, K]`,
    /// `bias: [C_out]`; output length `(L + 2*padding - K) / stride + 1`.
    pub fn conv1d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(weight).to_vec());
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] || stride == 0 {
            return Err(shape_err("conv1d", format!("x {xs:?}, weight {ws:?}, stride {stride}")));
        }
        let (batch, c_in, len) = (xs[0], xs[1], xs[2]);
        let (c_out, kernel) = (ws[0], ws[2]);
        if kernel == 0 || kernel > len + 2 * padding {
            return Err(shape_err("conv1d", format!("kernel {kernel} exceeds padded length {}", len + 2 * padding)));
        }
        bias_shape_ok(self, bias, c_out)?;
        let g = ConvGeom {
            batch,
            c_in,
            c_out,
            len,
            kernel,
            stride,
            padding,
            len_out: (len + 2 * padding - kernel) / stride + 1,
        };
        let ck = c_in * kernel;
        let mut out = vec![T::zero(); batch * c_out * g.len_out];
        let mut col = vec![T::zero(); ck * g.len_out];
        {
            let xd = self.value(x).data();
            let wd = self.value(weight).data();
            let bd = bias.map(|b| self.value(b).data());
            for b in 0..batch {
                im2col(&xd[b * c_in * len..(b + 1) * c_in * len], &g, &mut col);
                let o = &mut out[b * c_out * g.len_out..(b + 1) * c_out * g.len_out];
                matmul(MatRef::new(wd, c_out, ck), MatRef::new(&col, ck, g.len_out), o, false);
                if let Some(bd) = bd {
                    for co in 0..c_out {
                        let bv = bd[co];
                        o[co * g.len_out..(co + 1) * g.len_out].iter_mut().for_each(|v| *v += bv);
                    }
                }
            }
        }
        let value = Tensor::new(&[batch, c_out, g.len_out], out)?;
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        let has_bias = bias.is_some();
        self.push("conv1d", value, &inputs, move |a| {
            let (xd, wd, gd) = (a.inputs[0].data(), a.inputs[1].data(), a.grad.data());
            let mut dx = vec![T::zero(); g.batch * g.c_in * g.len];
            let mut dw = vec![T::zero(); g.c_out * ck];
            let mut col = vec![T::zero(); ck * g.len_out];
            let mut dcol = vec![T::zero(); ck * g.len_out];
            for b in 0..g.batch {
                let gb = &gd[b * g.c_out * g.len_out..(b + 1) * g.c_out * g.len_out];
                im2col(&xd[b * g.c_in * g.len..(b + 1) * g.c_in * g.len], &g, &mut col);
                matmul(MatRef::new(gb, g.c_out, g.len_out), MatRef::new(&col, ck, g.len_out).t(), &mut dw, true);
                matmul(MatRef::new(wd, g.c_out, ck).t(), MatRef::new(gb, g.c_out, g.len_out), &mut dcol, false);
                col2im(&dcol, &g, &mut dx[b * g.c_in * g.len..(b + 1) * g.c_in * g.len]);
            }
            let mut grads = vec![
                Some(Tensor::new(&[g.batch, g.c_in, g.len], dx).expect("dx")),
                Some(Tensor::new(&[g.c_out, g.c_in, g.kernel], dw).expect("dw")),
            ];
            if has_bias {
                grads.push(Some(bias_grad(gd, g.batch, g.c_out, g.len_out)));
            }
            grads
        })
    }

    /// Transposed 1-D convolution (up-convolution), the adjoint of
    /// [`Graph::conv1d`] with zero padding. `x: [B, C_in, L]`,
    /// `weight: [C_in, C_out, K]`; output length `(L - 1) * stride + K`.
    pub fn conv1d_transposed(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
    ) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(weight).to_vec());
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[0] || stride == 0 || ws[2] == 0 || xs[2] == 0 {
            return Err(shape_err(
                "conv1d_transposed",
                format!("x {xs:?}, weight {ws:?}, stride {stride}"),
            ));
        }
        let (batch, c_in, len) = (xs[0], xs[1], xs[2]);
        let (c_out, kernel) = (ws[1], ws[2]);
        bias_shape_ok(self, bias, c_out)?;
        let len_out = (len - 1) * stride + kernel;
        // Geometry of the forward conv this op is the adjoint of (channels swapped).
        let g = ConvGeom {
            batch,
            c_in: c_out,
            c_out: c_in,
            len: len_out,
            kernel,
            stride,
            padding: 0,
            len_out: len,
        };
        let ok = c_out * kernel;
        let mut out = vec![T::zero(); batch * c_out * len_out];
        let mut col = vec![T::zero(); ok * len];
        {
            let xd = self.value(x).data();
            let wd = self.value(weight).data();
            for b in 0..batch {
                matmul(
                    MatRef::new(wd, c_in, ok).t(),
                    MatRef::new(&xd[b * c_in * len..(b + 1) * c_in * len], c_in, len),
                    &mut col,
                    false,
                );
                col2im(&col, &g, &mut out[b * c_out * len_out..(b + 1) * c_out * len_out]);
            }
            if let Some(bv) = bias {
                let bd = self.value(bv).data();
                for b in 0..batch {
                    for co in 0..c_out {
                        let off = (b * c_out + co) * len_out;
                        out[off..off + len_out].iter_mut().for_each(|v| *v += bd[co]);
                    }
                }
            }
        }
        let value = Tensor::new(&[batch, c_out, len_out], out)?;
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        let has_bias = bias.is_some();
        self.push("conv1d_transposed", value, &inputs, move |a| {
            let (xd, wd, gd) = (a.inputs[0].data(), a.inputs[1].data(), a.grad.data());
            let mut dx = vec![T::zero(); batch * c_in * len];
            let mut dw = vec![T::zero(); c_in * ok];
            let mut dcol = vec![T::zero(); ok * len];
            for b in 0..batch {
                im2col(&gd[b * c_out * len_out..(b + 1) * c_out * len_out], &g, &mut dcol);
                let xb = &xd[b * c_in * len..(b + 1) * c_in * len];
                matmul(MatRef::new(wd, c_in, ok), MatRef::new(&dcol, ok, len), &mut dx[b * c_in * len..(b + 1) * c_in * len], false);
                matmul(MatRef::new(xb, c_in, len), MatRef::new(&dcol, ok, len).t(), &mut dw, true);
            }
            let mut grads = vec![
                Some(Tensor::new(&[batch, c_in, len], dx).expect("dx")),
                Some(Tensor::new(&[c_in, c_out, kernel], dw).expect("dw")),
            ];
            if has_bias {
                grads.push(Some(bias_grad(gd, batch, c_out, len_out)));
            }
            grads
        })
    }
}
