use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::scalar::{matmul, Float, MatRef};
use crate::tensor::Tensor;

impl<T: Float> Graph<T> {
    /// `y = x W^T + b` over the last axis. `x: [..., in]`, `weight: [out, in]`,
    /// `bias: [out]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(weight).to_vec();
        if xs.is_empty() || ws.len() != 2 || *xs.last().unwrap() != ws[1] {
            return Err(shape_err("linear", format!("x {xs:?}, weight {ws:?}")));
        }
        let (d_out, d_in) = (ws[0], ws[1]);
        if let Some(b) = bias {
            if self.shape(b) != [d_out] {
                return Err(shape_err("linear", format!("bias {:?} for {d_out} outputs", self.shape(b))));
            }
        }
        let rows = self.value(x).len() / d_in.max(1);
        let mut out = vec![T::zero(); rows * d_out];
        matmul(
            MatRef::new(self.value(x).data(), rows, d_in),
            MatRef::new(self.value(weight).data(), d_out, d_in).t(),
            &mut out,
            false,
        );
        if let Some(b) = bias {
            let bd = self.value(b).data();
            for row in out.chunks_mut(d_out) {
                for (o, &bv) in row.iter_mut().zip(bd) {
                    *o += bv;
                }
            }
        }
        let mut out_shape = xs.clone();
        *out_shape.last_mut().unwrap() = d_out;
        let value = Tensor::new(&out_shape, out)?;
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        let has_bias = bias.is_some();
        self.push("linear", value, &inputs, move |a| {
            let (xd, wd, g) = (a.inputs[0].data(), a.inputs[1].data(), a.grad.data());
            let mut dx = vec![T::zero(); rows * d_in];
            matmul(MatRef::new(g, rows, d_out), MatRef::new(wd, d_out, d_in), &mut dx, false);
            let mut dw = vec![T::zero(); d_out * d_in];
            matmul(MatRef::new(g, rows, d_out).t(), MatRef::new(xd, rows, d_in), &mut dw, false);
            let mut grads = vec![
                Some(Tensor::new(&xs, dx).expect("dx")),
                Some(Tensor::new(&[d_out, d_in], dw).expect("dw")),
            ];
            if has_bias {
                let mut db = vec![T::zero(); d_out];
                for row in g.chunks(d_out) {
                    for (acc, &v) in db.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                grads.push(Some(Tensor::new(&[d_out], db).expect("db")));
            }
            grads
        })
    }
}
