use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Float;
use crate::tensor::Tensor;

impl<T: Float> Graph<T> {
    /// Max pooling with kernel 2 and stride 2 over the last axis of `[B, C, L]`.
    /// A trailing odd element is dropped; ties pick the first position.
    pub fn max_pool1d(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || xs[2] < 2 {
            return Err(shape_err("max_pool1d", format!("x {xs:?}")));
        }
        let (rows, len) = (xs[0] * xs[1], xs[2]);
        let half = len / 2;
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(rows * half);
        let mut arg = Vec::with_capacity(rows * half);
        for r in 0..rows {
            for t in 0..half {
                let i = r * len + 2 * t;
                let pick = if xd[i + 1] > xd[i] { i + 1 } else { i };
                out.push(xd[pick]);
                arg.push(pick);
            }
        }
        let value = Tensor::new(&[xs[0], xs[1], half], out)?;
        self.push("max_pool1d", value, &[x], move |a| {
            let mut dx = vec![T::zero(); rows * len];
            for (&src, &g) in arg.iter().zip(a.grad.data()) {
                dx[src] += g;
            }
            vec![Some(Tensor::new(&xs, dx).expect("pool grad"))]
        })
    }
}
