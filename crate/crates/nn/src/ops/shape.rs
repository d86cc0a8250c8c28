use std::sync::Arc;

use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Float;
use crate::tensor::Tensor;

impl<T: Float> Graph<T> {
    /// `out[i] = x[index[i]]` (flat indices), shaped as `shape`. Covers every
    /// permutation, roll and window layout change the networks need.
    pub fn gather(&mut self, x: Var, index: Arc<[usize]>, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        let src_len = self.value(x).len();
        if n != index.len() || index.iter().any(|&i| i >= src_len) {
            return Err(shape_err("gather", format!("{} indices for shape {shape:?} from {src_len} values", index.len())));
        }
        let xd = self.value(x).data();
        let out: Vec<T> = index.iter().map(|&i| xd[i]).collect();
        let value = Tensor::new(shape, out)?;
        let src_shape = self.shape(x).to_vec();
        self.push("gather", value, &[x], move |a| {
            let mut dx = vec![T::zero(); src_len];
            for (&i, &g) in index.iter().zip(a.grad.data()) {
                dx[i] += g;
            }
            vec![Some(Tensor::new(&src_shape, dx).expect("gather grad"))]
        })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let src_shape = self.shape(x).to_vec();
        let value = self.value(x).clone().reshape(shape)?;
        self.push("reshape", value, &[x], move |a| {
            vec![Some(a.grad.clone().reshape(&src_shape).expect("reshape grad"))]
        })
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*xs.first().ok_or_else(|| shape_err("concat", "no inputs"))?)
            .to_vec();
        if axis >= first.len() {
            return Err(shape_err("concat", format!("axis {axis} for rank {}", first.len())));
        }
        let mut extents = Vec::with_capacity(xs.len());
        for &v in xs {
            let s = self.shape(v);
            if s.len() != first.len()
                || s.iter().zip(&first).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(shape_err("concat", format!("{s:?} vs {first:?} on axis {axis}")));
            }
            extents.push(s[axis]);
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let total: usize = extents.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&v, &e) in xs.iter().zip(&extents) {
                let d = self.value(v).data();
                out.extend_from_slice(&d[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let value = Tensor::new(&shape, out)?;
        self.push("concat", value, xs, move |a| {
            let g = a.grad.data();
            let mut parts: Vec<Vec<T>> = extents.iter().map(|&e| Vec::with_capacity(outer * e * inner)).collect();
            let mut off = 0;
            for _ in 0..outer {
                for (p, &e) in parts.iter_mut().zip(&extents) {
                    p.extend_from_slice(&g[off..off + e * inner]);
                    off += e * inner;
                }
            }
            parts
                .into_iter()
                .zip(a.inputs.iter())
                .map(|(p, x)| Some(Tensor::new(x.shape(), p).expect("concat grad")))
                .collect()
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", format!("{:?} + {:?}", self.shape(a), self.shape(b))));
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push("add", value, &[a, b], |a| vec![Some(a.grad.clone()), Some(a.grad.clone())])
    }

    /// Mean over one axis (the axis is removed).
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() || xs[axis] == 0 {
            return Err(shape_err("mean_axis", format!("axis {axis} of {xs:?}")));
        }
        let outer: usize = xs[..axis].iter().product();
        let inner: usize = xs[axis + 1..].iter().product();
        let n = xs[axis];
        let scale = T::one() / T::from_usize(n).unwrap();
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let src = &xd[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += v;
                }
            }
        }
        out.iter_mut().for_each(|v| *v *= scale);
        let mut shape = xs.clone();
        shape.remove(axis);
        let value = Tensor::new(&shape, out)?;
        self.push("mean_axis", value, &[x], move |a| {
            let g = a.grad.data();
            let mut dx = vec![T::zero(); outer * n * inner];
            for o in 0..outer {
                for k in 0..n {
                    let dst = &mut dx[(o * n + k) * inner..(o * n + k + 1) * inner];
                    for (d, &v) in dst.iter_mut().zip(&g[o * inner..(o + 1) * inner]) {
                        *d = v * scale;
                    }
                }
            }
            vec![Some(Tensor::new(&xs, dx).expect("mean grad"))]
        })
    }
}
