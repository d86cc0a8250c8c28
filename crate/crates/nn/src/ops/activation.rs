use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Float;
use crate::tensor::Tensor;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gelu_f64(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad_f64(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
        + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

impl<T: Float> Graph<T> {
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.push("relu", value, &[x], |a| {
            let dx = a
                .inputs[0]
                .data()
                .iter()
                .zip(a.grad.data())
                .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
                .collect();
            vec![Some(Tensor::new(a.grad.shape(), dx).expect("relu grad"))]
        })
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| T::from_f64_lossy(gelu_f64(v.as_f64())));
        self.push("gelu", value, &[x], |a| {
            let dx = a
                .inputs[0]
                .data()
                .iter()
                .zip(a.grad.data())
                .map(|(&x, &g)| g * T::from_f64_lossy(gelu_grad_f64(x.as_f64())))
                .collect();
            vec![Some(Tensor::new(a.grad.shape(), dx).expect("gelu grad"))]
        })
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let d = *xs.last().ok_or_else(|| shape_err("softmax", "rank 0 input"))?;
        if d == 0 {
            return Err(shape_err("softmax", "empty last axis"));
        }
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(d) {
            softmax_in_place(row);
        }
        let value = Tensor::new(&xs, out)?;
        self.push("softmax", value, &[x], move |a| {
            let (y, g) = (a.output.data(), a.grad.data());
            let mut dx = vec![T::zero(); y.len()];
            for ((dxr, yr), gr) in dx.chunks_mut(d).zip(y.chunks(d)).zip(g.chunks(d)) {
                let s: T = yr.iter().zip(gr).map(|(&y, &g)| y * g).sum();
                for j in 0..d {
                    dxr[j] = yr[j] * (gr[j] - s);
                }
            }
            vec![Some(Tensor::new(a.grad.shape(), dx).expect("softmax grad"))]
        })
    }
}

/// Numerically stable softmax of one row.
pub fn softmax_in_place<T: Float>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}
