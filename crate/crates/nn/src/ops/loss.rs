use crate::error::{shape_err, NnError, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Float;
use crate::tensor::Tensor;

impl<T: Float> Graph<T> {
    /// Mean squared error `(1/n) * sum (x_i - y_i)^2`. With a mask, the sum and
    /// `n` range over selected elements only (`mask.len()` must equal the
    /// element count). An all-false mask yields zero.
    pub fn mse_loss(&mut self, pred: Var, target: Var, mask: Option<&[bool]>) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(shape_err("mse_loss", format!("{:?} vs {:?}", self.shape(pred), self.shape(target))));
        }
        let len = self.value(pred).len();
        if let Some(m) = mask {
            if m.len() != len {
                return Err(shape_err("mse_loss", format!("mask of {} for {len} values", m.len())));
            }
        }
        let weights: Vec<bool> = mask.map(|m| m.to_vec()).unwrap_or_else(|| vec![true; len]);
        let count = weights.iter().filter(|&&w| w).count();
        let (p, y) = (self.value(pred).data(), self.value(target).data());
        let mut sum = T::zero();
        for i in 0..len {
            if weights[i] {
                let e = p[i] - y[i];
                sum += e * e;
            }
        }
        let inv_n = if count == 0 { T::zero() } else { T::one() / T::from_usize(count).unwrap() };
        let value = Tensor::scalar(sum * inv_n);
        self.push("mse_loss", value, &[pred, target], move |a| {
            let (p, y) = (a.inputs[0].data(), a.inputs[1].data());
            let k = a.grad.item() * (T::one() + T::one()) * inv_n;
            let mut dp = vec![T::zero(); p.len()];
            for i in 0..p.len() {
                if weights[i] {
                    dp[i] = k * (p[i] - y[i]);
                }
            }
            let dy = dp.iter().map(|&v| -v).collect();
            vec![
                Some(Tensor::new(a.inputs[0].shape(), dp).expect("dpred")),
                Some(Tensor::new(a.inputs[0].shape(), dy).expect("dtarget")),
            ]
        })
    }

    /// Batch mean of `-log softmax(logits)[y]`. `logits: [B, C]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let ls = self.shape(logits).to_vec();
        if ls.len() != 2 || ls[0] != labels.len() || ls[0] == 0 || ls[1] < 2 {
            return Err(shape_err("cross_entropy", format!("logits {ls:?}, {} labels", labels.len())));
        }
        let (batch, classes) = (ls[0], ls[1]);
        if let Some(&class) = labels.iter().find(|&&y| y >= classes) {
            return Err(NnError::ClassOutOfRange { class, classes });
        }
        let ld = self.value(logits).data();
        let mut probs = vec![T::zero(); batch * classes];
        let mut total = T::zero();
        for b in 0..batch {
            let row = &ld[b * classes..(b + 1) * classes];
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - m).exp()).sum::<T>().ln() + m;
            total += lse - row[labels[b]];
            for c in 0..classes {
                probs[b * classes + c] = (row[c] - lse).exp();
            }
        }
        let inv_b = T::one() / T::from_usize(batch).unwrap();
        let labels = labels.to_vec();
        self.push("cross_entropy", Tensor::scalar(total * inv_b), &[logits], move |a| {
            let k = a.grad.item() * inv_b;
            let mut d = probs.clone();
            for b in 0..batch {
                d[b * classes + labels[b]] -= T::one();
            }
            d.iter_mut().for_each(|v| *v *= k);
            vec![Some(Tensor::new(&[batch, classes], d).expect("dlogits"))]
        })
    }
}
