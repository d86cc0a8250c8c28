//! Finite-difference verification of reverse-mode gradients (64-bit).

use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-3;

/// Fraction of an input's largest numeric gradient used as the relative-error
/// floor, so near-zero entries are judged against the tensor's gradient scale.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

impl GradCheckReport {
    fn merge(self, o: Self) -> Self {
        GradCheckReport {
            max_rel_error: self.max_rel_error.max(o.max_rel_error),
            max_abs_error: self.max_abs_error.max(o.max_abs_error),
            checked: self.checked + o.checked,
        }
    }
}

fn eval_scalar<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::inference();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let v = g.value(out);
    if v.len() != 1 {
        return Err(shape_err("grad_check", format!("function output has shape {:?}", v.shape())));
    }
    Ok(v.item())
}

/// Compare the reverse-mode gradient of scalar `f` with respect to every input
/// against central differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
///
/// Per element the relative error is `|a - n| / max(|a|, |n|, REL_FLOOR * max_j |n_j|)`.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor<f64>], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if g.value(out).len() != 1 {
        return Err(shape_err("grad_check", format!("function output has shape {:?}", g.value(out).shape())));
    }
    let grads = g.backward(out);

    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        let mut numeric = vec![0.0; inputs[k].len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let x0 = inputs[k].data()[i];
            work[k].data_mut()[i] = x0 + h;
            let fp = eval_scalar(&f, &work)?;
            work[k].data_mut()[i] = x0 - h;
            let fm = eval_scalar(&f, &work)?;
            work[k].data_mut()[i] = x0;
            *slot = (fp - fm) / (2.0 * h);
        }
        let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = (REL_FLOOR * scale).max(f64::MIN_POSITIVE);
        let mut r = GradCheckReport {
            checked: numeric.len(),
            ..Default::default()
        };
        for (&a, &n) in analytic.data().iter().zip(&numeric) {
            let abs = (a - n).abs();
            r.max_abs_error = r.max_abs_error.max(abs);
            r.max_rel_error = r.max_rel_error.max(abs / a.abs().max(n.abs()).max(floor));
        }
        report = report.merge(r);
    }
    Ok(report)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    grad_check_many(|g, vs| f(g, vs[0]), std::slice::from_ref(x), h)
}
