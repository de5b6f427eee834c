//! Central finite-difference check of analytic gradients.

use alloc::vec::Vec;

use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Outcome of [`grad_check`]: the worst coordinate over all inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub input: usize,
    pub coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
}

fn evaluate<F>(f: &F, point: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = point.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let v = g.value(out);
    if v.numel() != 1 {
        return Err(Error::NotScalar(v.shape().to_vec()));
    }
    Ok(v.item())
}

/// Compares the analytic gradient of the scalar function `f` at `point`
/// against `(f(x+h) - f(x-h)) / 2h` per coordinate, with
/// `h = step * max(1, |x|)`. The relative error of a coordinate is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(f: F, point: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = point.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| g.grad_tensor(v)).collect();
    drop(g);

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        input: 0,
        coordinate: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe: Vec<Tensor> = point.to_vec();
    for (i, t) in point.iter().enumerate() {
        for j in 0..t.numel() {
            let x = t.data()[j];
            let h = step * x.abs().max(1.0);
            probe[i].data_mut()[j] = x + h;
            let fp = evaluate(&f, &probe)?;
            probe[i].data_mut()[j] = x - h;
            let fm = evaluate(&f, &probe)?;
            probe[i].data_mut()[j] = x;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[i].data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if err > report.max_relative_error || !err.is_finite() {
                report = GradCheckReport { max_relative_error: err, input: i, coordinate: j, analytic: a, numeric };
            }
        }
    }
    Ok(report)
}
