use alloc::vec;
use alloc::vec::Vec;

use super::Op;
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};
use crate::math;
use crate::tensor::Tensor;

/// Norms at or below this are treated as zero vectors.
pub const L2_EPS: f64 = 1e-8;
/// Rows whose standard deviation is at or below this are treated as constant.
pub const STD_EPS: f64 = 1e-8;

fn split_first(op: &'static str, shape: &[usize]) -> Result<(usize, usize)> {
    match shape.split_first() {
        Some((&c, rest)) if c > 0 => Ok((c, rest.iter().product())),
        _ => Err(shape_err(op, "expected a leading channel axis")),
    }
}

impl Graph {
    /// Scales every vector along axis 0 to unit Euclidean norm; zero vectors stay zero.
    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let (c, p) = split_first("l2_normalize", self.shape(x))?;
        let src = self.value(x).data();
        let mut norms = vec![0.0; p];
        for ch in 0..c {
            for (n, v) in norms.iter_mut().zip(&src[ch * p..(ch + 1) * p]) {
                *n += v * v;
            }
        }
        norms.iter_mut().for_each(|n| *n = math::sqrt(*n));
        let mut out = src.to_vec();
        for ch in 0..c {
            for (o, n) in out[ch * p..(ch + 1) * p].iter_mut().zip(&norms) {
                *o /= n.max(L2_EPS);
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(value, Op::L2Normalize { input: x, norms }))
    }

    /// Shifts and scales each row (axis 0 slice) to zero mean and unit
    /// population variance. Rows with standard deviation at or below
    /// [`STD_EPS`] map to zeros and pass no gradient.
    pub fn standardize_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, n) = split_first("standardize_rows", self.shape(x))?;
        if n < 2 {
            return Err(shape_err("standardize_rows", "need at least two samples per row"));
        }
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        let mut sigma = vec![0.0; rows];
        for r in 0..rows {
            let row = &src[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let sd = math::sqrt(var);
            sigma[r] = sd;
            if sd > STD_EPS {
                for (o, v) in out[r * n..(r + 1) * n].iter_mut().zip(row) {
                    *o = (v - mean) / sd;
                }
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(value, Op::StandardizeRows { input: x, sigma }))
    }

    /// Softmax across axis 0 at every remaining position.
    pub fn softmax_channels(&mut self, x: Var) -> Result<Var> {
        let (c, p) = split_first("softmax_channels", self.shape(x))?;
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for j in 0..p {
            let mx = (0..c).map(|ch| src[ch * p + j]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for ch in 0..c {
                let e = math::exp(src[ch * p + j] - mx);
                out[ch * p + j] = e;
                z += e;
            }
            for ch in 0..c {
                out[ch * p + j] /= z;
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(value, Op::Softmax { input: x }))
    }
}

pub(super) fn l2_backward(input: Var, out: &Tensor, norms: &[f64], grad: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let p = norms.len();
    let c = out.numel() / p;
    let y = out.data();
    let mut dot = vec![0.0; p];
    for ch in 0..c {
        for j in 0..p {
            dot[j] += y[ch * p + j] * grad[ch * p + j];
        }
    }
    let mut dx = vec![0.0; out.numel()];
    for ch in 0..c {
        for j in 0..p {
            let i = ch * p + j;
            dx[i] = if norms[j] > L2_EPS {
                (grad[i] - y[i] * dot[j]) / norms[j]
            } else {
                grad[i] / L2_EPS
            };
        }
    }
    vec![(input, dx)]
}

pub(super) fn standardize_backward(g: &Graph, input: Var, sigma: &[f64], grad: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let src = g.value(input).data();
    let rows = sigma.len();
    let n = src.len() / rows;
    let mut dx = vec![0.0; src.len()];
    for r in 0..rows {
        let row = &src[r * n..(r + 1) * n];
        let gr = &grad[r * n..(r + 1) * n];
        let s = sigma[r];
        if s <= STD_EPS {
            continue;
        }
        let mean = row.iter().sum::<f64>() / n as f64;
        let gmean = gr.iter().sum::<f64>() / n as f64;
        let gx: f64 = gr.iter().zip(row).map(|(g, v)| g * (v - mean)).sum();
        let coupling = gx / (n as f64 * s * s * s);
        for ((d, &gv), &v) in dx[r * n..(r + 1) * n].iter_mut().zip(gr).zip(row) {
            *d = (gv - gmean) / s - coupling * (v - mean);
        }
    }
    vec![(input, dx)]
}

pub(super) fn softmax_backward(input: Var, out: &Tensor, grad: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let c = out.shape()[0];
    let p = out.numel() / c;
    let y = out.data();
    let mut dx = vec![0.0; y.len()];
    for j in 0..p {
        let dot: f64 = (0..c).map(|ch| y[ch * p + j] * grad[ch * p + j]).sum();
        for ch in 0..c {
            let i = ch * p + j;
            dx[i] = y[i] * (grad[i] - dot);
        }
    }
    vec![(input, dx)]
}
