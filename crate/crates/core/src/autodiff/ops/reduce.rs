use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Op;
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
    /// Gradient goes to the first maximal element in row-major order.
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchReduction {
    Sum,
    Max,
}

/// Maps every input element to its reduced output slot.
fn output_slots(shape: &[usize], reduced: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let out_shape: Vec<usize> = shape
        .iter()
        .zip(reduced)
        .filter(|(_, &r)| !r)
        .map(|(&n, _)| n)
        .collect();
    let n: usize = shape.iter().product();
    let mut slots = Vec::with_capacity(n);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..n {
        let mut slot = 0;
        for (d, &i) in idx.iter().enumerate() {
            if !reduced[d] {
                slot = slot * shape[d] + i;
            }
        }
        slots.push(slot);
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    (out_shape, slots)
}

impl Graph {
    /// Reduces over `axes`; an empty axis list reduces over everything.
    /// Reduced axes are removed from the output shape.
    pub fn reduce(&mut self, x: Var, kind: Reduction, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut reduced = vec![axes.is_empty(); shape.len()];
        for &a in axes {
            if a >= shape.len() {
                return Err(shape_err("reduce", format!("axis {a} out of range for {shape:?}")));
            }
            reduced[a] = true;
        }
        let (out_shape, slots) = output_slots(&shape, &reduced);
        let m: usize = out_shape.iter().product();
        let data = self.value(x).data();
        let group = data.len().checked_div(m).unwrap_or(0);
        let mut out = vec![0.0; m];
        let mut argmax = Vec::new();
        match kind {
            Reduction::Sum | Reduction::Mean => {
                for (&s, &v) in slots.iter().zip(data) {
                    out[s] += v;
                }
                if kind == Reduction::Mean && group > 0 {
                    out.iter_mut().for_each(|v| *v /= group as f64);
                }
            }
            Reduction::Max => {
                argmax = vec![usize::MAX; m];
                for (i, (&s, &v)) in slots.iter().zip(data).enumerate() {
                    if argmax[s] == usize::MAX || v > out[s] {
                        out[s] = v;
                        argmax[s] = i;
                    }
                }
            }
        }
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::Reduce { input: x, kind, slots, group, argmax }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        self.reduce(x, Reduction::Sum, &[]).expect("full reduction")
    }

    pub fn mean(&mut self, x: Var) -> Var {
        self.reduce(x, Reduction::Mean, &[]).expect("full reduction")
    }

    /// Reduces non-overlapping `size x size` tiles of `x` `[C,H,W]` into
    /// `[C, H/size, W/size]`; trailing partial tiles are dropped.
    pub fn patch_reduce(&mut self, x: Var, size: usize, kind: PatchReduction) -> Result<Var> {
        let (c, h, w) = match *self.shape(x) {
            [c, h, w] => (c, h, w),
            ref s => return Err(shape_err("patch_reduce", format!("expected [C,H,W], got {s:?}"))),
        };
        if size == 0 || size > h || size > w {
            return Err(shape_err("patch_reduce", format!("patch {size} does not fit {h}x{w}")));
        }
        let (ph, pw) = (h / size, w / size);
        let data = self.value(x).data();
        let mut out = vec![0.0; c * ph * pw];
        let mut argmax = Vec::new();
        if kind == PatchReduction::Max {
            argmax = vec![0; out.len()];
        }
        for ch in 0..c {
            for py in 0..ph {
                for px in 0..pw {
                    let o = (ch * ph + py) * pw + px;
                    let mut acc = 0.0;
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0;
                    for dy in 0..size {
                        let row = (ch * h + py * size + dy) * w + px * size;
                        for (dx, &v) in data[row..row + size].iter().enumerate() {
                            acc += v;
                            if v > best {
                                best = v;
                                best_i = row + dx;
                            }
                        }
                    }
                    match kind {
                        PatchReduction::Sum => out[o] = acc,
                        PatchReduction::Max => {
                            out[o] = best;
                            argmax[o] = best_i;
                        }
                    }
                }
            }
        }
        let value = Tensor::new([c, ph, pw], out)?;
        Ok(self.push(value, Op::PatchReduce { input: x, size, kind, argmax }))
    }
}

pub(super) fn reduce_backward(
    g: &Graph,
    input: Var,
    kind: Reduction,
    slots: &[usize],
    group: usize,
    argmax: &[usize],
    grad: &[f64],
) -> Vec<(Var, Vec<f64>)> {
    let n = g.value(input).numel();
    let dx = match kind {
        Reduction::Sum => slots.iter().map(|&s| grad[s]).collect(),
        Reduction::Mean => slots.iter().map(|&s| grad[s] / group as f64).collect(),
        Reduction::Max => {
            let mut dx = vec![0.0; n];
            for (s, &i) in argmax.iter().enumerate() {
                dx[i] += grad[s];
            }
            dx
        }
    };
    vec![(input, dx)]
}

pub(super) fn patch_backward(
    g: &Graph,
    input: Var,
    size: usize,
    kind: PatchReduction,
    argmax: &[usize],
    grad: &[f64],
) -> Vec<(Var, Vec<f64>)> {
    let shape = g.shape(input);
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut dx = vec![0.0; c * h * w];
    match kind {
        PatchReduction::Max => {
            for (o, &i) in argmax.iter().enumerate() {
                dx[i] += grad[o];
            }
        }
        PatchReduction::Sum => {
            let (ph, pw) = (h / size, w / size);
            for ch in 0..c {
                for py in 0..ph {
                    for px in 0..pw {
                        let gv = grad[(ch * ph + py) * pw + px];
                        for dy in 0..size {
                            let row = (ch * h + py * size + dy) * w + px * size;
                            dx[row..row + size].iter_mut().for_each(|v| *v += gv);
                        }
                    }
                }
            }
        }
    }
    vec![(input, dx)]
}
