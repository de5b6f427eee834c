use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Op;
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};
use crate::linalg::{gemm, Layout};
use crate::tensor::Tensor;

impl Graph {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(value, Op::Reshape { input: x }))
    }

    /// Transpose of a 2-d tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = match *self.shape(x) {
            [r, c] => (r, c),
            ref s => return Err(shape_err("transpose", format!("expected 2-d, got {s:?}"))),
        };
        let value = Tensor::new([c, r], transpose_data(self.value(x).data(), r, c))?;
        Ok(self.push(value, Op::Transpose { input: x }))
    }

    /// Repeats a size-1 `axis` of `x` `n` times.
    pub fn broadcast_axis(&mut self, x: Var, axis: usize, n: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || shape[axis] != 1 {
            return Err(shape_err(
                "broadcast_axis",
                format!("axis {axis} of {shape:?} must have size 1"),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * n * inner);
        for o in 0..outer {
            let block = &src[o * inner..(o + 1) * inner];
            for _ in 0..n {
                data.extend_from_slice(block);
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = n;
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, Op::Broadcast { input: x, n, inner }))
    }

    /// Channels `start..start + len` of `x` `[C, ...]`.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = *shape.first().unwrap_or(&0);
        if start + len > c {
            return Err(shape_err(
                "slice_channels",
                format!("{start}..{} out of {c} channels", start + len),
            ));
        }
        let plane: usize = shape[1..].iter().product();
        let data = self.value(x).data()[start * plane..(start + len) * plane].to_vec();
        let mut out_shape = shape;
        out_shape[0] = len;
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, Op::SliceChannels { input: x, start }))
    }

    /// Matrix product of `[M,K]` and `[K,N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k, k2, n) = match (self.shape(a), self.shape(b)) {
            (&[m, k], &[k2, n]) => (m, k, k2, n),
            (sa, sb) => {
                return Err(shape_err("matmul", format!("expected 2-d operands, got {sa:?} and {sb:?}")))
            }
        };
        if k != k2 {
            return Err(shape_err("matmul", format!("inner dimensions {k} and {k2} differ")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            Layout::RowMajor,
            self.value(b).data(),
            Layout::RowMajor,
            &mut out,
            0.0,
        );
        let value = Tensor::new([m, n], out)?;
        Ok(self.push(value, Op::Matmul { lhs: a, rhs: b }))
    }
}

pub(crate) fn transpose_data(src: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = src[i * c + j];
        }
    }
    out
}

pub(super) fn broadcast_backward(
    g: &Graph,
    input: Var,
    n: usize,
    inner: usize,
    grad: &[f64],
) -> Vec<(Var, Vec<f64>)> {
    let len = g.value(input).numel();
    let mut dx = vec![0.0; len];
    let outer = len.checked_div(inner).unwrap_or(0);
    for o in 0..outer {
        let acc = &mut dx[o * inner..(o + 1) * inner];
        for r in 0..n {
            let src = &grad[(o * n + r) * inner..(o * n + r + 1) * inner];
            acc.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }
    vec![(input, dx)]
}

pub(super) fn matmul_backward(g: &Graph, lhs: Var, rhs: Var, grad: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let (m, k) = (g.shape(lhs)[0], g.shape(lhs)[1]);
    let n = g.shape(rhs)[1];
    let mut out = Vec::new();
    if g.requires_grad(lhs) {
        // dA = dC . B^T
        let mut da = vec![0.0; m * k];
        gemm(m, n, k, grad, Layout::RowMajor, g.value(rhs).data(), Layout::Transposed, &mut da, 0.0);
        out.push((lhs, da));
    }
    if g.requires_grad(rhs) {
        // dB = A^T . dC
        let mut db = vec![0.0; k * n];
        gemm(k, m, n, g.value(lhs).data(), Layout::Transposed, grad, Layout::RowMajor, &mut db, 0.0);
        out.push((rhs, db));
    }
    out
}
